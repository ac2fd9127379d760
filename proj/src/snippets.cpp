#include "ragpipe/snippets.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace ragpipe {

std::vector<Snippet> chunk_passage(const Passage& passage, int size_chars, int overlap_chars) {
    if (size_chars <= 0) throw std::invalid_argument("chunk_passage: size_chars must be positive");
    if (overlap_chars < 0 || overlap_chars >= size_chars)
        throw std::invalid_argument("chunk_passage: overlap must be in [0, size_chars)");

    const auto offsets = utf8_offsets(passage.text);
    const std::size_t len = offsets.size() - 1;  // scalar count
    std::vector<Snippet> out;
    if (len == 0) return out;

    const std::size_t size = static_cast<std::size_t>(size_chars);
    const std::size_t stride = size - static_cast<std::size_t>(overlap_chars);
    std::size_t last_end = 0;
    for (std::size_t start = 0;; start += stride) {
        const std::size_t end = std::min(start + size, len);
        if (!out.empty() && end <= last_end) break;  // contained in the previous window
        Snippet s;
        s.doc_id = passage.doc_id;
        s.passage_index = passage.passage_index;
        s.char_begin = start;
        s.char_end = end;
        s.text = passage.text.substr(offsets[start], offsets[end] - offsets[start]);
        out.push_back(std::move(s));
        last_end = end;
        if (end == len) break;
    }
    return out;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("cosine_similarity: dimension mismatch (" +
                                    std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) +
                                    ")");
    if (a.dim() == 0) throw std::invalid_argument("cosine_similarity: empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

FilterResult filter_snippets(const Question& question, const std::vector<Snippet>& candidates,
                             TextEmbedder& embedder, double threshold) {
    FilterResult result;
    if (candidates.empty()) return result;

    const EmbeddingVector question_vec = embedder.embed_texts({question.text}).at(0);

    // Embed each distinct snippet text once; duplicates (the same window
    // retrieved via several queries) reuse the cached vector.
    std::unordered_map<std::string, EmbeddingVector> cache;
    std::vector<std::string> todo;
    for (const auto& s : candidates)
        if (cache.emplace(s.text, EmbeddingVector{}).second) todo.push_back(s.text);

    bool batch_ok = false;
    try {
        auto vecs = embedder.embed_texts(todo);
        if (vecs.size() == todo.size()) {
            for (std::size_t i = 0; i < todo.size(); ++i) cache[todo[i]] = std::move(vecs[i]);
            batch_ok = true;
        }
    } catch (const std::exception&) {
        // fall through to per-snippet embedding below
    }
    if (!batch_ok) {
        for (const auto& text : todo) {
            try {
                cache[text] = embedder.embed_texts({text}).at(0);
            } catch (const std::exception&) {
                cache.erase(text);  // marked failed; counted per candidate below
            }
        }
    }

    for (const auto& s : candidates) {
        const auto it = cache.find(s.text);
        if (it == cache.end() || it->second.dim() == 0) {
            result.dropped_embed_failures += 1;
            continue;
        }
        const double sim = cosine_similarity(question_vec, it->second);
        if (sim >= threshold) {
            Snippet kept = s;
            kept.similarity = sim;
            result.kept.push_back(std::move(kept));
        } else {
            result.dropped_below_threshold += 1;
        }
    }
    return result;
}

}  // namespace ragpipe
