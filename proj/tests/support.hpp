// Shared helpers for the test binaries: corpus generators, independent
// scoring oracles, instrumented test doubles.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragpipe/clients.hpp"
#include "ragpipe/retrieval.hpp"
#include "ragpipe/snippets.hpp"

namespace testsupport {

// ---------------------------------------------------------------------------
// Deterministic corpus generation
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& word_pool() {
    static const std::vector<std::string> pool = {
        "alpine",  "basalt",  "cedar",   "delta",   "ember",   "fjord",   "glacier",
        "harbor",  "iris",    "juniper", "kelp",    "lantern", "meadow",  "nimbus",
        "orchid",  "prairie", "quartz",  "raven",   "sequoia", "tundra",  "umber",
        "velvet",  "willow",  "xenon",   "yarrow",  "zephyr",  "amber",   "breeze",
        "current", "drift",   "estuary", "fern",    "grove",   "heath",   "inlet",
        "jade",    "knoll",   "lagoon",  "mesa",    "north",
    };
    return pool;
}

inline std::string random_text(std::mt19937& rng, int n_tokens) {
    const auto& pool = word_pool();
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::string text;
    for (int i = 0; i < n_tokens; ++i) {
        if (i > 0) text += ' ';
        text += pool[pick(rng)];
    }
    return text;
}

inline std::vector<ragpipe::Document> random_corpus(std::mt19937& rng, int n_docs,
                                                    int min_tokens, int max_tokens) {
    std::uniform_int_distribution<int> length(min_tokens, max_tokens);
    std::vector<ragpipe::Document> docs;
    docs.reserve(n_docs);
    for (int d = 0; d < n_docs; ++d)
        docs.push_back({"doc-" + std::to_string(d), random_text(rng, length(rng))});
    return docs;
}

// ---------------------------------------------------------------------------
// Independent scoring oracles (no shared code with the library's search path)
// ---------------------------------------------------------------------------

inline double oracle_maxsim(const ragpipe::TokenEmbeddingMatrix& query,
                            const ragpipe::TokenEmbeddingMatrix& passage) {
    double total = 0.0;
    for (std::size_t q = 0; q < query.rows; ++q) {
        double best = -1e300;
        for (std::size_t p = 0; p < passage.rows; ++p) {
            double dot = 0.0;
            for (std::size_t c = 0; c < query.dim; ++c)
                dot += double(query.values[q * query.dim + c]) *
                       double(passage.values[p * passage.dim + c]);
            if (dot > best) best = dot;
        }
        total += best;
    }
    return total;
}

struct OracleHit {
    std::string doc_id;
    int passage_index;
    double score;
};

// Full scan + total sort; the reference for top-k rank and tie order.
inline std::vector<OracleHit> oracle_search(const ragpipe::Index& index,
                                            const ragpipe::TokenEmbeddingMatrix& query, int k) {
    std::vector<OracleHit> all;
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto& key = index.key(i);
        all.push_back({key.doc_id, key.passage_index, oracle_maxsim(query, index.matrix(i))});
    }
    std::sort(all.begin(), all.end(), [](const OracleHit& a, const OracleHit& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
        return a.passage_index < b.passage_index;
    });
    if (all.size() > static_cast<std::size_t>(k)) all.resize(k);
    return all;
}

// ---------------------------------------------------------------------------
// Instrumented doubles
// ---------------------------------------------------------------------------

// Returns pre-assigned vectors by exact text; unknown texts optionally fail.
class ScriptedTextEmbedder final : public ragpipe::TextEmbedder {
public:
    std::unordered_map<std::string, std::vector<double>> table;
    std::set<std::string> failing;  // texts whose embedding "fails"
    int calls = 0;

    std::vector<ragpipe::EmbeddingVector> embed_texts(
        const std::vector<std::string>& texts) override {
        if (texts.empty()) throw std::invalid_argument("embed_texts: empty input batch");
        ++calls;
        std::vector<ragpipe::EmbeddingVector> out;
        for (const auto& t : texts) {
            if (failing.count(t)) throw std::runtime_error("scripted embedding failure");
            const auto it = table.find(t);
            if (it == table.end())
                throw std::runtime_error("scripted embedder has no vector for: " + t);
            out.push_back(ragpipe::EmbeddingVector{it->second});
        }
        return out;
    }
};

// Counts find() calls to prove which component touches passage text.
class CountingContentSource final : public ragpipe::ContentSource {
public:
    explicit CountingContentSource(const ragpipe::ContentSource& inner) : inner_(inner) {}
    std::optional<ragpipe::Passage> find(const std::string& doc_id,
                                         int passage_index) const override {
        ++finds;
        return inner_.find(doc_id, passage_index);
    }
    mutable int finds = 0;

private:
    const ragpipe::ContentSource& inner_;
};

// Counts embed_tokens() calls to prove what the scoring path touches.
class CountingTokenEmbedder final : public ragpipe::TokenEmbedder {
public:
    explicit CountingTokenEmbedder(ragpipe::TokenEmbedder& inner) : inner_(inner) {}
    ragpipe::TokenEmbeddingMatrix embed_tokens(const std::string& text,
                                               const ragpipe::Tokenizer& tokenizer) override {
        ++calls;
        return inner_.embed_tokens(text, tokenizer);
    }
    std::size_t dim() const override { return inner_.dim(); }
    std::string id() const override { return inner_.id(); }
    int calls = 0;

private:
    ragpipe::TokenEmbedder& inner_;
};

// ---------------------------------------------------------------------------
// Exact-similarity construction
// ---------------------------------------------------------------------------

// A 2-d vector whose computed cosine against (1, 0) is exactly the double c.
// cosine(a,b) = c / sqrt(c^2 + y^2); searches y near sqrt(1 - c^2) until the
// full double-rounded expression lands on c. Throws if no such y exists
// within the search window (it always does for |c| well below 1).
inline ragpipe::EmbeddingVector unit_vector_with_cosine(double c) {
    const ragpipe::EmbeddingVector question{{1.0, 0.0}};
    double y = std::sqrt(1.0 - c * c);
    auto computes_exactly = [&](double candidate) {
        const ragpipe::EmbeddingVector v{{c, candidate}};
        return ragpipe::cosine_similarity(question, v) == c;
    };
    if (computes_exactly(y)) return ragpipe::EmbeddingVector{{c, y}};
    for (int direction : {+1, -1}) {
        double probe = y;
        for (int step = 0; step < 4096; ++step) {
            probe = direction > 0 ? std::nextafter(probe, 2.0) : std::nextafter(probe, 0.0);
            if (computes_exactly(probe)) return ragpipe::EmbeddingVector{{c, probe}};
        }
    }
    throw std::runtime_error("no representable companion for cosine " + std::to_string(c));
}

// ---------------------------------------------------------------------------
// Filesystem scratch space
// ---------------------------------------------------------------------------

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        for (int i = 0; i < 10000; ++i) {
            auto candidate = base / (tag + "-" + std::to_string(i));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("cannot create temp dir for " + tag);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testsupport
