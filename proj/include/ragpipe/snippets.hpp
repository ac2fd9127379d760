#pragma once

#include <vector>

#include "ragpipe/clients.hpp"
#include "ragpipe/core.hpp"

namespace ragpipe {

// Sliding character windows of size_chars with overlap_chars overlap
// (stride = size - overlap). The final window ends at the text length; a
// window fully contained in its predecessor is dropped. Positions count
// Unicode scalar values. Empty text yields no snippets.
std::vector<Snippet> chunk_passage(const Passage& passage, int size_chars, int overlap_chars);

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct FilterResult {
    std::vector<Snippet> kept;  // subsequence of the input, similarity filled in
    int dropped_below_threshold = 0;
    int dropped_embed_failures = 0;
};

// Keeps snippets whose cosine similarity to the question is >= threshold
// (inclusive), preserving input order. The question is embedded once; a
// snippet whose embedding fails is dropped with a warning count, not fatally.
FilterResult filter_snippets(const Question& question, const std::vector<Snippet>& candidates,
                             TextEmbedder& embedder, double threshold);

}  // namespace ragpipe
