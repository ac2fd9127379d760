#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ragpipe/clients.hpp"
#include "ragpipe/core.hpp"

namespace ragpipe {

struct SnippetProvenance {
    int query_ordinal = 0;      // 0..n-1 generated queries, n = original question
    int passage_rank = 0;       // 1-based rank within the retrieving query
    std::size_t char_start = 0; // window start within the passage
};

// Snippets in final prompt order with the provenance that determined it.
struct OrderedContext {
    std::vector<Snippet> snippets;
    std::vector<SnippetProvenance> provenance;  // parallel to snippets
};

// The embedded template (resources/answer_prompt.txt).
std::string_view answer_prompt_template();

// Sorts context snippets by (retrieving query, passage rank, window start).
// Snippet order is provenance order, not a score order: a passage retrieved
// by several queries contributes its snippets at each position it earned.
OrderedContext order_snippets(const ResearchContext& ctx);

// Snippet texts joined with single newlines.
std::string assemble_context(const OrderedContext& ordered);

std::string build_answer_prompt(const std::string& context, const std::string& question,
                                int total_words);

// Document ids in first-occurrence order over the concatenated per-query
// passage lists; duplicates kept only the first time they appear.
std::vector<std::string> dedup_documents(const ResearchContext& ctx);

// Builds the final prompt, calls the client with a blank system role, and
// assembles the record (answer, doc ids, exact prompt, stats).
AnswerRecord generate_answer(const ResearchContext& ctx, const OrderedContext& ordered,
                             GenerationClient& client, int total_words);

}  // namespace ragpipe
