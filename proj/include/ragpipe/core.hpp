#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ragpipe {

// One input task from the question file.
struct Question {
    std::string id;
    std::string text;
};

// One corpus document, the unit of segmentation.
struct Document {
    std::string doc_id;
    std::string text;
};

// A fixed-size token window of a document; the unit of indexing and retrieval.
struct Passage {
    std::string doc_id;
    int passage_index = 0;        // 0-based ordinal within the document
    std::size_t token_begin = 0;  // [token_begin, token_end) in document tokens
    std::size_t token_end = 0;
    std::string text;             // detokenized span
};

// A character window of a passage, scored against the originating question.
// Character positions count Unicode scalar values, not bytes.
struct Snippet {
    std::string doc_id;
    int passage_index = 0;
    std::size_t char_begin = 0;  // [char_begin, char_end) within the passage text
    std::size_t char_end = 0;
    std::string text;
    double similarity = 0.0;  // cosine similarity to the question, set by the filter
};

struct PipelineConfig {
    int k_initial = 3;            // passages fetched for the query-generation context
    int n_generated_queries = 2;  // max_iterations in the query-generation prompt
    int k_per_query = 3;          // passages kept per issued query
    int passage_tokens = 450;
    int snippet_chars = 1000;
    int snippet_overlap = 100;
    double sim_threshold = 0.35;
    int total_words = 200;
    std::string date;  // rendered into the query-generation prompt; empty means today

    // Throws std::invalid_argument on an out-of-range field.
    void validate() const;
};

struct QueryResult {
    std::string query;
    std::vector<Passage> passages;  // rank order
};

// Everything gathered for one question during the research stage.
struct ResearchContext {
    Question question;
    std::vector<std::string> generated_queries;
    // Ordered [generated query 1, ..., generated query n, original question].
    std::vector<QueryResult> per_query_results;
    // Surviving snippets in final prompt order.
    std::vector<Snippet> snippets;
};

struct AnswerStats {
    int num_unique_docs = 0;
    int num_snippets = 0;
    int prompt_chars = 0;
};

struct AnswerRecord {
    std::string question_id;
    std::string answer;
    std::vector<std::string> doc_ids;  // first-occurrence order, no duplicates
    std::string final_prompt;
    AnswerStats stats;
};

// JSONL input: {"id": string, "question": string} per line.
// Throws std::runtime_error with the offending line number on parse errors
// and names the id on duplicates.
std::vector<Question> load_questions(const std::filesystem::path& path);

// JSONL corpus: {"doc_id": string, "text": string} per line.
std::vector<Document> load_corpus(const std::filesystem::path& path);

// JSONL output: {"id", "answer", "doc_ids", "final_prompt"} per line.
void write_answers(const std::vector<AnswerRecord>& records,
                   const std::filesystem::path& path);

// Reads records written by write_answers. Stats are re-derived from the
// serialized fields where possible (num_snippets is not serialized).
std::vector<AnswerRecord> read_answers(const std::filesystem::path& path);

// UTF-8 helpers used for character-window chunking. Positions count Unicode
// scalar values; a malformed byte counts as one scalar.
std::size_t utf8_length(std::string_view text);
// Byte offset of every scalar boundary, plus a final entry at text.size().
std::vector<std::size_t> utf8_offsets(std::string_view text);
std::string utf8_substr(std::string_view text, std::size_t pos, std::size_t count);

// Local date as YYYY-MM-DD, the default for PipelineConfig::date.
std::string today_iso_date();

}  // namespace ragpipe
