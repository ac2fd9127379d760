#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ragpipe/answer.hpp"
#include "ragpipe/clients.hpp"
#include "ragpipe/core.hpp"
#include "ragpipe/retrieval.hpp"

namespace ragpipe {

enum class QuestionStatus { Ok, Fallback, Error };
const char* to_string(QuestionStatus status);

struct QuestionReport {
    std::string id;
    QuestionStatus status = QuestionStatus::Ok;
    int num_unique_docs = 0;
    int num_snippets = 0;
    int prompt_chars = 0;
    double wall_time_seconds = 0.0;
    std::string message;  // warning or error detail
};

struct RunReport {
    std::vector<QuestionReport> questions;  // input order, one entry per question
    int ok_count = 0;
    int fallback_count = 0;
    int error_count = 0;
    double elapsed_seconds = 0.0;
};

// Backends shared by all workers. All pointers must be non-null; the pointees
// must be safe for concurrent calls.
struct PipelineClients {
    GenerationClient* query_generator = nullptr;
    GenerationClient* answer_generator = nullptr;
    TextEmbedder* snippet_embedder = nullptr;
    TokenEmbedder* query_embedder = nullptr;
    const Tokenizer* tokenizer = nullptr;
};

struct ResearchOutcome {
    ResearchContext context;
    QuestionStatus status = QuestionStatus::Ok;
    std::string warning;
};

// The research stage: initial retrieval for context, follow-up query
// generation, retrieval per query (generated queries then the original
// question), then chunking and similarity filtering. Unusable query-generation
// output degrades to searching the original question alone (status Fallback);
// retrieval failures throw.
ResearchOutcome conduct_research(const Question& question, SearchService& service,
                                 const ContentSource& store, GenerationClient& query_generator,
                                 TextEmbedder& snippet_embedder, const PipelineConfig& config);

// The response stage: order snippets, assemble the context, build the prompt,
// generate, and record the deduplicated document list.
AnswerRecord generate_response(const ResearchContext& ctx, GenerationClient& client,
                               const PipelineConfig& config);

struct BatchOptions {
    int n_workers = 2;
    std::optional<std::filesystem::path> stats_path;
    // Process-per-shard mode: handle only shard shard_index of shard_count.
    int shard_index = 0;
    int shard_count = 1;
};

// Contiguous [begin, end) ranges of a ceiling split of n items into parts.
std::vector<std::pair<std::size_t, std::size_t>> shard_ranges(std::size_t n, int parts);

// Processes the question file with n_workers threads sharing one retrieval
// service. Per-question failures become error records; the batch never
// aborts. Output order equals input order regardless of completion order.
RunReport run_batch(const std::filesystem::path& questions_path,
                    const std::filesystem::path& output_path, const Index& index,
                    const ContentStore& store, const PipelineClients& clients,
                    const PipelineConfig& config, const BatchOptions& options = {});

// Per-question stats JSONL ({"id","num_unique_docs","num_snippets",
// "prompt_chars"}) followed by one aggregate summary line.
void emit_stats(const RunReport& report, const std::filesystem::path& path);

// Runs two generators on the identical final prompt for side-by-side output.
// A failing client yields an empty answer in its slot; the other still runs.
std::pair<AnswerRecord, AnswerRecord> compare_generators(const ResearchContext& ctx,
                                                         GenerationClient& client_a,
                                                         GenerationClient& client_b,
                                                         const PipelineConfig& config);

}  // namespace ragpipe
