#include "ragpipe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "ragpipe/querygen.hpp"
#include "ragpipe/snippets.hpp"

namespace ragpipe {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Passage> passages_for(const ContentSource& store, const BatchEntry& entry) {
    if (!entry.ok()) throw std::runtime_error("retrieval failed: " + entry.error);
    return fetch_content(store, entry.hits);
}

}  // namespace

const char* to_string(QuestionStatus status) {
    switch (status) {
        case QuestionStatus::Ok: return "ok";
        case QuestionStatus::Fallback: return "fallback";
        case QuestionStatus::Error: return "error";
    }
    return "unknown";
}

ResearchOutcome conduct_research(const Question& question, SearchService& service,
                                 const ContentSource& store, GenerationClient& query_generator,
                                 TextEmbedder& snippet_embedder, const PipelineConfig& config) {
    config.validate();

    ResearchOutcome outcome;
    outcome.context.question = question;

    // Initial retrieval feeding the query-generation prompt.
    const auto initial_entries = service.submit({question.text}, config.k_initial);
    const auto initial_passages = passages_for(store, initial_entries.at(0));

    QueryGenRequest req;
    req.task = question.text;
    req.context = build_initial_context(initial_passages);
    req.date = config.date.empty() ? today_iso_date() : config.date;
    req.max_iterations = config.n_generated_queries;

    // Unusable generator output (unreachable backend or an unparseable reply)
    // degrades to searching the original question alone.
    QueryListParse parse;
    try {
        parse = request_queries(query_generator, req);
        if (!parse.ok)
            outcome.warning = "query generation returned no usable list; "
                              "searching the original question only";
    } catch (const std::exception& e) {
        outcome.warning = std::string("query generation failed (") + e.what() +
                          "); searching the original question only";
    }

    std::vector<std::string> issued;
    if (parse.ok) {
        outcome.context.generated_queries = parse.queries;
        issued = parse.queries;
        if (parse.truncated)
            outcome.warning = "query generation returned surplus queries; extras dropped";
    } else {
        outcome.status = QuestionStatus::Fallback;
    }
    issued.push_back(question.text);

    const auto entries = service.submit(issued, config.k_per_query);
    for (std::size_t i = 0; i < issued.size(); ++i) {
        QueryResult result;
        result.query = issued[i];
        result.passages = passages_for(store, entries.at(i));
        outcome.context.per_query_results.push_back(std::move(result));
    }

    // Chunk retrieved passages in (query, rank) order so surviving snippets
    // are already in final prompt order.
    std::vector<Snippet> candidates;
    for (const auto& result : outcome.context.per_query_results) {
        for (const auto& p : result.passages) {
            auto windows = chunk_passage(p, config.snippet_chars, config.snippet_overlap);
            candidates.insert(candidates.end(), std::make_move_iterator(windows.begin()),
                              std::make_move_iterator(windows.end()));
        }
    }

    auto filtered =
        filter_snippets(question, candidates, snippet_embedder, config.sim_threshold);
    if (filtered.dropped_embed_failures > 0) {
        if (!outcome.warning.empty()) outcome.warning += "; ";
        outcome.warning += std::to_string(filtered.dropped_embed_failures) +
                           " snippet(s) dropped after embedding failures";
    }
    outcome.context.snippets = std::move(filtered.kept);
    return outcome;
}

AnswerRecord generate_response(const ResearchContext& ctx, GenerationClient& client,
                               const PipelineConfig& config) {
    config.validate();
    const OrderedContext ordered = order_snippets(ctx);
    return generate_answer(ctx, ordered, client, config.total_words);
}

std::vector<std::pair<std::size_t, std::size_t>> shard_ranges(std::size_t n, int parts) {
    if (parts <= 0) throw std::invalid_argument("shard_ranges: parts must be positive");
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    ranges.reserve(parts);
    const std::size_t base = n / parts;
    const std::size_t extra = n % parts;
    std::size_t begin = 0;
    for (int i = 0; i < parts; ++i) {
        const std::size_t len = base + (static_cast<std::size_t>(i) < extra ? 1 : 0);
        ranges.emplace_back(begin, begin + len);
        begin += len;
    }
    return ranges;
}

RunReport run_batch(const std::filesystem::path& questions_path,
                    const std::filesystem::path& output_path, const Index& index,
                    const ContentStore& store, const PipelineClients& clients,
                    const PipelineConfig& config, const BatchOptions& options) {
    if (!clients.query_generator || !clients.answer_generator || !clients.snippet_embedder ||
        !clients.query_embedder || !clients.tokenizer)
        throw std::invalid_argument("run_batch: all pipeline clients must be set");
    if (options.n_workers <= 0)
        throw std::invalid_argument("run_batch: n_workers must be positive");
    if (options.shard_count <= 0 || options.shard_index < 0 ||
        options.shard_index >= options.shard_count)
        throw std::invalid_argument("run_batch: shard_index must lie in [0, shard_count)");
    config.validate();

    auto questions = load_questions(questions_path);
    if (options.shard_count > 1) {
        const auto range = shard_ranges(questions.size(), options.shard_count)
                               .at(options.shard_index);
        questions = {questions.begin() + range.first, questions.begin() + range.second};
    }

    const auto run_start = Clock::now();
    SearchService service(index, *clients.query_embedder, *clients.tokenizer);

    std::vector<AnswerRecord> records(questions.size());
    RunReport report;
    report.questions.resize(questions.size());

    const auto process = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto start = Clock::now();
            QuestionReport& qr = report.questions[i];
            qr.id = questions[i].id;
            try {
                auto outcome = conduct_research(questions[i], service, store,
                                                *clients.query_generator,
                                                *clients.snippet_embedder, config);
                auto record = generate_response(outcome.context, *clients.answer_generator,
                                                config);
                qr.status = outcome.status;
                qr.message = outcome.warning;
                qr.num_unique_docs = record.stats.num_unique_docs;
                qr.num_snippets = record.stats.num_snippets;
                qr.prompt_chars = record.stats.prompt_chars;
                records[i] = std::move(record);
            } catch (const std::exception& e) {
                qr.status = QuestionStatus::Error;
                qr.message = e.what();
                records[i] = AnswerRecord{};  // placeholder keeps output aligned to input
                records[i].question_id = questions[i].id;
            }
            qr.wall_time_seconds = seconds_since(start);
        }
    };

    const int n_workers = static_cast<int>(std::min<std::size_t>(
        options.n_workers, std::max<std::size_t>(questions.size(), 1)));
    if (n_workers <= 1) {
        process(0, questions.size());
    } else {
        const auto ranges = shard_ranges(questions.size(), n_workers);
        std::vector<std::thread> workers;
        workers.reserve(ranges.size());
        for (const auto& [begin, end] : ranges)
            workers.emplace_back(process, begin, end);
        for (auto& w : workers) w.join();
    }

    for (const auto& qr : report.questions) {
        switch (qr.status) {
            case QuestionStatus::Ok: report.ok_count += 1; break;
            case QuestionStatus::Fallback: report.fallback_count += 1; break;
            case QuestionStatus::Error: report.error_count += 1; break;
        }
    }
    report.elapsed_seconds = seconds_since(run_start);

    write_answers(records, output_path);
    if (options.stats_path) emit_stats(report, *options.stats_path);
    return report;
}

void emit_stats(const RunReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write stats file " + path.string());
    for (const auto& qr : report.questions) {
        nlohmann::ordered_json line;
        line["id"] = qr.id;
        line["num_unique_docs"] = qr.num_unique_docs;
        line["num_snippets"] = qr.num_snippets;
        line["prompt_chars"] = qr.prompt_chars;
        line["status"] = to_string(qr.status);
        if (!qr.message.empty()) line["message"] = qr.message;
        out << line.dump() << '\n';
    }
    nlohmann::ordered_json summary;
    summary["questions"] = report.questions.size();
    summary["ok"] = report.ok_count;
    summary["fallback"] = report.fallback_count;
    summary["error"] = report.error_count;
    summary["elapsed_seconds"] = report.elapsed_seconds;
    out << summary.dump() << '\n';
    if (!out) throw std::runtime_error("failed writing stats file " + path.string());
}

std::pair<AnswerRecord, AnswerRecord> compare_generators(const ResearchContext& ctx,
                                                         GenerationClient& client_a,
                                                         GenerationClient& client_b,
                                                         const PipelineConfig& config) {
    config.validate();
    const OrderedContext ordered = order_snippets(ctx);
    const auto run = [&](GenerationClient& client) {
        try {
            return generate_answer(ctx, ordered, client, config.total_words);
        } catch (const std::exception&) {
            // Keep the prompt and provenance so the two sides stay comparable.
            AnswerRecord record;
            record.question_id = ctx.question.id;
            record.doc_ids = dedup_documents(ctx);
            record.final_prompt = build_answer_prompt(assemble_context(ordered),
                                                      ctx.question.text, config.total_words);
            record.stats.num_unique_docs = static_cast<int>(record.doc_ids.size());
            record.stats.num_snippets = static_cast<int>(ordered.snippets.size());
            record.stats.prompt_chars = static_cast<int>(utf8_length(record.final_prompt));
            return record;
        }
    };
    return {run(client_a), run(client_b)};
}

}  // namespace ragpipe
