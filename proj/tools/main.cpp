// Command-line front end: build-index, run, compare.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ragpipe/pipeline.hpp"
#include "ragpipe/snippets.hpp"

namespace {

using nlohmann::json;
using namespace ragpipe;

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file " + path);
    return json::parse(in);
}

PipelineConfig pipeline_config_from(const json& cfg) {
    PipelineConfig pc;
    if (!cfg.contains("pipeline")) return pc;
    const json& p = cfg["pipeline"];
    pc.k_initial = p.value("k_initial", pc.k_initial);
    pc.n_generated_queries = p.value("n_generated_queries", pc.n_generated_queries);
    pc.k_per_query = p.value("k_per_query", pc.k_per_query);
    pc.passage_tokens = p.value("passage_tokens", pc.passage_tokens);
    pc.snippet_chars = p.value("snippet_chars", pc.snippet_chars);
    pc.snippet_overlap = p.value("snippet_overlap", pc.snippet_overlap);
    pc.sim_threshold = p.value("sim_threshold", pc.sim_threshold);
    pc.total_words = p.value("total_words", pc.total_words);
    pc.date = p.value("date", pc.date);
    pc.validate();
    return pc;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

json client_section(const json& cfg, const std::string& name) {
    if (cfg.contains("clients") && cfg["clients"].contains(name)) return cfg["clients"][name];
    return json::object();
}

GenerationClientConfig generation_config(const json& cfg, const std::string& name) {
    auto gc = GenerationClientConfig::from_json(client_section(cfg, name));
    gc.endpoint = env_or("RAGPIPE_GENERATION_ENDPOINT", gc.endpoint);
    gc.api_key = env_or("RAGPIPE_API_KEY", gc.api_key);
    return gc;
}

EmbeddingClientConfig embedding_config(const json& cfg, const std::string& name,
                                       EmbeddingMode mode, const char* endpoint_env) {
    json section = client_section(cfg, name);
    if (!section.contains("mode"))
        section["mode"] = mode == EmbeddingMode::PerText ? "per_text" : "per_token";
    auto ec = EmbeddingClientConfig::from_json(section);
    ec.endpoint = env_or(endpoint_env, ec.endpoint);
    ec.api_key = env_or("RAGPIPE_API_KEY", ec.api_key);
    return ec;
}

// Named generation client: built-in mock names or a config section.
std::unique_ptr<GenerationClient> make_generation_client(const json& cfg,
                                                         const std::string& name) {
    if (name == "echo") return std::make_unique<EchoGenerationClient>();
    if (name == "simulated" || name == "mock")
        return std::make_unique<SimulatedGenerationClient>();
    if (!cfg.contains("clients") || !cfg["clients"].contains(name))
        throw std::runtime_error("unknown client \"" + name +
                                 "\": not a built-in mock and not a config section");
    return std::make_unique<HttpGenerationClient>(generation_config(cfg, name));
}

// The token embedder must match the one that built the index. Hash ids are
// reconstructed locally; anything else needs a configured HTTP backend.
std::unique_ptr<TokenEmbedder> make_token_embedder(const json& cfg,
                                                   const IndexMetadata& meta) {
    if (auto hash = HashTokenEmbedder::from_id(meta.embedder_id)) return hash;
    auto ec = embedding_config(cfg, "token_embedding", EmbeddingMode::PerToken,
                               "RAGPIPE_TOKEN_EMBEDDING_ENDPOINT");
    if (ec.endpoint.empty())
        throw std::runtime_error("index was built with embedder \"" + meta.embedder_id +
                                 "\"; configure clients.token_embedding to match it");
    if (ec.dim == 0) ec.dim = meta.dim;
    return std::make_unique<HttpTokenEmbedder>(std::move(ec));
}

int cmd_build_index(const std::string& corpus_path, const std::string& out_dir,
                    int passage_tokens, const std::string& config_path) {
    const json cfg = load_config_file(config_path);
    const auto documents = load_corpus(corpus_path);
    const WhitespaceTokenizer tokenizer;

    std::unique_ptr<TokenEmbedder> embedder;
    const json section = client_section(cfg, "token_embedding");
    if (!section.empty() && section.contains("endpoint")) {
        embedder = std::make_unique<HttpTokenEmbedder>(embedding_config(
            cfg, "token_embedding", EmbeddingMode::PerToken, "RAGPIPE_TOKEN_EMBEDDING_ENDPOINT"));
    } else {
        embedder = std::make_unique<HashTokenEmbedder>();
    }

    std::vector<Passage> passages;
    for (const auto& doc : documents) {
        auto segments = segment_document(doc, passage_tokens, tokenizer);
        passages.insert(passages.end(), std::make_move_iterator(segments.begin()),
                        std::make_move_iterator(segments.end()));
    }
    auto built = build_index(passages, *embedder, tokenizer, passage_tokens);
    save_index(built.index, built.store, out_dir);
    std::cout << "indexed " << documents.size() << " documents into " << built.index.size()
              << " passages (dim " << built.index.metadata().dim << ") at " << out_dir << "\n";
    return 0;
}

struct RunBackends {
    std::unique_ptr<GenerationClient> generation;
    std::unique_ptr<TextEmbedder> text_embedder;
    std::unique_ptr<TokenEmbedder> token_embedder;
};

RunBackends make_backends(const json& cfg, const IndexMetadata& meta, bool mock) {
    RunBackends b;
    b.token_embedder = make_token_embedder(cfg, meta);
    if (mock) {
        b.generation = std::make_unique<SimulatedGenerationClient>();
        b.text_embedder = std::make_unique<HashTextEmbedder>();
    } else {
        b.generation = std::make_unique<HttpGenerationClient>(generation_config(cfg, "generation"));
        b.text_embedder = std::make_unique<HttpTextEmbedder>(embedding_config(
            cfg, "text_embedding", EmbeddingMode::PerText, "RAGPIPE_TEXT_EMBEDDING_ENDPOINT"));
    }
    return b;
}

std::pair<int, int> parse_shard(const std::string& arg) {
    int index = 0, count = 1;
    if (arg.empty()) return {index, count};
    const auto slash = arg.find('/');
    if (slash == std::string::npos)
        throw std::runtime_error("--shard expects i/N, e.g. 0/2");
    index = std::stoi(arg.substr(0, slash));
    count = std::stoi(arg.substr(slash + 1));
    return {index, count};
}

int cmd_run(const std::string& questions_path, const std::string& index_dir,
            const std::string& out_path, int workers, const std::string& config_path,
            const std::string& stats_path, bool mock, const std::string& shard) {
    const json cfg = load_config_file(config_path);
    const PipelineConfig pipeline_cfg = pipeline_config_from(cfg);
    auto built = load_index(index_dir);
    auto backends = make_backends(cfg, built.index.metadata(), mock);

    const WhitespaceTokenizer tokenizer;
    PipelineClients clients;
    clients.query_generator = backends.generation.get();
    clients.answer_generator = backends.generation.get();
    clients.snippet_embedder = backends.text_embedder.get();
    clients.query_embedder = backends.token_embedder.get();
    clients.tokenizer = &tokenizer;

    BatchOptions options;
    options.n_workers = workers;
    if (!stats_path.empty()) options.stats_path = stats_path;
    std::tie(options.shard_index, options.shard_count) = parse_shard(shard);

    const RunReport report = run_batch(questions_path, out_path, built.index, built.store,
                                       clients, pipeline_cfg, options);
    std::cout << report.questions.size() << " questions: " << report.ok_count << " ok, "
              << report.fallback_count << " fallback, " << report.error_count << " error ("
              << report.elapsed_seconds << "s)\n";
    for (const auto& q : report.questions)
        if (q.status == QuestionStatus::Error)
            std::cerr << q.id << ": " << q.message << "\n";
    return report.error_count == 0 ? 0 : 1;
}

int cmd_compare(const std::string& questions_path, const std::string& index_dir,
                const std::string& client_a, const std::string& client_b,
                const std::string& out_path, const std::string& config_path, bool mock) {
    const json cfg = load_config_file(config_path);
    const PipelineConfig pipeline_cfg = pipeline_config_from(cfg);
    auto built = load_index(index_dir);
    auto backends = make_backends(cfg, built.index.metadata(), mock);
    auto gen_a = make_generation_client(cfg, client_a);
    auto gen_b = make_generation_client(cfg, client_b);

    const WhitespaceTokenizer tokenizer;
    SearchService service(built.index, *backends.token_embedder, tokenizer);
    const auto questions = load_questions(questions_path);

    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw std::runtime_error("cannot write " + out_path);
    }
    std::ostream& out = out_path.empty() ? std::cout : file;

    int errors = 0;
    for (const auto& question : questions) {
        try {
            auto outcome = conduct_research(question, service, built.store,
                                            *backends.generation, *backends.text_embedder,
                                            pipeline_cfg);
            auto [a, b] = compare_generators(outcome.context, *gen_a, *gen_b, pipeline_cfg);
            nlohmann::ordered_json line;
            line["id"] = question.id;
            line["answer_a"] = a.answer;
            line["answer_b"] = b.answer;
            line["doc_ids"] = a.doc_ids;
            line["final_prompt"] = a.final_prompt;
            out << line.dump() << "\n";
        } catch (const std::exception& e) {
            ++errors;
            std::cerr << question.id << ": " << e.what() << "\n";
        }
    }
    return errors == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage research-and-respond pipeline over a late-interaction index"};
    app.require_subcommand(1);

    auto* build = app.add_subcommand("build-index", "Segment, embed and persist a corpus");
    std::string corpus_path, build_out, build_config;
    int passage_tokens = 450;
    build->add_option("--corpus", corpus_path, "corpus JSONL ({\"doc_id\",\"text\"})")
        ->required();
    build->add_option("--out", build_out, "output index directory")->required();
    build->add_option("--passage-tokens", passage_tokens, "tokens per passage");
    build->add_option("--config", build_config, "JSON config with client sections");

    auto* run = app.add_subcommand("run", "Answer a question file against an index");
    std::string questions_path, index_dir, run_out, run_config, stats_path, shard;
    int workers = 2;
    bool mock = false;
    run->add_option("--questions", questions_path, "questions JSONL ({\"id\",\"question\"})")
        ->required();
    run->add_option("--index", index_dir, "index directory from build-index")->required();
    run->add_option("--out", run_out, "answers JSONL output")->required();
    run->add_option("--workers", workers, "worker threads");
    run->add_option("--config", run_config, "JSON config (pipeline + clients)");
    run->add_option("--stats", stats_path, "per-question stats JSONL output");
    run->add_option("--shard", shard, "process-per-shard slice, i/N");
    run->add_flag("--mock", mock, "use deterministic in-process backends");

    auto* compare = app.add_subcommand("compare",
                                       "Run two generation clients on identical prompts");
    std::string cmp_questions, cmp_index, client_a, client_b, cmp_out, cmp_config;
    bool cmp_mock = false;
    compare->add_option("--questions", cmp_questions, "questions JSONL")->required();
    compare->add_option("--index", cmp_index, "index directory")->required();
    compare->add_option("--client-a", client_a, "client name (config section, echo, simulated)")
        ->required();
    compare->add_option("--client-b", client_b, "client name")->required();
    compare->add_option("--out", cmp_out, "side-by-side JSONL output (default stdout)");
    compare->add_option("--config", cmp_config, "JSON config (pipeline + clients)");
    compare->add_flag("--mock", cmp_mock, "use deterministic backends for the research stage");

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed())
            return cmd_build_index(corpus_path, build_out, passage_tokens, build_config);
        if (run->parsed())
            return cmd_run(questions_path, index_dir, run_out, workers, run_config, stats_path,
                           mock, shard);
        return cmd_compare(cmp_questions, cmp_index, client_a, client_b, cmp_out, cmp_config,
                           cmp_mock);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
