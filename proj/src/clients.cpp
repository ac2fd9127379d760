#include "ragpipe/clients.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace ragpipe {
namespace {

using nlohmann::json;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = kFnvOffset ^ (seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);
    for (const unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

// Deterministic value stream independent of the standard library's
// distribution implementations.
struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    // Uniform in [-1, 1).
    double symmetric() { return 2.0 * ((next() >> 11) * 0x1.0p-53) - 1.0; }
};

std::string extract_between(const std::string& text, std::string_view after,
                            std::string_view until) {
    const auto start = text.find(after);
    if (start == std::string::npos) return {};
    const auto begin = start + after.size();
    const auto end = text.find(until, begin);
    if (end == std::string::npos) return {};
    return text.substr(begin, end - begin);
}

}  // namespace

void normalize_rows(TokenEmbeddingMatrix& m) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        float* row = m.values.data() + r * m.dim;
        double norm_sq = 0.0;
        for (std::size_t c = 0; c < m.dim; ++c) norm_sq += double(row[c]) * double(row[c]);
        const double norm = std::sqrt(norm_sq);
        if (!(norm > 0.0))
            throw std::invalid_argument("normalize_rows: zero row at index " + std::to_string(r));
        for (std::size_t c = 0; c < m.dim; ++c)
            row[c] = static_cast<float>(double(row[c]) / norm);
    }
}

// --------------------------------------------------------------------------
// Mocks
// --------------------------------------------------------------------------

HashTokenEmbedder::HashTokenEmbedder(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw std::invalid_argument("HashTokenEmbedder: dim must be positive");
}

TokenEmbeddingMatrix HashTokenEmbedder::embed_tokens(const std::string& text,
                                                     const Tokenizer& tokenizer) {
    const auto tokens = tokenizer.tokenize(text);
    if (tokens.empty()) throw std::invalid_argument("embed_tokens: no tokens in text");
    TokenEmbeddingMatrix m;
    m.rows = tokens.size();
    m.dim = dim_;
    m.values.resize(m.rows * m.dim);
    for (std::size_t r = 0; r < tokens.size(); ++r) {
        SplitMix64 rng{fnv1a64(tokens[r], seed_)};
        double norm_sq = 0.0;
        std::vector<double> row(dim_);
        for (std::size_t c = 0; c < dim_; ++c) {
            row[c] = rng.symmetric();
            norm_sq += row[c] * row[c];
        }
        if (norm_sq == 0.0) {  // vanishing chance, but keep the row usable
            row[0] = 1.0;
            norm_sq = 1.0;
        }
        const double norm = std::sqrt(norm_sq);
        for (std::size_t c = 0; c < dim_; ++c)
            m.values[r * dim_ + c] = static_cast<float>(row[c] / norm);
    }
    return m;
}

std::string HashTokenEmbedder::id() const {
    std::ostringstream s;
    s << "hash-token-v1:dim=" << dim_ << ":seed=" << seed_;
    return s.str();
}

std::unique_ptr<HashTokenEmbedder> HashTokenEmbedder::from_id(const std::string& id) {
    unsigned long long dim = 0, seed = 0;
    if (std::sscanf(id.c_str(), "hash-token-v1:dim=%llu:seed=%llu", &dim, &seed) != 2)
        return nullptr;
    if (dim == 0) return nullptr;
    return std::make_unique<HashTokenEmbedder>(static_cast<std::size_t>(dim),
                                               static_cast<std::uint64_t>(seed));
}

HashTextEmbedder::HashTextEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw std::invalid_argument("HashTextEmbedder: dim must be positive");
}

EmbeddingVector HashTextEmbedder::embed_one(const std::string& text) const {
    EmbeddingVector v;
    v.values.assign(dim_, 0.0);
    // Character n-grams, n = 1..3; each n-gram contributes a seeded
    // pseudo-random direction, so shared substrings pull texts together.
    const std::size_t len = text.size();
    for (std::size_t i = 0; i < len; ++i) {
        for (std::size_t n = 1; n <= 3 && i + n <= len; ++n) {
            SplitMix64 rng{fnv1a64(std::string_view(text).substr(i, n), seed_ + n)};
            for (std::size_t c = 0; c < dim_; ++c) v.values[c] += rng.symmetric();
        }
    }
    double norm_sq = 0.0;
    for (const double x : v.values) norm_sq += x * x;
    if (norm_sq == 0.0) {
        v.values[0] = 1.0;
        return v;
    }
    const double norm = std::sqrt(norm_sq);
    for (double& x : v.values) x /= norm;
    return v;
}

std::vector<EmbeddingVector> HashTextEmbedder::embed_texts(const std::vector<std::string>& texts) {
    if (texts.empty()) throw std::invalid_argument("embed_texts: empty input batch");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

std::string EchoGenerationClient::generate(const std::string& /*system*/,
                                           const std::string& user) {
    if (user.empty()) throw std::invalid_argument("generate: empty user message");
    return user;
}

ScriptedGenerationClient::ScriptedGenerationClient(std::vector<std::string> responses)
    : responses_(responses.begin(), responses.end()) {}

std::string ScriptedGenerationClient::generate(const std::string& /*system*/,
                                               const std::string& user) {
    if (user.empty()) throw std::invalid_argument("generate: empty user message");
    std::lock_guard lock(mutex_);
    if (responses_.empty())
        throw std::runtime_error("scripted client: response queue is empty");
    std::string out = std::move(responses_.front());
    responses_.pop_front();
    return out;
}

std::size_t ScriptedGenerationClient::remaining() const {
    std::lock_guard lock(mutex_);
    return responses_.size();
}

std::string SimulatedGenerationClient::generate(const std::string& /*system*/,
                                                const std::string& user) {
    if (user.empty()) throw std::invalid_argument("generate: empty user message");

    if (user.find("google search queries") != std::string::npos) {
        // Query-generation prompt: emit the requested number of queries,
        // each anchored on the task so retrieval stays on topic.
        int count = 0;
        std::sscanf(user.c_str(), "Write %d", &count);
        if (count < 1) count = 2;
        std::string task = extract_between(user, "following task: \"", "\"");
        if (task.empty()) task = "the question";
        static const char* kAngles[] = {"background", "latest findings", "key facts",
                                        "evidence",   "analysis",        "summary"};
        json list = json::array();
        for (int i = 0; i < count; ++i)
            list.push_back(task + " " + kAngles[i % std::size(kAngles)]);
        return list.dump();
    }

    // Answer prompt: a short deterministic summary of question and context.
    std::string question = extract_between(user, "query or task: \"", "\"");
    std::string context = extract_between(user, "Information: \"", "\"\n---");
    if (context.empty())
        return "No relevant context was found for: \"" + question + "\"";
    std::string head = context.substr(0, context.find('\n'));
    if (head.size() > 160) head.resize(160);
    return "Based on the retrieved context: " + head;
}

// --------------------------------------------------------------------------
// HTTP clients
// --------------------------------------------------------------------------

GenerationClientConfig GenerationClientConfig::from_json(const json& j) {
    GenerationClientConfig cfg;
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    cfg.model = j.value("model", cfg.model);
    cfg.api_key = j.value("api_key", cfg.api_key);
    cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
    cfg.max_output_tokens = j.value("max_output_tokens", cfg.max_output_tokens);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.retry_count = j.value("retry_count", cfg.retry_count);
    cfg.backoff_ms = j.value("backoff_ms", cfg.backoff_ms);
    if (cfg.timeout_seconds <= 0) throw std::invalid_argument("timeout_seconds must be > 0");
    if (cfg.retry_count < 0) throw std::invalid_argument("retry_count must be >= 0");
    return cfg;
}

EmbeddingClientConfig EmbeddingClientConfig::from_json(const json& j) {
    EmbeddingClientConfig cfg;
    cfg.endpoint = j.value("endpoint", cfg.endpoint);
    cfg.model = j.value("model", cfg.model);
    cfg.api_key = j.value("api_key", cfg.api_key);
    const std::string mode = j.value("mode", "per_text");
    if (mode == "per_text")
        cfg.mode = EmbeddingMode::PerText;
    else if (mode == "per_token")
        cfg.mode = EmbeddingMode::PerToken;
    else
        throw std::invalid_argument("embedding mode must be per_text or per_token");
    cfg.dim = j.value("dim", cfg.dim);
    cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
    cfg.retry_count = j.value("retry_count", cfg.retry_count);
    cfg.backoff_ms = j.value("backoff_ms", cfg.backoff_ms);
    if (cfg.timeout_seconds <= 0) throw std::invalid_argument("timeout_seconds must be > 0");
    if (cfg.retry_count < 0) throw std::invalid_argument("retry_count must be >= 0");
    return cfg;
}

json build_chat_request(const GenerationClientConfig& cfg, const std::string& system,
                        const std::string& user) {
    json messages = json::array();
    if (!system.empty()) messages.push_back({{"role", "system"}, {"content", system}});
    messages.push_back({{"role", "user"}, {"content", user}});
    return json{{"model", cfg.model},
                {"messages", messages},
                {"temperature", cfg.temperature},
                {"max_tokens", cfg.max_output_tokens}};
}

std::string parse_chat_response(const json& body) {
    if (body.contains("error"))
        throw std::runtime_error("chat backend error: " + body["error"].dump());
    try {
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw std::runtime_error("malformed chat response: " + body.dump());
    }
}

json build_embedding_request(const EmbeddingClientConfig& cfg,
                             const std::vector<std::string>& inputs) {
    return json{{"model", cfg.model}, {"input", inputs}};
}

std::vector<std::vector<double>> parse_embedding_response(const json& body) {
    if (body.contains("error"))
        throw std::runtime_error("embedding backend error: " + body["error"].dump());
    if (!body.contains("data") || !body["data"].is_array())
        throw std::runtime_error("malformed embedding response: " + body.dump());
    std::vector<std::pair<int, std::vector<double>>> entries;
    for (const auto& item : body["data"]) {
        std::vector<double> vec;
        try {
            vec = item.at("embedding").get<std::vector<double>>();
        } catch (const json::exception&) {
            throw std::runtime_error("malformed embedding entry: " + item.dump());
        }
        entries.emplace_back(item.value("index", int(entries.size())), std::move(vec));
    }
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<double>> out;
    out.reserve(entries.size());
    for (auto& [idx, vec] : entries) {
        if (!out.empty() && vec.size() != out.front().size())
            throw std::runtime_error("embedding dimension mismatch within batch");
        out.push_back(std::move(vec));
    }
    return out;
}

namespace {

// POST with bounded retries and exponential backoff. Retries transport
// failures and 5xx/429; other statuses fail immediately with the body.
json http_post_json(const std::string& endpoint, const std::string& path, const json& request,
                    const std::string& api_key, double timeout_seconds, int retry_count,
                    int backoff_ms) {
    std::string last_error;
    for (int attempt = 0; attempt <= retry_count; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_ms << std::min(attempt - 1, 10)));
        }
        httplib::Client client(endpoint);
        client.set_connection_timeout(std::chrono::milliseconds(
            static_cast<int>(timeout_seconds * 1000)));
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<int>(timeout_seconds * 1000)));
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = client.Post(path, headers, request.dump(), "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "status " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        if (res->status < 200 || res->status >= 300)
            throw std::runtime_error("request to " + endpoint + path + " failed with status " +
                                     std::to_string(res->status) + ": " + res->body);
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("non-JSON response from " + endpoint + path + ": " +
                                     e.what());
        }
    }
    throw TransportError("request to " + endpoint + path + " failed after " +
                         std::to_string(retry_count + 1) + " attempts; last error: " +
                         last_error);
}

}  // namespace

HttpGenerationClient::HttpGenerationClient(GenerationClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty())
        throw std::invalid_argument("HttpGenerationClient: endpoint is required");
}

std::string HttpGenerationClient::generate(const std::string& system, const std::string& user) {
    if (user.empty()) throw std::invalid_argument("generate: empty user message");
    const json body = http_post_json(cfg_.endpoint, "/v1/chat/completions",
                                     build_chat_request(cfg_, system, user), cfg_.api_key,
                                     cfg_.timeout_seconds, cfg_.retry_count, cfg_.backoff_ms);
    return parse_chat_response(body);
}

HttpTextEmbedder::HttpTextEmbedder(EmbeddingClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty())
        throw std::invalid_argument("HttpTextEmbedder: endpoint is required");
    if (cfg_.mode != EmbeddingMode::PerText)
        throw std::invalid_argument("HttpTextEmbedder: config mode must be per_text");
}

std::vector<EmbeddingVector> HttpTextEmbedder::embed_texts(const std::vector<std::string>& texts) {
    if (texts.empty()) throw std::invalid_argument("embed_texts: empty input batch");
    const json body = http_post_json(cfg_.endpoint, "/v1/embeddings",
                                     build_embedding_request(cfg_, texts), cfg_.api_key,
                                     cfg_.timeout_seconds, cfg_.retry_count, cfg_.backoff_ms);
    auto raw = parse_embedding_response(body);
    if (raw.size() != texts.size())
        throw std::runtime_error("embedding response count mismatch: got " +
                                 std::to_string(raw.size()) + " for " +
                                 std::to_string(texts.size()) + " inputs");
    std::vector<EmbeddingVector> out;
    out.reserve(raw.size());
    for (auto& vec : raw) {
        if (cfg_.dim != 0 && vec.size() != cfg_.dim)
            throw std::runtime_error("embedding dim " + std::to_string(vec.size()) +
                                     " does not match configured dim " + std::to_string(cfg_.dim));
        out.push_back(EmbeddingVector{std::move(vec)});
    }
    return out;
}

HttpTokenEmbedder::HttpTokenEmbedder(EmbeddingClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty())
        throw std::invalid_argument("HttpTokenEmbedder: endpoint is required");
    if (cfg_.mode != EmbeddingMode::PerToken)
        throw std::invalid_argument("HttpTokenEmbedder: config mode must be per_token");
}

TokenEmbeddingMatrix HttpTokenEmbedder::embed_tokens(const std::string& text,
                                                     const Tokenizer& tokenizer) {
    const auto tokens = tokenizer.tokenize(text);
    if (tokens.empty()) throw std::invalid_argument("embed_tokens: no tokens in text");
    const json body = http_post_json(cfg_.endpoint, "/v1/embeddings",
                                     build_embedding_request(cfg_, tokens), cfg_.api_key,
                                     cfg_.timeout_seconds, cfg_.retry_count, cfg_.backoff_ms);
    auto raw = parse_embedding_response(body);
    if (raw.size() != tokens.size())
        throw std::runtime_error("token embedding count mismatch: got " +
                                 std::to_string(raw.size()) + " rows for " +
                                 std::to_string(tokens.size()) + " tokens");
    TokenEmbeddingMatrix m;
    m.rows = raw.size();
    m.dim = raw.front().size();
    if (cfg_.dim != 0 && m.dim != cfg_.dim)
        throw std::runtime_error("token embedding dim " + std::to_string(m.dim) +
                                 " does not match configured dim " + std::to_string(cfg_.dim));
    m.values.reserve(m.rows * m.dim);
    for (const auto& row : raw)
        for (const double x : row) m.values.push_back(static_cast<float>(x));
    normalize_rows(m);
    return m;
}

std::string HttpTokenEmbedder::id() const { return "http:" + cfg_.model; }

}  // namespace ragpipe
