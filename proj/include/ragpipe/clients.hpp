#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ragpipe/tokenizer.hpp"

namespace ragpipe {

// Dense vector for whole-text embeddings (snippet filtering).
struct EmbeddingVector {
    std::vector<double> values;
    std::size_t dim() const { return values.size(); }
};

// Row-major token-level embedding matrix; one row per token. Rows are kept
// unit-normalized (the persisted index stores 32-bit floats, so values are
// float in memory as well; scores accumulate in double).
struct TokenEmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<float> values;  // rows * dim

    std::span<const float> row(std::size_t i) const {
        return {values.data() + i * dim, dim};
    }
};

// L2-normalizes every row in place. Throws on a zero row.
void normalize_rows(TokenEmbeddingMatrix& m);

// Raised when an HTTP backend stays unreachable after all retries.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Chat-style text generation backend.
class GenerationClient {
public:
    virtual ~GenerationClient() = default;
    // system may be empty; user must not be.
    virtual std::string generate(const std::string& system, const std::string& user) = 0;
};

// Whole-text embedding backend: one vector per input text, order-aligned.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) = 0;
};

// Token-level embedding backend for late-interaction retrieval.
class TokenEmbedder {
public:
    virtual ~TokenEmbedder() = default;
    virtual TokenEmbeddingMatrix embed_tokens(const std::string& text,
                                              const Tokenizer& tokenizer) = 0;
    virtual std::size_t dim() const = 0;
    virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mocks. Pure functions of their inputs and fixed seed;
// repeated calls are bit-identical.
// ---------------------------------------------------------------------------

// Per-token embeddings derived from a seeded hash of the token string. The
// same token always maps to the same unit vector, so MaxSim rewards token
// overlap between query and passage.
class HashTokenEmbedder final : public TokenEmbedder {
public:
    explicit HashTokenEmbedder(std::size_t dim = 64, std::uint64_t seed = 0);
    TokenEmbeddingMatrix embed_tokens(const std::string& text,
                                      const Tokenizer& tokenizer) override;
    std::size_t dim() const override { return dim_; }
    std::string id() const override;

    // Rebuilds an embedder from an id() string; nullptr if the id is not ours.
    static std::unique_ptr<HashTokenEmbedder> from_id(const std::string& id);

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// Seeded pseudo-random projection of character n-gram counts (n = 1..3),
// L2-normalized. Texts sharing most n-grams embed close together, so
// similarity thresholds are exercisable both ways.
class HashTextEmbedder final : public TextEmbedder {
public:
    explicit HashTextEmbedder(std::size_t dim = 64, std::uint64_t seed = 0);
    std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) override;
    EmbeddingVector embed_one(const std::string& text) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// Returns the user message unchanged.
class EchoGenerationClient final : public GenerationClient {
public:
    std::string generate(const std::string& system, const std::string& user) override;
};

// Pops prepared responses in order; throws once the queue runs dry.
class ScriptedGenerationClient final : public GenerationClient {
public:
    explicit ScriptedGenerationClient(std::vector<std::string> responses);
    std::string generate(const std::string& system, const std::string& user) override;
    std::size_t remaining() const;

private:
    mutable std::mutex mutex_;
    std::deque<std::string> responses_;
};

// Deterministic stand-in for a chat model. Query-generation prompts get a
// JSON list of queries derived from the task; answer prompts get a short
// summary derived from the question and context.
class SimulatedGenerationClient final : public GenerationClient {
public:
    std::string generate(const std::string& system, const std::string& user) override;
};

// ---------------------------------------------------------------------------
// HTTP clients (chat-completions / embeddings style JSON APIs).
// Wire shapes are documented in docs/protocol.md.
// ---------------------------------------------------------------------------

struct GenerationClientConfig {
    std::string endpoint;  // e.g. http://localhost:8000
    std::string model;
    std::string api_key;  // optional bearer token
    double timeout_seconds = 30.0;
    int max_output_tokens = 512;
    double temperature = 0.0;
    int retry_count = 3;
    int backoff_ms = 250;  // doubled after each failed attempt

    static GenerationClientConfig from_json(const nlohmann::json& j);
};

enum class EmbeddingMode { PerText, PerToken };

struct EmbeddingClientConfig {
    std::string endpoint;
    std::string model;
    std::string api_key;
    EmbeddingMode mode = EmbeddingMode::PerText;
    std::size_t dim = 0;  // 0 = accept whatever the server returns
    double timeout_seconds = 30.0;
    int retry_count = 3;
    int backoff_ms = 250;

    static EmbeddingClientConfig from_json(const nlohmann::json& j);
};

// Request/response mapping, exposed for fixture tests.
nlohmann::json build_chat_request(const GenerationClientConfig& cfg,
                                  const std::string& system, const std::string& user);
std::string parse_chat_response(const nlohmann::json& body);
nlohmann::json build_embedding_request(const EmbeddingClientConfig& cfg,
                                       const std::vector<std::string>& inputs);
std::vector<std::vector<double>> parse_embedding_response(const nlohmann::json& body);

class HttpGenerationClient final : public GenerationClient {
public:
    explicit HttpGenerationClient(GenerationClientConfig cfg);
    std::string generate(const std::string& system, const std::string& user) override;

private:
    GenerationClientConfig cfg_;
};

class HttpTextEmbedder final : public TextEmbedder {
public:
    explicit HttpTextEmbedder(EmbeddingClientConfig cfg);
    std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) override;

private:
    EmbeddingClientConfig cfg_;
};

// Sends the token list of one text to the embeddings endpoint and normalizes
// the returned rows.
class HttpTokenEmbedder final : public TokenEmbedder {
public:
    explicit HttpTokenEmbedder(EmbeddingClientConfig cfg);
    TokenEmbeddingMatrix embed_tokens(const std::string& text,
                                      const Tokenizer& tokenizer) override;
    std::size_t dim() const override { return cfg_.dim; }
    std::string id() const override;

private:
    EmbeddingClientConfig cfg_;
};

}  // namespace ragpipe
