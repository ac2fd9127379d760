#pragma once

#include <compare>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ragpipe/clients.hpp"
#include "ragpipe/core.hpp"
#include "ragpipe/tokenizer.hpp"

namespace ragpipe {

struct PassageKey {
    std::string doc_id;
    int passage_index = 0;
    auto operator<=>(const PassageKey&) const = default;  // rank tie-break order
};

struct SearchHit {
    std::string doc_id;
    int passage_index = 0;
    double score = 0.0;  // MaxSim sum
    int rank = 0;        // 1-based
};

struct IndexMetadata {
    std::size_t dim = 0;
    int passage_tokens = 0;
    std::string embedder_id;
};

// Scoring-side index: token matrices and passage identity only, no body text.
class Index {
public:
    Index() = default;
    Index(std::vector<PassageKey> table, std::vector<TokenEmbeddingMatrix> embeddings,
          IndexMetadata meta);

    std::size_t size() const { return table_.size(); }
    bool empty() const { return table_.empty(); }
    const PassageKey& key(std::size_t i) const { return table_[i]; }
    const TokenEmbeddingMatrix& matrix(std::size_t i) const { return embeddings_[i]; }
    const IndexMetadata& metadata() const { return meta_; }

private:
    std::vector<PassageKey> table_;
    std::vector<TokenEmbeddingMatrix> embeddings_;
    IndexMetadata meta_;
};

// Read-only lookup surface for passage body text, held apart from the index
// so scoring and text serving scale independently.
class ContentSource {
public:
    virtual ~ContentSource() = default;
    virtual std::optional<Passage> find(const std::string& doc_id, int passage_index) const = 0;
};

class ContentStore final : public ContentSource {
public:
    void add(const Passage& passage);  // build-time only
    std::optional<Passage> find(const std::string& doc_id, int passage_index) const override;
    bool has_document(const std::string& doc_id) const;
    std::size_t size() const { return passages_.size(); }

private:
    std::map<PassageKey, Passage> passages_;
};

// Non-overlapping token windows of passage_tokens tokens; the last window
// keeps the remainder. Empty document yields no passages.
std::vector<Passage> segment_document(const Document& doc, int passage_tokens,
                                      const Tokenizer& tokenizer);

struct BuiltIndex {
    Index index;
    ContentStore store;
};

// Embeds every passage and pairs the index with its content store. Rows are
// re-normalized in case the embedder does not return unit vectors.
BuiltIndex build_index(const std::vector<Passage>& passages, TokenEmbedder& embedder,
                       const Tokenizer& tokenizer, int passage_tokens);

// Late-interaction score: sum over query tokens of the maximum inner product
// against any passage token.
double maxsim_score(const TokenEmbeddingMatrix& query, const TokenEmbeddingMatrix& passage);

// Top-k passages by MaxSim, non-increasing score; exact ties broken by
// ascending (doc_id, passage_index). Empty index yields an empty list.
std::vector<SearchHit> search(const Index& index, const std::string& query_text,
                              TokenEmbedder& embedder, const Tokenizer& tokenizer, int k);

struct BatchEntry {
    std::vector<SearchHit> hits;
    std::string error;  // per-query failure, empty on success
    bool ok() const { return error.empty(); }
};

// Elementwise identical to calling search per query; a per-query failure is
// reported in its slot without failing the batch.
std::vector<BatchEntry> batch_search(const Index& index, const std::vector<std::string>& queries,
                                     TokenEmbedder& embedder, const Tokenizer& tokenizer, int k);

// Body text for each hit, in hit order. Throws naming the key on a miss.
std::vector<Passage> fetch_content(const ContentSource& store, const std::vector<SearchHit>& hits);

// On-disk layout: index_meta.json, embeddings.bin (per passage: u32 LE row
// count, then rows*dim f32 LE), content.jsonl ({"doc_id","passage_index","text"}
// in passage-table order).
void save_index(const Index& index, const ContentStore& store, const std::filesystem::path& dir);
BuiltIndex load_index(const std::filesystem::path& dir);

// Single shared retrieval service. Caller groups block until served; one
// internal thread drains all pending groups per cycle and scores them as one
// batch, so results are identical to sequential execution.
class SearchService {
public:
    SearchService(const Index& index, TokenEmbedder& embedder, const Tokenizer& tokenizer);
    ~SearchService();
    SearchService(const SearchService&) = delete;
    SearchService& operator=(const SearchService&) = delete;

    std::vector<BatchEntry> submit(const std::vector<std::string>& queries, int k);

    struct Stats {
        std::size_t groups = 0;           // submit() calls served
        std::size_t queries = 0;          // individual queries scored
        std::size_t service_batches = 0;  // drain cycles
    };
    Stats stats() const;

private:
    struct Pending {
        std::vector<std::string> queries;
        int k = 0;
        std::promise<std::vector<BatchEntry>> promise;
    };

    void loop();
    void serve(std::vector<Pending>& group);

    const Index& index_;
    TokenEmbedder& embedder_;
    const Tokenizer& tokenizer_;

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Pending> queue_;
    bool stopping_ = false;
    Stats stats_;
    std::thread worker_;
};

}  // namespace ragpipe
