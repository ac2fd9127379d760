#include "ragpipe/retrieval.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace ragpipe {
namespace {

using nlohmann::json;

std::string key_string(const std::string& doc_id, int passage_index) {
    return doc_id + "#" + std::to_string(passage_index);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("unexpected end of embeddings file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void write_f32_le(std::ostream& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32_le(out, bits);
}

float read_f32_le(std::istream& in) {
    const std::uint32_t bits = read_u32_le(in);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

Index::Index(std::vector<PassageKey> table, std::vector<TokenEmbeddingMatrix> embeddings,
             IndexMetadata meta)
    : table_(std::move(table)), embeddings_(std::move(embeddings)), meta_(std::move(meta)) {
    if (table_.size() != embeddings_.size())
        throw std::invalid_argument("Index: table and embedding counts differ");
    for (std::size_t i = 0; i < embeddings_.size(); ++i) {
        const auto& m = embeddings_[i];
        if (m.rows == 0 || m.dim != meta_.dim || m.values.size() != m.rows * m.dim)
            throw std::invalid_argument("Index: malformed embedding matrix for " +
                                        key_string(table_[i].doc_id, table_[i].passage_index));
    }
}

void ContentStore::add(const Passage& passage) {
    const PassageKey key{passage.doc_id, passage.passage_index};
    if (!passages_.emplace(key, passage).second)
        throw std::invalid_argument("duplicate passage " +
                                    key_string(passage.doc_id, passage.passage_index));
}

std::optional<Passage> ContentStore::find(const std::string& doc_id, int passage_index) const {
    const auto it = passages_.find(PassageKey{doc_id, passage_index});
    if (it == passages_.end()) return std::nullopt;
    return it->second;
}

bool ContentStore::has_document(const std::string& doc_id) const {
    const auto it = passages_.lower_bound(PassageKey{doc_id, 0});
    return it != passages_.end() && it->first.doc_id == doc_id;
}

std::vector<Passage> segment_document(const Document& doc, int passage_tokens,
                                      const Tokenizer& tokenizer) {
    if (passage_tokens <= 0)
        throw std::invalid_argument("segment_document: passage_tokens must be positive");
    const auto tokens = tokenizer.tokenize(doc.text);
    std::vector<Passage> out;
    for (std::size_t begin = 0; begin < tokens.size(); begin += passage_tokens) {
        const std::size_t end = std::min(begin + passage_tokens, tokens.size());
        Passage p;
        p.doc_id = doc.doc_id;
        p.passage_index = static_cast<int>(out.size());
        p.token_begin = begin;
        p.token_end = end;
        p.text = tokenizer.detokenize({tokens.begin() + begin, tokens.begin() + end});
        out.push_back(std::move(p));
    }
    return out;
}

BuiltIndex build_index(const std::vector<Passage>& passages, TokenEmbedder& embedder,
                       const Tokenizer& tokenizer, int passage_tokens) {
    BuiltIndex built;
    std::vector<PassageKey> table;
    std::vector<TokenEmbeddingMatrix> embeddings;
    table.reserve(passages.size());
    embeddings.reserve(passages.size());
    for (const auto& p : passages) {
        auto m = embedder.embed_tokens(p.text, tokenizer);
        if (m.dim != embedder.dim())
            throw std::runtime_error("embedder returned dim " + std::to_string(m.dim) +
                                     ", expected " + std::to_string(embedder.dim()));
        normalize_rows(m);
        table.push_back(PassageKey{p.doc_id, p.passage_index});
        embeddings.push_back(std::move(m));
        built.store.add(p);
    }
    IndexMetadata meta;
    meta.dim = embedder.dim();
    meta.passage_tokens = passage_tokens;
    meta.embedder_id = embedder.id();
    built.index = Index(std::move(table), std::move(embeddings), std::move(meta));
    return built;
}

double maxsim_score(const TokenEmbeddingMatrix& query, const TokenEmbeddingMatrix& passage) {
    if (query.dim != passage.dim)
        throw std::invalid_argument("maxsim_score: dimension mismatch (" +
                                    std::to_string(query.dim) + " vs " +
                                    std::to_string(passage.dim) + ")");
    double total = 0.0;
    for (std::size_t q = 0; q < query.rows; ++q) {
        const auto qrow = query.row(q);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < passage.rows; ++p) {
            const auto prow = passage.row(p);
            double dot = 0.0;
            for (std::size_t c = 0; c < query.dim; ++c)
                dot += double(qrow[c]) * double(prow[c]);
            best = std::max(best, dot);
        }
        if (passage.rows > 0) total += best;
    }
    return total;
}

std::vector<SearchHit> search(const Index& index, const std::string& query_text,
                              TokenEmbedder& embedder, const Tokenizer& tokenizer, int k) {
    if (k <= 0) throw std::invalid_argument("search: k must be positive");
    if (index.empty()) return {};
    const auto query = embedder.embed_tokens(query_text, tokenizer);
    if (query.dim != index.metadata().dim)
        throw std::invalid_argument("query embedding dim " + std::to_string(query.dim) +
                                    " does not match index dim " +
                                    std::to_string(index.metadata().dim));

    struct Scored {
        double score;
        std::size_t pos;
    };
    std::vector<Scored> scored;
    scored.reserve(index.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        scored.push_back({maxsim_score(query, index.matrix(i)), i});

    const auto better = [&index](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return index.key(a.pos) < index.key(b.pos);
    };
    const std::size_t take = std::min<std::size_t>(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(), better);

    std::vector<SearchHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& key = index.key(scored[i].pos);
        hits.push_back(SearchHit{key.doc_id, key.passage_index, scored[i].score,
                                 static_cast<int>(i + 1)});
    }
    return hits;
}

std::vector<BatchEntry> batch_search(const Index& index, const std::vector<std::string>& queries,
                                     TokenEmbedder& embedder, const Tokenizer& tokenizer, int k) {
    std::vector<BatchEntry> out(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        try {
            out[i].hits = search(index, queries[i], embedder, tokenizer, k);
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    }
    return out;
}

std::vector<Passage> fetch_content(const ContentSource& store,
                                   const std::vector<SearchHit>& hits) {
    std::vector<Passage> out;
    out.reserve(hits.size());
    for (const auto& hit : hits) {
        auto passage = store.find(hit.doc_id, hit.passage_index);
        if (!passage)
            throw std::runtime_error("content store has no passage " +
                                     key_string(hit.doc_id, hit.passage_index));
        out.push_back(std::move(*passage));
    }
    return out;
}

void save_index(const Index& index, const ContentStore& store,
                const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    json meta;
    meta["dim"] = index.metadata().dim;
    meta["passage_tokens"] = index.metadata().passage_tokens;
    meta["embedder"] = index.metadata().embedder_id;
    meta["passages"] = index.size();
    {
        std::ofstream out(dir / "index_meta.json");
        if (!out) throw std::runtime_error("cannot write " + (dir / "index_meta.json").string());
        out << meta.dump(2) << '\n';
    }

    std::ofstream bin(dir / "embeddings.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + (dir / "embeddings.bin").string());
    std::ofstream content(dir / "content.jsonl");
    if (!content) throw std::runtime_error("cannot write " + (dir / "content.jsonl").string());

    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto& key = index.key(i);
        const auto& m = index.matrix(i);
        write_u32_le(bin, static_cast<std::uint32_t>(m.rows));
        for (const float f : m.values) write_f32_le(bin, f);

        const auto passage = store.find(key.doc_id, key.passage_index);
        if (!passage)
            throw std::runtime_error("save_index: no content for " +
                                     key_string(key.doc_id, key.passage_index));
        json line;
        line["doc_id"] = passage->doc_id;
        line["passage_index"] = passage->passage_index;
        line["text"] = passage->text;
        content << line.dump() << '\n';
    }
    if (!bin || !content) throw std::runtime_error("failed writing index files to " + dir.string());
}

BuiltIndex load_index(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "index_meta.json");
    if (!meta_in) throw std::runtime_error("cannot read " + (dir / "index_meta.json").string());
    json meta = json::parse(meta_in);

    IndexMetadata metadata;
    metadata.dim = meta.at("dim").get<std::size_t>();
    metadata.passage_tokens = meta.at("passage_tokens").get<int>();
    metadata.embedder_id = meta.at("embedder").get<std::string>();
    const auto n_passages = meta.at("passages").get<std::size_t>();
    if (metadata.dim == 0 || metadata.passage_tokens <= 0)
        throw std::runtime_error("corrupt index metadata in " + dir.string());

    std::ifstream content(dir / "content.jsonl");
    if (!content) throw std::runtime_error("cannot read " + (dir / "content.jsonl").string());
    std::ifstream bin(dir / "embeddings.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot read " + (dir / "embeddings.bin").string());

    BuiltIndex built;
    std::vector<PassageKey> table;
    std::vector<TokenEmbeddingMatrix> embeddings;
    table.reserve(n_passages);
    embeddings.reserve(n_passages);

    const WhitespaceTokenizer tokenizer;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(content, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error((dir / "content.jsonl").string() + ":" +
                                     std::to_string(line_no) + ": " + e.what());
        }
        Passage p;
        p.doc_id = j.at("doc_id").get<std::string>();
        p.passage_index = j.at("passage_index").get<int>();
        p.text = j.at("text").get<std::string>();
        p.token_begin = static_cast<std::size_t>(p.passage_index) *
                        static_cast<std::size_t>(metadata.passage_tokens);
        p.token_end = p.token_begin + tokenizer.tokenize(p.text).size();

        TokenEmbeddingMatrix m;
        m.rows = read_u32_le(bin);
        m.dim = metadata.dim;
        if (m.rows == 0)
            throw std::runtime_error("empty embedding matrix for " +
                                     key_string(p.doc_id, p.passage_index));
        m.values.resize(m.rows * m.dim);
        for (auto& f : m.values) f = read_f32_le(bin);

        table.push_back(PassageKey{p.doc_id, p.passage_index});
        embeddings.push_back(std::move(m));
        built.store.add(p);
    }
    if (table.size() != n_passages)
        throw std::runtime_error("index in " + dir.string() + " declares " +
                                 std::to_string(n_passages) + " passages but content.jsonl has " +
                                 std::to_string(table.size()));
    if (bin.peek() != std::ifstream::traits_type::eof())
        throw std::runtime_error("trailing bytes in " + (dir / "embeddings.bin").string());

    built.index = Index(std::move(table), std::move(embeddings), std::move(metadata));
    return built;
}

// ---------------------------------------------------------------------------
// SearchService
// ---------------------------------------------------------------------------

SearchService::SearchService(const Index& index, TokenEmbedder& embedder,
                             const Tokenizer& tokenizer)
    : index_(index), embedder_(embedder), tokenizer_(tokenizer) {
    worker_ = std::thread([this] { loop(); });
}

SearchService::~SearchService() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

std::vector<BatchEntry> SearchService::submit(const std::vector<std::string>& queries, int k) {
    if (k <= 0) throw std::invalid_argument("submit: k must be positive");
    Pending pending;
    pending.queries = queries;
    pending.k = k;
    auto future = pending.promise.get_future();
    {
        std::lock_guard lock(mutex_);
        if (stopping_) throw std::runtime_error("search service is shut down");
        queue_.push_back(std::move(pending));
    }
    cv_.notify_one();
    return future.get();
}

SearchService::Stats SearchService::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

void SearchService::loop() {
    for (;;) {
        std::vector<Pending> drained;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty() && stopping_) return;
            // Drain everything waiting right now into a single service batch.
            while (!queue_.empty()) {
                drained.push_back(std::move(queue_.front()));
                queue_.pop_front();
            }
            // Count before fulfilling any promise so a caller that has seen
            // its results also sees them reflected in the stats.
            stats_.service_batches += 1;
            stats_.groups += drained.size();
            for (const auto& p : drained) stats_.queries += p.queries.size();
        }
        serve(drained);
    }
}

void SearchService::serve(std::vector<Pending>& group) {
    // Coalesce all groups into one flat batch scored at the largest k; a
    // group's k-prefix of that ranking equals its standalone search result.
    int k_max = 1;
    std::vector<std::string> flat;
    for (const auto& p : group) {
        k_max = std::max(k_max, p.k);
        flat.insert(flat.end(), p.queries.begin(), p.queries.end());
    }

    std::vector<BatchEntry> all;
    try {
        all = batch_search(index_, flat, embedder_, tokenizer_, k_max);
    } catch (const std::exception& e) {
        // batch_search only throws on programming errors (e.g. bad k); fail
        // every waiting group rather than hanging their futures.
        for (auto& p : group) {
            std::vector<BatchEntry> failed(p.queries.size());
            for (auto& entry : failed) entry.error = e.what();
            p.promise.set_value(std::move(failed));
        }
        return;
    }

    std::size_t offset = 0;
    for (auto& p : group) {
        std::vector<BatchEntry> slice(all.begin() + offset,
                                      all.begin() + offset + p.queries.size());
        offset += p.queries.size();
        for (auto& entry : slice)
            if (entry.hits.size() > static_cast<std::size_t>(p.k))
                entry.hits.resize(p.k);
        p.promise.set_value(std::move(slice));
    }
}

}  // namespace ragpipe
