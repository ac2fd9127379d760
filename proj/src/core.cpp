#include "ragpipe/core.hpp"

#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace ragpipe {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line_no,
                            const std::string& what) {
    std::ostringstream msg;
    msg << path.string() << ":" << line_no << ": " << what;
    throw std::runtime_error(msg.str());
}

bool blank_line(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::string string_field(const json& obj, const char* field, const std::filesystem::path& path,
                         std::size_t line_no) {
    auto it = obj.find(field);
    if (it == obj.end() || !it->is_string())
        fail_line(path, line_no, std::string("missing string field \"") + field + "\"");
    return it->get<std::string>();
}

std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string() + " for reading");
    return in;
}

}  // namespace

void PipelineConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(k_initial, "k_initial");
    positive(n_generated_queries, "n_generated_queries");
    positive(k_per_query, "k_per_query");
    positive(passage_tokens, "passage_tokens");
    positive(snippet_chars, "snippet_chars");
    positive(total_words, "total_words");
    if (snippet_overlap < 0 || snippet_overlap >= snippet_chars)
        throw std::invalid_argument("snippet_overlap must be in [0, snippet_chars)");
    if (sim_threshold < -1.0 || sim_threshold > 1.0)
        throw std::invalid_argument("sim_threshold must be in [-1, 1]");
}

std::vector<Question> load_questions(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    std::vector<Question> questions;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank_line(line)) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            fail_line(path, line_no, e.what());
        }
        Question q{string_field(obj, "id", path, line_no),
                   string_field(obj, "question", path, line_no)};
        if (q.id.empty()) fail_line(path, line_no, "empty question id");
        if (q.text.empty()) fail_line(path, line_no, "empty question text");
        if (!seen.insert(q.id).second)
            fail_line(path, line_no, "duplicate question id \"" + q.id + "\"");
        questions.push_back(std::move(q));
    }
    return questions;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank_line(line)) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            fail_line(path, line_no, e.what());
        }
        Document d{string_field(obj, "doc_id", path, line_no),
                   string_field(obj, "text", path, line_no)};
        if (d.doc_id.empty()) fail_line(path, line_no, "empty doc_id");
        if (!seen.insert(d.doc_id).second)
            fail_line(path, line_no, "duplicate doc_id \"" + d.doc_id + "\"");
        docs.push_back(std::move(d));
    }
    return docs;
}

void write_answers(const std::vector<AnswerRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& r : records) {
        ordered_json obj;
        obj["id"] = r.question_id;
        obj["answer"] = r.answer;
        obj["doc_ids"] = r.doc_ids;
        obj["final_prompt"] = r.final_prompt;
        out << obj.dump() << '\n';
        if (!out) throw std::runtime_error("write failed for " + path.string());
    }
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<AnswerRecord> read_answers(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    std::vector<AnswerRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank_line(line)) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            fail_line(path, line_no, e.what());
        }
        AnswerRecord r;
        r.question_id = string_field(obj, "id", path, line_no);
        r.answer = string_field(obj, "answer", path, line_no);
        r.final_prompt = string_field(obj, "final_prompt", path, line_no);
        auto it = obj.find("doc_ids");
        if (it == obj.end() || !it->is_array())
            fail_line(path, line_no, "missing array field \"doc_ids\"");
        for (const auto& d : *it) {
            if (!d.is_string()) fail_line(path, line_no, "doc_ids must hold strings");
            r.doc_ids.push_back(d.get<std::string>());
        }
        r.stats.num_unique_docs = static_cast<int>(r.doc_ids.size());
        r.stats.prompt_chars = static_cast<int>(utf8_length(r.final_prompt));
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<std::size_t> utf8_offsets(std::string_view text) {
    std::vector<std::size_t> offsets;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        offsets.push_back(i);
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if ((lead & 0xE0) == 0xC0)
            len = 2;
        else if ((lead & 0xF0) == 0xE0)
            len = 3;
        else if ((lead & 0xF8) == 0xF0)
            len = 4;
        // Truncated or malformed sequences degrade to single bytes.
        if (i + len > n) len = 1;
        for (std::size_t j = 1; j < len; ++j) {
            if ((static_cast<unsigned char>(text[i + j]) & 0xC0) != 0x80) {
                len = 1;
                break;
            }
        }
        i += len;
    }
    offsets.push_back(n);
    return offsets;
}

std::size_t utf8_length(std::string_view text) {
    return utf8_offsets(text).size() - 1;
}

std::string utf8_substr(std::string_view text, std::size_t pos, std::size_t count) {
    const auto offsets = utf8_offsets(text);
    const std::size_t n = offsets.size() - 1;
    if (pos >= n) return {};
    const std::size_t end = std::min(pos + count, n);
    return std::string(text.substr(offsets[pos], offsets[end] - offsets[pos]));
}

std::string today_iso_date() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_buf{};
    localtime_r(&now, &tm_buf);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", tm_buf.tm_year + 1900, tm_buf.tm_mon + 1,
                  tm_buf.tm_mday);
    return buf;
}

}  // namespace ragpipe
