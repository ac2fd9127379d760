#include "ragpipe/querygen.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include <ragpipe/querygen_prompt.inc>

namespace ragpipe {
namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Strips ``` fences (with an optional language tag) wrapping the whole reply.
std::string strip_code_fence(std::string text) {
    if (text.rfind("```", 0) != 0) return text;
    const auto first_newline = text.find('\n');
    if (first_newline == std::string::npos) return text;
    auto inner = text.substr(first_newline + 1);
    const auto closing = inner.rfind("```");
    if (closing != std::string::npos) inner.resize(closing);
    return trim(inner);
}

}  // namespace

std::string_view querygen_prompt_template() { return detail::kQuerygenPromptTemplate; }

std::string render_prompt_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const char c = tmpl[i];
        if (c != '{') {
            out += c;
            ++i;
            continue;
        }
        const auto close = tmpl.find('}', i + 1);
        if (close == std::string_view::npos)
            throw std::invalid_argument("unterminated placeholder in prompt template");
        const std::string key(tmpl.substr(i + 1, close - i - 1));
        const auto it = values.find(key);
        if (it == values.end())
            throw std::invalid_argument("prompt template references unknown placeholder {" +
                                        key + "}");
        out += it->second;
        i = close + 1;
    }
    return out;
}

std::string build_initial_context(const std::vector<Passage>& ranked) {
    std::string out;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (i > 0) out += '\n';
        out += ranked[i].text;
    }
    return out;
}

std::string render_dynamic_examples(int max_iterations) {
    if (max_iterations <= 0)
        throw std::invalid_argument("render_dynamic_examples: count must be positive");
    std::string out;
    for (int i = 1; i <= max_iterations; ++i) {
        if (i > 1) out += ", ";
        out += "\"query " + std::to_string(i) + "\"";
    }
    return out;
}

std::string build_querygen_prompt(const QueryGenRequest& req) {
    if (req.max_iterations <= 0)
        throw std::invalid_argument("build_querygen_prompt: max_iterations must be positive");
    std::map<std::string, std::string> values{
        {"max_iterations", std::to_string(req.max_iterations)},
        {"task", req.task},
        {"date", req.date},
        {"context", req.context},
        {"dynamic_example", req.dynamic_examples.empty()
                                ? render_dynamic_examples(req.max_iterations)
                                : req.dynamic_examples},
    };
    return render_prompt_template(querygen_prompt_template(), values);
}

QueryListParse parse_query_list(const std::string& raw, int expected_n) {
    if (expected_n <= 0)
        throw std::invalid_argument("parse_query_list: expected_n must be positive");
    QueryListParse result;
    result.raw = raw;

    std::string text = strip_code_fence(trim(raw));
    const auto open = text.find('[');
    const auto close = text.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close < open) return result;
    text = text.substr(open, close - open + 1);

    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        return result;
    }
    if (!parsed.is_array()) return result;

    std::vector<std::string> queries;
    for (const auto& item : parsed) {
        if (!item.is_string()) return result;
        auto q = trim(item.get<std::string>());
        if (!q.empty()) queries.push_back(std::move(q));
    }
    if (queries.empty()) return result;

    if (queries.size() > static_cast<std::size_t>(expected_n)) {
        queries.resize(expected_n);
        result.truncated = true;
    } else if (queries.size() < static_cast<std::size_t>(expected_n)) {
        result.incomplete = true;
    }
    result.ok = true;
    result.queries = std::move(queries);
    return result;
}

QueryListParse request_queries(GenerationClient& client, const QueryGenRequest& req) {
    const std::string prompt = build_querygen_prompt(req);
    const std::string reply = client.generate("", prompt);
    return parse_query_list(reply, req.max_iterations);
}

}  // namespace ragpipe
