#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ragpipe/clients.hpp"
#include "ragpipe/core.hpp"

namespace ragpipe {

// Inputs for the query-generation prompt.
struct QueryGenRequest {
    std::string task;     // the question text
    std::string context;  // concatenated initial passages, may be empty
    std::string date;
    int max_iterations = 2;
    // Rendered placeholder list, e.g. "query 1", "query 2". Derived from
    // max_iterations when left empty.
    std::string dynamic_examples;
};

// The embedded template (resources/querygen_prompt.txt).
std::string_view querygen_prompt_template();

// Substitutes {key} placeholders. Inserted values are taken verbatim; an
// unknown placeholder in the template is an error naming it.
std::string render_prompt_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& values);

// Passage texts joined with single newlines, in rank order.
std::string build_initial_context(const std::vector<Passage>& ranked);

// "query 1", "query 2", ... up to max_iterations, quotes literal.
std::string render_dynamic_examples(int max_iterations);

std::string build_querygen_prompt(const QueryGenRequest& req);

struct QueryListParse {
    bool ok = false;
    std::vector<std::string> queries;  // never more than expected_n
    bool truncated = false;            // model returned extra queries
    bool incomplete = false;           // model returned fewer than expected_n
    std::string raw;                   // original model output, for diagnostics
};

// Accepts a JSON list of strings, tolerating surrounding whitespace and code
// fences. Surplus queries are truncated; a shortfall is flagged, not fatal.
QueryListParse parse_query_list(const std::string& raw, int expected_n);

// Builds the prompt, calls the client with a blank system role, parses the
// reply. Client transport errors propagate to the caller.
QueryListParse request_queries(GenerationClient& client, const QueryGenRequest& req);

}  // namespace ragpipe
