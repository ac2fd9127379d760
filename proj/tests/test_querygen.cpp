#include <doctest.h>

#include <fstream>
#include <sstream>

#include "ragpipe/querygen.hpp"
#include "support.hpp"

using namespace ragpipe;

namespace {

std::string read_golden(const std::string& name) {
    const std::string path = std::string(RAGPIPE_TEST_DIR) + "/golden/" + name;
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing golden file ", path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

QueryGenRequest golden_request() {
    QueryGenRequest req;
    req.task = "What is the capital of France?";
    req.context =
        "Paris is the capital and largest city of France.\n"
        "France is a country in Western Europe.";
    req.date = "2025-06-24";
    req.max_iterations = 2;
    return req;
}

}  // namespace

TEST_CASE("template carries its fixed phrases and placeholders") {
    const auto tmpl = querygen_prompt_template();
    CHECK(tmpl.find("google search queries") != std::string_view::npos);
    CHECK(tmpl.find("You must respond with a list of strings") != std::string_view::npos);
    CHECK(tmpl.find("The response should contain ONLY the list.") != std::string_view::npos);
    for (const char* placeholder :
         {"{max_iterations}", "{task}", "{date}", "{context}", "{dynamic_example}"})
        CHECK_MESSAGE(tmpl.find(placeholder) != std::string_view::npos, placeholder);
}

TEST_CASE("rendered prompt matches the golden file byte for byte") {
    CHECK(build_querygen_prompt(golden_request()) == read_golden("querygen_rendered.txt"));
}

TEST_CASE("placeholder values are inserted verbatim, braces and all") {
    const std::string out = render_prompt_template(
        "a {x} b {x} c {y}", {{"x", "{not recursive}"}, {"y", "end"}});
    CHECK(out == "a {not recursive} b {not recursive} c end");
}

TEST_CASE("unknown placeholders are an error naming the key") {
    try {
        render_prompt_template("hello {who}", {{"other", "x"}});
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("{who}") != std::string::npos);
    }
}

TEST_CASE("dynamic examples render one quoted entry per query") {
    CHECK(render_dynamic_examples(1) == "\"query 1\"");
    CHECK(render_dynamic_examples(2) == "\"query 1\", \"query 2\"");
    CHECK(render_dynamic_examples(3) == "\"query 1\", \"query 2\", \"query 3\"");
    CHECK_THROWS_AS(render_dynamic_examples(0), std::invalid_argument);
}

TEST_CASE("initial context joins passages with newlines in rank order") {
    Passage a, b;
    a.text = "first passage";
    b.text = "second passage";
    CHECK(build_initial_context({a, b}) == "first passage\nsecond passage");
    CHECK(build_initial_context({}) == "");
}

TEST_CASE("prompt carries the requested query count") {
    auto req = golden_request();
    req.max_iterations = 4;
    const auto prompt = build_querygen_prompt(req);
    CHECK(prompt.rfind("Write 4 google search queries", 0) == 0);
    CHECK(prompt.find("[\"query 1\", \"query 2\", \"query 3\", \"query 4\"]") !=
          std::string::npos);
}

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

TEST_CASE("parses a plain JSON list") {
    const auto p = parse_query_list(R"(["first query", "second query"])", 2);
    REQUIRE(p.ok);
    CHECK(p.queries == std::vector<std::string>{"first query", "second query"});
    CHECK_FALSE(p.truncated);
    CHECK_FALSE(p.incomplete);
}

TEST_CASE("parses a fenced or chatty reply") {
    const auto fenced = parse_query_list("```json\n[\"a\", \"b\"]\n```", 2);
    REQUIRE(fenced.ok);
    CHECK(fenced.queries == std::vector<std::string>{"a", "b"});

    const auto chatty =
        parse_query_list("Sure! Here are the queries:\n[\"a\", \"b\"]\nHope that helps.", 2);
    REQUIRE(chatty.ok);
    CHECK(chatty.queries == std::vector<std::string>{"a", "b"});
}

TEST_CASE("surplus queries are truncated, shortfall flagged") {
    const auto extra = parse_query_list(R"(["a", "b", "c"])", 2);
    REQUIRE(extra.ok);
    CHECK(extra.queries.size() == 2);
    CHECK(extra.truncated);

    const auto fewer = parse_query_list(R"(["only one"])", 2);
    REQUIRE(fewer.ok);
    CHECK(fewer.queries.size() == 1);
    CHECK(fewer.incomplete);
}

TEST_CASE("garbage replies fail with the raw text preserved") {
    const std::vector<std::string> bad_replies = {
        "no list here", "[1, 2]", "[]", "{\"queries\": []}", "[\"\", \"  \"]", ""};
    for (const std::string& bad : bad_replies) {
        CAPTURE(bad);
        const auto p = parse_query_list(bad, 2);
        CHECK_FALSE(p.ok);
        CHECK(p.queries.empty());
        CHECK(p.raw == bad);
    }
}

TEST_CASE("whitespace-padded entries are trimmed") {
    const auto p = parse_query_list(R"([" padded ", "fine"])", 2);
    REQUIRE(p.ok);
    CHECK(p.queries[0] == "padded");
}

TEST_CASE("request_queries sends the rendered prompt and parses the reply") {
    ScriptedGenerationClient client({R"(["alpha query", "beta query"])"});
    const auto parse = request_queries(client, golden_request());
    REQUIRE(parse.ok);
    CHECK(parse.queries == std::vector<std::string>{"alpha query", "beta query"});
}

TEST_CASE("request_queries reports an unusable reply without throwing") {
    ScriptedGenerationClient client({"I cannot do that."});
    const auto parse = request_queries(client, golden_request());
    CHECK_FALSE(parse.ok);
    CHECK(parse.raw == "I cannot do that.");
}

TEST_CASE("simulated client output parses round-trip") {
    SimulatedGenerationClient client;
    const auto parse = request_queries(client, golden_request());
    REQUIRE(parse.ok);
    REQUIRE(parse.queries.size() == 2);
    CHECK(parse.queries[0].find("What is the capital of France?") != std::string::npos);
}
