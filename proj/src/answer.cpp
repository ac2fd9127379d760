#include "ragpipe/answer.hpp"

#include <algorithm>
#include <climits>
#include <map>
#include <numeric>
#include <tuple>

#include "ragpipe/querygen.hpp"
#include "ragpipe/retrieval.hpp"

#include <ragpipe/answer_prompt.inc>

namespace ragpipe {
namespace {

struct Slot {
    int query_ordinal;
    int passage_rank;
};

using WindowKey = std::tuple<std::string, int, std::size_t, std::size_t>;

}  // namespace

std::string_view answer_prompt_template() { return detail::kAnswerPromptTemplate; }

OrderedContext order_snippets(const ResearchContext& ctx) {
    // Every (query, rank) position a passage earned, in query order.
    std::map<PassageKey, std::vector<Slot>> slots;
    for (std::size_t q = 0; q < ctx.per_query_results.size(); ++q) {
        const auto& result = ctx.per_query_results[q];
        for (std::size_t r = 0; r < result.passages.size(); ++r) {
            const auto& p = result.passages[r];
            slots[PassageKey{p.doc_id, p.passage_index}].push_back(
                Slot{static_cast<int>(q), static_cast<int>(r + 1)});
        }
    }

    // A passage retrieved by several queries carries one snippet instance per
    // retrieval for each surviving window; hand the j-th instance of a window
    // the passage's j-th slot. Which instance gets which slot is immaterial —
    // the instances are identical — so this is input-order independent.
    std::map<WindowKey, std::size_t> seen;
    std::vector<SnippetProvenance> provenance(ctx.snippets.size());
    for (std::size_t i = 0; i < ctx.snippets.size(); ++i) {
        const auto& s = ctx.snippets[i];
        const std::size_t j = seen[WindowKey{s.doc_id, s.passage_index, s.char_begin,
                                             s.char_end}]++;
        const auto it = slots.find(PassageKey{s.doc_id, s.passage_index});
        if (it != slots.end() && j < it->second.size()) {
            provenance[i] = SnippetProvenance{it->second[j].query_ordinal,
                                              it->second[j].passage_rank, s.char_begin};
        } else {
            // No recorded retrieval for this instance; sort it to the end.
            provenance[i] = SnippetProvenance{INT_MAX, INT_MAX, s.char_begin};
        }
    }

    std::vector<std::size_t> order(ctx.snippets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = provenance[a];
        const auto& pb = provenance[b];
        return std::tuple(pa.query_ordinal, pa.passage_rank, pa.char_start,
                          ctx.snippets[a].char_end) < std::tuple(pb.query_ordinal,
                                                                 pb.passage_rank, pb.char_start,
                                                                 ctx.snippets[b].char_end);
    });

    OrderedContext out;
    out.snippets.reserve(order.size());
    out.provenance.reserve(order.size());
    for (const std::size_t i : order) {
        out.snippets.push_back(ctx.snippets[i]);
        out.provenance.push_back(provenance[i]);
    }
    return out;
}

std::string assemble_context(const OrderedContext& ordered) {
    std::string out;
    for (std::size_t i = 0; i < ordered.snippets.size(); ++i) {
        if (i > 0) out += '\n';
        out += ordered.snippets[i].text;
    }
    return out;
}

std::string build_answer_prompt(const std::string& context, const std::string& question,
                                int total_words) {
    if (total_words <= 0)
        throw std::invalid_argument("build_answer_prompt: total_words must be positive");
    return render_prompt_template(answer_prompt_template(),
                                  {{"context", context},
                                   {"question", question},
                                   {"total_words", std::to_string(total_words)}});
}

std::vector<std::string> dedup_documents(const ResearchContext& ctx) {
    std::vector<std::string> out;
    for (const auto& result : ctx.per_query_results)
        for (const auto& p : result.passages)
            if (std::find(out.begin(), out.end(), p.doc_id) == out.end())
                out.push_back(p.doc_id);
    return out;
}

AnswerRecord generate_answer(const ResearchContext& ctx, const OrderedContext& ordered,
                             GenerationClient& client, int total_words) {
    const std::string context = assemble_context(ordered);
    const std::string prompt = build_answer_prompt(context, ctx.question.text, total_words);

    AnswerRecord record;
    record.question_id = ctx.question.id;
    record.answer = client.generate("", prompt);
    record.doc_ids = dedup_documents(ctx);
    record.final_prompt = prompt;
    record.stats.num_unique_docs = static_cast<int>(record.doc_ids.size());
    record.stats.num_snippets = static_cast<int>(ordered.snippets.size());
    record.stats.prompt_chars = static_cast<int>(utf8_length(prompt));
    return record;
}

}  // namespace ragpipe
