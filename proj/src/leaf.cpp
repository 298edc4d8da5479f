#include "forestllm/leaf.hpp"

#include "forestllm/distill.hpp"
#include "forestllm/error.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

namespace forestllm {

ExemplarSet retrieve_exemplars(const IndexSet& leaf_labeled, const IndexSet& tree_labeled,
                               std::size_t cap) {
    if (tree_labeled.empty())
        throw Error(ErrorCode::InsufficientData, "tree has no labeled rows");
    ExemplarSet out;
    out.fallback_context = leaf_labeled.empty();
    out.rows = out.fallback_context ? tree_labeled : leaf_labeled;
    std::sort(out.rows.begin(), out.rows.end());
    out.rows.erase(std::unique(out.rows.begin(), out.rows.end()), out.rows.end());
    if (out.rows.size() > cap) out.rows.resize(cap);
    return out;
}

LeafAssignment fallback_assignment(const ExemplarSet& exemplars, const Dataset& ds) {
    LeafAssignment a;
    a.exemplar_count = exemplars.rows.size();
    if (ds.schema.is_classification()) {
        a.source = LeafSource::FallbackMajority;
        std::map<std::string, std::size_t> counts;
        for (auto i : exemplars.rows) ++counts[std::get<std::string>(ds.target(i))];
        if (counts.empty()) {
            a.target = ds.schema.classes.front();
        } else {
            auto best = counts.begin();
            for (auto it = counts.begin(); it != counts.end(); ++it)
                if (it->second > best->second) best = it;
            a.target = best->first;
        }
        a.rationale = fmt::format("majority class of {} labeled example(s)", exemplars.rows.size());
    } else {
        a.source = LeafSource::FallbackMean;
        double sum = 0.0;
        for (auto i : exemplars.rows) sum += std::get<double>(ds.target(i));
        a.target = exemplars.rows.empty() ? 0.0 : sum / static_cast<double>(exemplars.rows.size());
        a.rationale = fmt::format("mean of {} labeled example(s)", exemplars.rows.size());
    }
    return a;
}

LeafOutcome assign_leaf(const std::string& rule, const ExemplarSet& exemplars, const Dataset& ds,
                        ChatBackend* gateway, const LeafOptions& options) {
    LeafOutcome out;
    if (!gateway) {
        out.assignment = fallback_assignment(exemplars, ds);
        return out;
    }
    const auto bundle = render_leaf_prompt(rule, gather_labeled(ds, exemplars.rows), ds.schema,
                                           options.leaf_id, exemplars.fallback_context);
    std::string feedback;
    for (int attempt = 0; attempt < 2; ++attempt) {
        ChatRequest req;
        req.model_id = options.model_id;
        req.temperature = options.temperature;
        req.messages = {{"system", bundle.system_text}, {"user", bundle.user_text + feedback}};
        req.seed_tag = options.seed_tag;

        ++out.gateway_calls;
        if (attempt > 0) ++out.retries;
        const auto resp = gateway->complete(req);
        try {
            auto target = parse_leaf(resp, ds.schema);
            if (auto* v = std::get_if<double>(&target); v && options.target_range)
                *v = std::clamp(*v, options.target_range->first, options.target_range->second);
            out.assignment.target = std::move(target);
            out.assignment.source = LeafSource::LlmInferred;
            out.assignment.exemplar_count = exemplars.rows.size();
            if (const auto* t = std::get_if<TextReply>(&resp.reply))
                out.assignment.rationale = text::trim(t->content);
            return out;
        } catch (const Error& e) {
            const auto c = e.code();
            if (c != ErrorCode::UnrecognizedClass && c != ErrorCode::NoNumberFound &&
                c != ErrorCode::MalformedResponse)
                throw;
            feedback = ds.schema.is_classification()
                           ? "\n\nYour previous answer did not name one of the possible classes. "
                             "Reply with exactly one class from the list."
                           : "\n\nYour previous answer contained no number. Reply with a single "
                             "number.";
        }
    }
    out.assignment = fallback_assignment(exemplars, ds);
    out.assignment.rationale += " after unusable answers";
    return out;
}

}  // namespace forestllm
