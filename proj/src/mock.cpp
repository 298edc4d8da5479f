#include "forestllm/distill.hpp"
#include "forestllm/error.hpp"
#include "forestllm/gateway.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

namespace forestllm {

using nlohmann::json;

std::optional<std::string> prompt_node_id(const ChatRequest& req) {
    for (const auto& line : text::split_lines(req.user_text())) {
        for (std::string_view prefix : {"Node id: ", "Leaf id: "}) {
            if (line.starts_with(prefix)) return text::trim(line.substr(prefix.size()));
        }
    }
    return std::nullopt;
}

bool MockRule::matches(const ChatRequest& req) const {
    if (kind == PromptKind::Split && !req.is_tool_call()) return false;
    if (kind == PromptKind::Leaf && req.is_tool_call()) return false;
    if (tree && *tree != req.seed_tag) return false;
    if (!contains.empty() && req.user_text().find(contains) == std::string::npos) return false;
    if (node != "*") {
        const auto id = prompt_node_id(req).value_or("");
        if (node.ends_with('*')) {
            if (!id.starts_with(std::string_view(node).substr(0, node.size() - 1))) return false;
        } else if (id != node) {
            return false;
        }
    }
    return true;
}

MockBackend::MockBackend(std::vector<MockRule> rules) : rules_(std::move(rules)) {}

ChatResponse MockBackend::complete(const ChatRequest& req) {
    ++calls_;
    std::size_t rule_index = rules_.size();
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (rules_[i].matches(req)) {
            rule_index = i;
            break;
        }
    }
    if (rule_index == rules_.size())
        throw Error(ErrorCode::NoScriptMatch,
                    "no mock rule for " + std::string(req.is_tool_call() ? "split" : "leaf") +
                        " prompt at " + prompt_node_id(req).value_or("?") + " (tree " +
                        std::to_string(req.seed_tag) + ")");
    const auto& rule = rules_[rule_index];

    std::variant<ToolCall, TextReply> reply;
    if (rule.responder) {
        reply = rule.responder(req);
    } else {
        json spec;
        {
            std::lock_guard lock(mutex_);
            auto& cursor =
                cursors_[{rule_index, req.seed_tag, prompt_node_id(req).value_or("")}];
            spec = rule.replies[std::min(cursor, rule.replies.size() - 1)];
            ++cursor;
        }
        if (spec.contains("builtin")) {
            const auto name = spec["builtin"].get<std::string>();
            reply = name == "classical" ? builtin_classical_split(req) : builtin_majority_leaf(req);
        } else if (spec.contains("text")) {
            const auto& t = spec["text"];
            reply = TextReply{t.is_string() ? t.get<std::string>() : t.dump()};
        } else {
            reply = ToolCall{req.tool_schema.value("name", std::string(kSplitToolName)), spec};
        }
    }
    return decode_openai_response(encode_openai_response(reply, req.model_id));
}

std::vector<MockRule> parse_mock_script(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("mock script is not JSON: ") + e.what());
    }
    if (!doc.contains("rules") || !doc["rules"].is_array())
        throw Error(ErrorCode::InvalidConfig, "mock script needs a \"rules\" array");
    std::vector<MockRule> rules;
    for (const auto& r : doc["rules"]) {
        MockRule rule;
        const auto kind = r.value("kind", std::string("any"));
        if (kind == "split")
            rule.kind = PromptKind::Split;
        else if (kind == "leaf")
            rule.kind = PromptKind::Leaf;
        else if (kind == "any")
            rule.kind = PromptKind::Any;
        else
            throw Error(ErrorCode::InvalidConfig, "unknown mock rule kind '" + kind + "'");
        rule.node = r.value("node", std::string("*"));
        if (r.contains("tree")) rule.tree = r["tree"].get<std::uint64_t>();
        rule.contains = r.value("contains", std::string());
        if (r.contains("reply")) rule.replies.push_back(r["reply"]);
        if (r.contains("replies")) {
            for (const auto& rep : r["replies"]) rule.replies.push_back(rep);
        }
        if (rule.replies.empty())
            throw Error(ErrorCode::InvalidConfig, "mock rule without replies");
        for (const auto& rep : rule.replies) {
            if (!rep.is_object())
                throw Error(ErrorCode::InvalidConfig, "mock reply must be an object");
            if (rep.contains("builtin")) {
                const auto b = rep["builtin"];
                if (!b.is_string() || (b != "classical" && b != "majority"))
                    throw Error(ErrorCode::InvalidConfig, "unknown builtin " + b.dump());
            }
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::vector<MockRule> load_mock_script(const std::filesystem::path& path) {
    return parse_mock_script(text::read_file(path.string()));
}

// ---------------------------------------------------------------------------
// Built-in responders. They only see the prompt text, like a real model.

namespace {

struct Exemplar {
    std::vector<std::string> values;  // "Unknown" for missing
    std::string target;
};

std::vector<std::string> section_lines(const std::string& user, std::string_view header_prefix) {
    std::vector<std::string> out;
    bool inside = false;
    for (const auto& line : text::split_lines(user)) {
        if (!inside) {
            inside = line.starts_with(header_prefix);
            continue;
        }
        if (line.starts_with("## ")) break;
        out.push_back(line);
    }
    return out;
}

std::optional<Exemplar> parse_exemplar(const std::string& line,
                                       const std::vector<std::string>& names) {
    const auto arrow = line.rfind(" -> ");
    if (arrow == std::string::npos) return std::nullopt;
    Exemplar ex;
    ex.target = line.substr(arrow + 4);
    const std::string lhs = line.substr(0, arrow);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto head = names[i] + " is ";
        if (lhs.compare(pos, head.size(), head) != 0) return std::nullopt;
        pos += head.size();
        std::size_t end;
        if (i + 1 < names.size()) {
            end = lhs.find(". " + names[i + 1] + " is ", pos);
            if (end == std::string::npos) return std::nullopt;
        } else {
            if (lhs.empty() || lhs.back() != '.') return std::nullopt;
            end = lhs.size() - 1;
        }
        ex.values.push_back(lhs.substr(pos, end - pos));
        pos = end + 2;
    }
    return ex;
}

bool is_regression_prompt(const std::string& user) {
    for (const auto& line : text::split_lines(user))
        if (line.starts_with("Target: ")) return line.ends_with("(regression)");
    return user.find("Reply with a single number") != std::string::npos;
}

std::optional<double> to_double(const std::string& s) {
    if (s == kUnknown || s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return v;
}

double impurity_of(const std::vector<const Exemplar*>& rows, bool regression) {
    if (rows.empty()) return 0.0;
    const double n = static_cast<double>(rows.size());
    if (regression) {
        double mean = 0.0;
        for (const auto* r : rows) mean += std::strtod(r->target.c_str(), nullptr);
        mean /= n;
        double ss = 0.0;
        for (const auto* r : rows) {
            const double d = std::strtod(r->target.c_str(), nullptr) - mean;
            ss += d * d;
        }
        return ss / n;
    }
    std::map<std::string, double> counts;
    for (const auto* r : rows) counts[r->target] += 1.0;
    double g = 1.0;
    for (const auto& [c, k] : counts) g -= (k / n) * (k / n);
    return g;
}

}  // namespace

std::variant<ToolCall, TextReply> builtin_classical_split(const ChatRequest& req) {
    const auto& user = req.user_text();
    std::vector<std::string> names;
    if (req.tool_schema.is_object()) {
        const auto& props = req.tool_schema["parameters"]["properties"];
        for (const auto& n : props["feature"]["enum"]) names.push_back(n.get<std::string>());
    }
    if (names.empty()) throw Error(ErrorCode::MalformedResponse, "split prompt lists no features");

    std::set<std::string> numeric;
    for (const auto& line : section_lines(user, "## Feature summary")) {
        for (const auto& n : names)
            if (line.starts_with("- " + n + " (numeric):")) numeric.insert(n);
    }

    std::vector<Exemplar> exemplars;
    for (const auto& line : section_lines(user, "## Labeled examples at this node")) {
        if (auto ex = parse_exemplar(line, names)) exemplars.push_back(std::move(*ex));
    }
    const bool regression = is_regression_prompt(user);

    double best_gain = 0.0;
    json best;
    for (std::size_t f = 0; f < names.size(); ++f) {
        std::vector<const Exemplar*> observed;
        for (const auto& ex : exemplars)
            if (ex.values[f] != kUnknown) observed.push_back(&ex);
        const double parent = impurity_of(observed, regression);
        const double n = static_cast<double>(observed.size());
        auto gain_of = [&](auto goes_left) {
            std::vector<const Exemplar*> l, r;
            for (const auto* ex : observed) (goes_left(*ex) ? l : r).push_back(ex);
            if (l.empty() || r.empty()) return 0.0;
            return parent - (l.size() / n) * impurity_of(l, regression) -
                   (r.size() / n) * impurity_of(r, regression);
        };
        if (numeric.count(names[f])) {
            std::set<double> values;
            for (const auto* ex : observed)
                if (auto v = to_double(ex->values[f])) values.insert(*v);
            for (auto it = values.begin(); it != values.end() && std::next(it) != values.end(); ++it) {
                const double t = (*it + *std::next(it)) / 2.0;
                const double g = gain_of([&](const Exemplar& ex) {
                    return to_double(ex.values[f]).value_or(t) <= t;
                });
                if (g > best_gain + 1e-12) {
                    best_gain = g;
                    best = {{"feature", names[f]}, {"operator", "<="}, {"threshold", t}};
                }
            }
        } else {
            std::set<std::string> cats;
            for (const auto* ex : observed) cats.insert(ex->values[f]);
            for (const auto& c : cats) {
                const double g = gain_of([&](const Exemplar& ex) { return ex.values[f] == c; });
                if (g > best_gain + 1e-12) {
                    best_gain = g;
                    best = {{"feature", names[f]}, {"operator", "in"}, {"categories", {c}}};
                }
            }
        }
    }
    if (best.is_null()) {
        // Nothing separates the exemplars: propose a split that sends every row left.
        const auto& n0 = names.front();
        if (numeric.count(n0))
            best = {{"feature", n0}, {"operator", "<="}, {"threshold", 1e300}};
        else
            best = {{"feature", n0}, {"operator", "in"}, {"categories", {"Unknown"}}};
    }
    best["reasoning"] = "Largest impurity decrease over the labeled examples.";
    return ToolCall{req.tool_schema.value("name", std::string(kSplitToolName)), best};
}

std::variant<ToolCall, TextReply> builtin_majority_leaf(const ChatRequest& req) {
    const auto& user = req.user_text();
    const bool regression = is_regression_prompt(user);
    std::vector<std::string> targets;
    for (const auto& line : section_lines(user, "## Labeled examples")) {
        const auto arrow = line.rfind(" -> ");
        if (arrow != std::string::npos) targets.push_back(line.substr(arrow + 4));
    }
    if (regression) {
        double sum = 0.0;
        for (const auto& t : targets) sum += std::strtod(t.c_str(), nullptr);
        const double mean = targets.empty() ? 0.0 : sum / static_cast<double>(targets.size());
        return TextReply{text::format_significant(mean, 6)};
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& t : targets) ++counts[t];
    if (counts.empty()) {
        for (const auto& line : section_lines(user, "## Answer")) {
            if (line.starts_with("Possible classes: ")) {
                auto rest = line.substr(std::string_view("Possible classes: ").size());
                return TextReply{text::trim(rest.substr(0, rest.find(", ")))};
            }
        }
        throw Error(ErrorCode::MalformedResponse, "leaf prompt lists no classes");
    }
    // std::map iterates lexicographically, so the first maximum wins ties.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return TextReply{best->first};
}

}  // namespace forestllm
