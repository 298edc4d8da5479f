#include "forestllm/gateway.hpp"

#include "forestllm/error.hpp"
#include "forestllm/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <set>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace forestllm {

using nlohmann::json;

const std::string& ChatRequest::user_text() const {
    static const std::string empty;
    for (auto it = messages.rbegin(); it != messages.rend(); ++it)
        if (it->role == "user") return it->content;
    return empty;
}

json wire_body(const ChatRequest& req) {
    json body;
    body["model"] = req.model_id;
    body["temperature"] = req.temperature;
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = std::move(messages);
    if (req.is_tool_call()) {
        body["tools"] = json::array({{{"type", "function"}, {"function", req.tool_schema}}});
        body["tool_choice"] = {{"type", "function"},
                               {"function", {{"name", req.tool_schema.value("name", "")}}}};
    }
    return body;
}

std::string cache_key(const ChatRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages) messages.push_back({m.role, m.content});
    // nlohmann objects are key-sorted, so dump() is canonical.
    const json keyed = {{"model_id", req.model_id},
                        {"temperature", req.temperature},
                        {"messages", messages},
                        {"tool_schema", req.tool_schema},
                        {"seed_tag", req.seed_tag}};
    return text::sha256_hex(keyed.dump());
}

ChatResponse decode_openai_response(std::string_view body) {
    ChatResponse out;
    out.raw = std::string(body);
    try {
        const auto j = json::parse(body);
        const auto& message = j.at("choices").at(0).at("message");
        if (message.contains("tool_calls") && message["tool_calls"].is_array() &&
            !message["tool_calls"].empty()) {
            const auto& fn = message["tool_calls"].at(0).at("function");
            ToolCall call;
            call.name = fn.value("name", "");
            const auto& args = fn.at("arguments");
            call.arguments = args.is_string() ? json::parse(args.get<std::string>()) : args;
            out.reply = std::move(call);
        } else {
            const auto& content = message.at("content");
            if (!content.is_string())
                throw Error(ErrorCode::MalformedResponse, "message has neither content nor tool call");
            out.reply = TextReply{content.get<std::string>()};
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedResponse, std::string("undecodable response body: ") + e.what());
    }
    return out;
}

std::string encode_openai_response(const std::variant<ToolCall, TextReply>& reply,
                                   const std::string& model_id) {
    json message = {{"role", "assistant"}};
    std::string finish = "stop";
    if (const auto* call = std::get_if<ToolCall>(&reply)) {
        message["content"] = nullptr;
        message["tool_calls"] = json::array({{{"id", "call_0"},
                                              {"type", "function"},
                                              {"function",
                                               {{"name", call->name},
                                                {"arguments", call->arguments.dump()}}}}});
        finish = "tool_calls";
    } else {
        message["content"] = std::get<TextReply>(reply).content;
    }
    const json body = {{"object", "chat.completion"},
                       {"model", model_id},
                       {"choices", json::array({{{"index", 0},
                                                 {"message", message},
                                                 {"finish_reason", finish}}})}};
    return body.dump();
}

// ---------------------------------------------------------------------------
// Network guard

namespace {
std::atomic<bool> g_network_forbidden{false};
std::atomic<std::size_t> g_live_instances{0};
}  // namespace

void set_network_forbidden(bool forbidden) { g_network_forbidden = forbidden; }

bool network_forbidden() {
    if (g_network_forbidden) return true;
    const char* env = std::getenv("FORESTLLM_OFFLINE");
    return env && std::string_view(env) == "1";
}

std::size_t live_backend_instances() { return g_live_instances.load(); }

// ---------------------------------------------------------------------------
// Live

LiveConfig LiveConfig::from_env(std::string base_url) {
    LiveConfig cfg;
    cfg.base_url = std::move(base_url);
    const char* key = std::getenv("FORESTLLM_API_KEY");
    if (!key || !*key)
        throw Error(ErrorCode::InvalidConfig, "FORESTLLM_API_KEY is not set");
    cfg.api_key = key;
    return cfg;
}

LiveBackend::LiveBackend(LiveConfig config)
    : config_(std::move(config)),
      in_flight_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, 1024)) {
    if (network_forbidden())
        throw Error(ErrorCode::NetworkForbidden, "live backend requested while network is disabled");
    ++g_live_instances;
    auto url = config_.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorCode::InvalidConfig, "base URL needs a scheme: " + config_.base_url);
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
}

ChatResponse LiveBackend::complete(const ChatRequest& req) {
    if (network_forbidden()) throw Error(ErrorCode::NetworkForbidden, "network is disabled");

    struct Permit {
        std::counting_semaphore<1024>& s;
        explicit Permit(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
        ~Permit() { s.release(); }
    } permit(in_flight_);

    const std::string body = wire_body(req).dump();
    const std::string path = path_prefix_ + "/chat/completions";
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config_.initial_backoff * (1 << (attempt - 1)));
        httplib::Client client(scheme_host_);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) return decode_openai_response(res->body);
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status == 429 || res->status >= 500) continue;
        throw Error(ErrorCode::TransportError, last_error + ": " + res->body.substr(0, 200));
    }
    throw Error(ErrorCode::TransportError,
                last_error + " after " + std::to_string(config_.max_retries) + " retries");
}

// ---------------------------------------------------------------------------
// Replay

ReplayBackend::ReplayBackend(std::filesystem::path store, std::shared_ptr<ChatBackend> fallback)
    : store_(std::move(store)), fallback_(std::move(fallback)) {}

std::filesystem::path ReplayBackend::fixture_path(const ChatRequest& req) const {
    return store_ / (cache_key(req) + ".json");
}

ChatResponse ReplayBackend::complete(const ChatRequest& req) {
    const auto key = cache_key(req);
    const auto path = store_ / (key + ".json");
    if (std::filesystem::exists(path)) {
        json fixture;
        try {
            fixture = json::parse(text::read_file(path.string()));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::MalformedResponse, "corrupt fixture " + path.string());
        }
        ++hits_;
        return decode_openai_response(fixture.at("response").get<std::string>());
    }
    if (!fallback_) throw Error(ErrorCode::CacheMiss, "no fixture for request " + key);
    auto resp = fallback_->complete(req);
    const json fixture = {{"key", key},
                          {"seed_tag", req.seed_tag},
                          {"request", wire_body(req)},
                          {"response", resp.raw}};
    text::write_file_atomic(path.string(), fixture.dump(2) + "\n");
    ++recorded_;
    return resp;
}

// ---------------------------------------------------------------------------
// Forbidden / counting

ChatResponse ForbiddenBackend::complete(const ChatRequest&) {
    throw Error(ErrorCode::NetworkForbidden, "this code path must not call a chat backend");
}

ChatResponse CountingBackend::complete(const ChatRequest& req) {
    {
        std::lock_guard lock(mutex_);
        ++per_tag_[req.seed_tag];
    }
    return inner_->complete(req);
}

std::size_t CountingBackend::calls(std::uint64_t seed_tag) const {
    std::lock_guard lock(mutex_);
    auto it = per_tag_.find(seed_tag);
    return it == per_tag_.end() ? 0 : it->second;
}

std::size_t CountingBackend::total() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [tag, c] : per_tag_) n += c;
    return n;
}

// ---------------------------------------------------------------------------
// Answer parsing

namespace {

std::optional<double> as_number(const json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        auto s = text::trim(v.get<std::string>());
        char* end = nullptr;
        const double d = std::strtod(s.c_str(), &end);
        if (!s.empty() && end == s.c_str() + s.size()) return d;
    }
    return std::nullopt;
}

}  // namespace

ParsedSplit parse_split(const ChatResponse& resp, const Schema& schema,
                        const std::vector<std::size_t>& allowed) {
    const auto* call = std::get_if<ToolCall>(&resp.reply);
    if (!call) throw Error(ErrorCode::MissingToolCall, "expected a function call, got text");
    const auto& args = call->arguments;
    if (!args.is_object()) throw Error(ErrorCode::MalformedResponse, "arguments are not an object");

    const auto feature_name = args.contains("feature") && args["feature"].is_string()
                                  ? text::trim(args["feature"].get<std::string>())
                                  : std::string();
    const auto idx = schema.feature_index(feature_name);
    if (!idx) throw Error(ErrorCode::UnknownFeature, "unknown feature '" + feature_name + "'");
    if (!std::binary_search(allowed.begin(), allowed.end(), *idx))
        throw Error(ErrorCode::UnknownFeature, "feature '" + feature_name + "' is not allowed here");
    const auto kind = schema.features[*idx].kind;

    const auto op = args.contains("operator") && args["operator"].is_string()
                        ? text::trim(args["operator"].get<std::string>())
                        : std::string();
    ParsedSplit out{NumericThreshold{}, ""};
    if (args.contains("reasoning") && args["reasoning"].is_string())
        out.reasoning = args["reasoning"].get<std::string>();

    if (op == "<=") {
        if (kind != FeatureKind::Numeric)
            throw Error(ErrorCode::OperatorKindMismatch,
                        "operator <= on categorical feature '" + feature_name + "'");
        std::optional<double> t;
        if (args.contains("threshold")) t = as_number(args["threshold"]);
        if (!t || !std::isfinite(*t))
            throw Error(ErrorCode::NonFiniteThreshold, "threshold missing or not finite");
        out.predicate = NumericThreshold{*idx, *t};
    } else if (op == "in") {
        if (kind != FeatureKind::Categorical)
            throw Error(ErrorCode::OperatorKindMismatch,
                        "operator in on numeric feature '" + feature_name + "'");
        std::set<std::string> cats;
        if (args.contains("categories")) {
            const auto& c = args["categories"];
            if (c.is_string()) {
                cats.insert(text::trim(c.get<std::string>()));
            } else if (c.is_array()) {
                for (const auto& v : c)
                    if (v.is_string()) cats.insert(text::trim(v.get<std::string>()));
            }
        }
        cats.erase("");
        if (cats.empty()) throw Error(ErrorCode::EmptyCategorySet, "no categories given for 'in'");
        out.predicate = CategoryMembership{*idx, {cats.begin(), cats.end()}};
    } else {
        throw Error(ErrorCode::OperatorKindMismatch, "unsupported operator '" + op + "'");
    }
    return out;
}

Target parse_leaf(const ChatResponse& resp, const Schema& schema) {
    const auto* reply = std::get_if<TextReply>(&resp.reply);
    if (!reply) throw Error(ErrorCode::MalformedResponse, "expected a text answer, got a tool call");
    const auto content = text::trim(reply->content);

    if (!schema.is_classification()) {
        static const std::regex number(R"([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)");
        for (std::sregex_iterator it(content.begin(), content.end(), number), end; it != end; ++it) {
            const double v = std::strtod(it->str().c_str(), nullptr);
            if (std::isfinite(v)) return v;
        }
        throw Error(ErrorCode::NoNumberFound, "no number in '" + content.substr(0, 80) + "'");
    }

    std::string last;
    for (const auto& line : text::split_lines(content)) {
        auto t = text::trim(line);
        if (!t.empty()) last = std::move(t);
    }
    auto norm = text::to_lower(last);
    // Tolerate surrounding quotes, emphasis and a closing period.
    auto strip = [](std::string s) {
        const std::string_view wrap = "\"'`*.";
        while (!s.empty() && wrap.find(s.front()) != std::string_view::npos) s.erase(0, 1);
        while (!s.empty() && wrap.find(s.back()) != std::string_view::npos) s.pop_back();
        return text::trim(s);
    };
    const auto bare = strip(norm);
    for (const auto& c : schema.classes)
        if (text::to_lower(c) == norm || text::to_lower(c) == bare) return c;

    // Whole-word occurrences only, so a class "b" is not found inside "maybe".
    auto word_at = [&](std::size_t pos, std::size_t len) {
        auto edge = [](char ch) { return !std::isalnum(static_cast<unsigned char>(ch)) && ch != '_'; };
        return (pos == 0 || edge(norm[pos - 1])) && (pos + len == norm.size() || edge(norm[pos + len]));
    };
    std::vector<std::string> hits;
    for (const auto& c : schema.classes) {
        const auto needle = text::to_lower(c);
        if (needle.empty()) continue;
        for (auto pos = norm.find(needle); pos != std::string::npos; pos = norm.find(needle, pos + 1))
            if (word_at(pos, needle.size())) {
                hits.push_back(c);
                break;
            }
    }
    if (hits.size() == 1) return hits.front();
    throw Error(ErrorCode::UnrecognizedClass, "answer '" + last.substr(0, 80) + "' names no unique class");
}

}  // namespace forestllm

namespace forestllm {

std::shared_ptr<ChatBackend> make_backend(const BackendSpec& spec) {
    auto mock = [&]() -> std::shared_ptr<ChatBackend> {
        if (spec.script.empty())
            throw Error(ErrorCode::InvalidConfig, "the mock backend needs a script file");
        return std::make_shared<MockBackend>(load_mock_script(spec.script));
    };
    auto live = [&]() -> std::shared_ptr<ChatBackend> {
        return std::make_shared<LiveBackend>(LiveConfig::from_env(spec.base_url));
    };
    if (spec.kind == "mock") return mock();
    if (spec.kind == "live") return live();
    if (spec.kind == "replay") {
        if (spec.fixtures.empty())
            throw Error(ErrorCode::InvalidConfig, "the replay backend needs a fixture directory");
        std::shared_ptr<ChatBackend> fallback;
        if (spec.record_from == "mock")
            fallback = mock();
        else if (spec.record_from == "live")
            fallback = live();
        else if (!spec.record_from.empty())
            throw Error(ErrorCode::InvalidConfig, "cannot record from '" + spec.record_from + "'");
        if (fallback) std::filesystem::create_directories(spec.fixtures);
        return std::make_shared<ReplayBackend>(spec.fixtures, fallback);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown backend '" + spec.kind + "'");
}

}  // namespace forestllm
