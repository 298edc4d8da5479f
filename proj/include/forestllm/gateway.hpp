#pragma once

#include "forestllm/dataset.hpp"
#include "forestllm/tree.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include <json.hpp>

namespace forestllm {

struct ChatMessage {
    std::string role;  // "system" | "user"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model_id;
    double temperature = 0.0;
    std::vector<ChatMessage> messages;
    nlohmann::json tool_schema;  // null: plain text completion
    std::uint64_t seed_tag = 0;  // cache key only, never sent

    bool is_tool_call() const { return !tool_schema.is_null(); }
    const std::string& user_text() const;
};

struct ToolCall {
    std::string name;
    nlohmann::json arguments;
};

struct TextReply {
    std::string content;
};

struct ChatResponse {
    std::variant<ToolCall, TextReply> reply;
    std::string raw;  // verbatim response body

    bool is_tool_call() const { return std::holds_alternative<ToolCall>(reply); }
};

/// OpenAI-compatible chat-completions request body. Tool requests force the
/// single function through tool_choice.
nlohmann::json wire_body(const ChatRequest& req);

/// SHA-256 over the canonical JSON of (model_id, temperature, messages,
/// tool_schema, seed_tag).
std::string cache_key(const ChatRequest& req);

/// Decodes an OpenAI-style response body; throws MalformedResponse.
ChatResponse decode_openai_response(std::string_view body);

/// Builds a minimal OpenAI-style body so scripted replies can be recorded and
/// replayed through the same decoder as live ones.
std::string encode_openai_response(const std::variant<ToolCall, TextReply>& reply,
                                   const std::string& model_id);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Must be safe to call concurrently.
    virtual ChatResponse complete(const ChatRequest& req) = 0;
    virtual std::string kind() const = 0;
};

// ---------------------------------------------------------------------------
// Network guard

/// Process-wide switch: while set, constructing or using a LiveBackend throws
/// NetworkForbidden. Also honoured via the FORESTLLM_OFFLINE=1 environment variable.
void set_network_forbidden(bool forbidden);
bool network_forbidden();
/// Number of LiveBackend objects ever constructed in this process.
std::size_t live_backend_instances();

// ---------------------------------------------------------------------------
// Live

struct LiveConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::ptrdiff_t max_in_flight = 4;
    std::chrono::seconds timeout{120};

    /// Reads the credential from FORESTLLM_API_KEY.
    static LiveConfig from_env(std::string base_url);
};

class LiveBackend final : public ChatBackend {
public:
    explicit LiveBackend(LiveConfig config);
    ChatResponse complete(const ChatRequest& req) override;
    std::string kind() const override { return "live"; }

private:
    LiveConfig config_;
    std::string scheme_host_;
    std::string path_prefix_;
    std::counting_semaphore<1024> in_flight_;
};

// ---------------------------------------------------------------------------
// Replay

/// One JSON file per cache key holding the verbatim request and response
/// bodies. Misses go to `fallback` (and get recorded) when one is chained.
class ReplayBackend final : public ChatBackend {
public:
    explicit ReplayBackend(std::filesystem::path store,
                           std::shared_ptr<ChatBackend> fallback = nullptr);
    ChatResponse complete(const ChatRequest& req) override;
    std::string kind() const override { return "replay"; }

    std::filesystem::path fixture_path(const ChatRequest& req) const;
    std::size_t hits() const { return hits_.load(); }
    std::size_t recorded() const { return recorded_.load(); }

private:
    std::filesystem::path store_;
    std::shared_ptr<ChatBackend> fallback_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> recorded_{0};
};

// ---------------------------------------------------------------------------
// Mock

enum class PromptKind { Split, Leaf, Any };

/// Node id embedded in a split ("Node id: ...") or leaf ("Leaf id: ...") prompt.
std::optional<std::string> prompt_node_id(const ChatRequest& req);

using MockResponder = std::function<std::variant<ToolCall, TextReply>(const ChatRequest&)>;

struct MockRule {
    PromptKind kind = PromptKind::Any;
    std::string node = "*";  // exact id, "*" or a prefix followed by '*'
    std::optional<std::uint64_t> tree;
    std::string contains;  // substring of the user message, empty = any
    /// Replies are consumed in order per (tree, node); the last one repeats.
    /// A reply is {"text": ...}, {"builtin": "classical"|"majority"}, or an
    /// object of tool-call arguments.
    std::vector<nlohmann::json> replies;
    MockResponder responder;  // used instead of `replies` when set

    bool matches(const ChatRequest& req) const;
};

/// Scripted backend; the first matching rule answers.
class MockBackend final : public ChatBackend {
public:
    explicit MockBackend(std::vector<MockRule> rules);
    ChatResponse complete(const ChatRequest& req) override;
    std::string kind() const override { return "mock"; }

    std::size_t calls() const { return calls_.load(); }

private:
    std::vector<MockRule> rules_;
    std::mutex mutex_;
    std::map<std::tuple<std::size_t, std::uint64_t, std::string>, std::size_t> cursors_;
    std::atomic<std::size_t> calls_{0};
};

/// Script file: {"rules": [{"kind": "split"|"leaf"|"any", "node": ..., "tree": ...,
/// "contains": ..., "replies": [...]}]}.
std::vector<MockRule> parse_mock_script(std::string_view json_text);
std::vector<MockRule> load_mock_script(const std::filesystem::path& path);

/// Built-in responders that read the serialized exemplars back out of a
/// prompt: "classical" proposes the best impurity split over them, "majority"
/// answers with their majority class or mean value.
std::variant<ToolCall, TextReply> builtin_classical_split(const ChatRequest& req);
std::variant<ToolCall, TextReply> builtin_majority_leaf(const ChatRequest& req);

/// Backend that fails every call; proves a code path never reaches an LLM.
class ForbiddenBackend final : public ChatBackend {
public:
    ChatResponse complete(const ChatRequest& req) override;
    std::string kind() const override { return "forbidden"; }
};

/// Counts calls per seed_tag before delegating.
class CountingBackend final : public ChatBackend {
public:
    explicit CountingBackend(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}
    ChatResponse complete(const ChatRequest& req) override;
    std::string kind() const override { return inner_->kind(); }

    std::size_t calls(std::uint64_t seed_tag) const;
    std::size_t total() const;

private:
    std::shared_ptr<ChatBackend> inner_;
    mutable std::mutex mutex_;
    std::map<std::uint64_t, std::size_t> per_tag_;
};

// ---------------------------------------------------------------------------
// Answer parsing

struct ParsedSplit {
    SplitPredicate predicate;
    std::string reasoning;
};

/// Validates a tool-call answer against the schema kinds and the tree's
/// allowed features.
ParsedSplit parse_split(const ChatResponse& resp, const Schema& schema,
                        const std::vector<std::size_t>& allowed);

/// Classification: the trimmed final line must name a class (case-insensitive
/// exact match, else a unique substring match). Regression: first finite
/// decimal number in the content.
Target parse_leaf(const ChatResponse& resp, const Schema& schema);

}  // namespace forestllm

namespace forestllm {

/// Backend selection shared by the CLI and experiment specs.
struct BackendSpec {
    std::string kind = "mock";  // live | replay | mock
    std::filesystem::path script;    // mock rules
    std::filesystem::path fixtures;  // replay store
    /// Replay misses are answered (and recorded) by this backend: "", "mock" or "live".
    std::string record_from;
    std::string base_url = "https://api.openai.com/v1";
};

std::shared_ptr<ChatBackend> make_backend(const BackendSpec& spec);

}  // namespace forestllm
