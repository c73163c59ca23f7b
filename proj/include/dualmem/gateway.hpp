#pragma once

// Chat-completion access for the agent, abstractor and judge roles.

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dualmem/context.hpp"
#include "dualmem/types.hpp"

namespace dualmem {

enum class Role { System, User, Assistant };
std::string_view to_string(Role r);

struct ContentPart {
    enum class Kind { Text, Image } kind = Kind::Text;
    std::string value;  // text, or image reference

    bool operator==(const ContentPart&) const = default;
};

struct ChatMessage {
    Role role = Role::User;
    std::vector<ContentPart> parts;

    static ChatMessage text(Role role, std::string body);

    /// Concatenation of the text parts.
    std::string joined_text() const;
    std::vector<std::string> images() const;
    bool operator==(const ChatMessage&) const = default;
};

/// System prompt becomes the system message; every other segment becomes
/// one part of a single user message, in bundle order.
std::vector<ChatMessage> to_messages(const ContextBundle& bundle);

/// Same format as render_bundle, so a captured prompt can be compared with
/// the bundle it came from.
std::string render_messages(const std::vector<ChatMessage>& messages);

/// Estimated prompt size of a message list.
std::int64_t estimate_prompt_tokens(const std::vector<ChatMessage>& messages,
                                    const TokenEstimator& est = {});

struct ModelResponse {
    std::string text;
    TokenUsage usage;
    std::string model_id;
    std::int64_t latency_ms = 0;
    int attempts = 1;
};

struct GatewayConfig {
    std::string endpoint;  // e.g. http://localhost:8000/v1/chat/completions
    std::string model_id;
    std::string api_key_env = "DUALMEM_API_KEY";
    double timeout_s = 120.0;
    int max_retries = 3;
    std::vector<std::chrono::milliseconds> backoff = {std::chrono::milliseconds(1000),
                                                      std::chrono::milliseconds(2000),
                                                      std::chrono::milliseconds(4000)};
    std::int64_t image_cost = 1100;  // used when the provider reports no usage

    /// Throws Error on timeout_s <= 0 or max_retries < 0.
    void validate() const;
    bool operator==(const GatewayConfig&) const = default;
};

struct GatewayError : Error {
    GatewayError(const std::string& msg, int attempts_) : Error(msg), attempts(attempts_) {}
    int attempts;
};

struct TransportError : GatewayError {
    using GatewayError::GatewayError;
};

struct ProviderError : GatewayError {
    ProviderError(int status_, std::string body_, int attempts_)
        : GatewayError("provider returned HTTP " + std::to_string(status_), attempts_),
          status(status_), body(std::move(body_)) {}
    int status;
    std::string body;
};

struct TimeoutError : GatewayError {
    using GatewayError::GatewayError;
};

struct ScriptExhaustedError : GatewayError {
    using GatewayError::GatewayError;
};

class ModelGateway {
public:
    virtual ~ModelGateway() = default;
    virtual ModelResponse complete(const std::vector<ChatMessage>& messages) = 0;
    virtual std::string model_id() const = 0;
};

/// OpenAI-style chat-completions client over HTTP(S).
///
/// Transport failures, timeouts, 429 and 5xx responses are retried on the
/// fixed backoff schedule (the last entry repeats); any other 4xx fails
/// immediately. At most 1 + max_retries requests are sent per call.
class HttpGateway final : public ModelGateway {
public:
    explicit HttpGateway(GatewayConfig config);

    ModelResponse complete(const std::vector<ChatMessage>& messages) override;
    std::string model_id() const override { return config_.model_id; }

    /// Request body as sent on the wire (images inlined as data URLs).
    std::string request_body(const std::vector<ChatMessage>& messages) const;

private:
    GatewayConfig config_;
};

/// Free-function form of HttpGateway::complete.
ModelResponse complete(const GatewayConfig& config, const std::vector<ChatMessage>& messages);

/// Returns scripted completions in order and records every prompt it saw.
/// Usage is estimated from the prompt and completion text.
class ScriptedGateway final : public ModelGateway {
public:
    explicit ScriptedGateway(std::vector<std::string> script, TokenEstimator est = {},
                             std::string id = "scripted-mock");

    ModelResponse complete(const std::vector<ChatMessage>& messages) override;
    std::string model_id() const override { return id_; }

    std::size_t calls() const;
    std::size_t remaining() const;
    const std::vector<std::vector<ChatMessage>>& captured() const { return captured_; }

private:
    std::vector<std::string> script_;
    std::size_t cursor_ = 0;
    TokenEstimator est_;
    std::string id_;
    std::vector<std::vector<ChatMessage>> captured_;
};

std::unique_ptr<ScriptedGateway> mock_model(std::vector<std::string> script, TokenEstimator est = {});

/// Reads a script file: completions separated by lines consisting of "=====".
std::vector<std::string> load_script(const std::filesystem::path& path);

/// Image reference to bytes: reads a file, or renders a solid-colour PNG for
/// "placeholder:<page>" references.
std::string load_image_bytes(const std::string& ref);

/// Solid colour derived from `label`, as a PNG.
std::string placeholder_png(std::string_view label, int width = 64, int height = 40);

}  // namespace dualmem
