#include "dualmem/gateway.hpp"

#include <spdlog/spdlog.h>
#include <zlib.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "encoding.hpp"
#include "http_util.hpp"

namespace dualmem {

using nlohmann::json;

std::string_view to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

ChatMessage ChatMessage::text(Role role, std::string body) {
    return ChatMessage{role, {ContentPart{ContentPart::Kind::Text, std::move(body)}}};
}

std::string ChatMessage::joined_text() const {
    std::string out;
    for (const ContentPart& p : parts) {
        if (p.kind != ContentPart::Kind::Text) continue;
        if (!out.empty()) out += "\n\n";
        out += p.value;
    }
    return out;
}

std::vector<std::string> ChatMessage::images() const {
    std::vector<std::string> out;
    for (const ContentPart& p : parts) {
        if (p.kind == ContentPart::Kind::Image) out.push_back(p.value);
    }
    return out;
}

std::vector<ChatMessage> to_messages(const ContextBundle& bundle) {
    ChatMessage system{Role::System, {}};
    ChatMessage user{Role::User, {}};
    for (const Segment& s : bundle.segments) {
        if (s.kind == SegmentKind::SystemPrompt) {
            system.parts.push_back({ContentPart::Kind::Text, s.payload});
        } else if (s.kind == SegmentKind::ObservationImage) {
            user.parts.push_back({ContentPart::Kind::Image, s.payload});
        } else {
            user.parts.push_back({ContentPart::Kind::Text, s.payload});
        }
    }
    return {std::move(system), std::move(user)};
}

std::string render_messages(const std::vector<ChatMessage>& messages) {
    std::string out;
    for (const ChatMessage& m : messages) {
        out += "=== " + std::string(to_string(m.role)) + " ===\n";
        std::string body;
        for (const ContentPart& p : m.parts) {
            if (!body.empty()) body += "\n\n";
            body += p.kind == ContentPart::Kind::Image ? "[image: " + p.value + "]" : p.value;
        }
        out += body + "\n";
    }
    return out;
}

std::int64_t estimate_prompt_tokens(const std::vector<ChatMessage>& messages, const TokenEstimator& est) {
    std::int64_t total = 0;
    for (const ChatMessage& m : messages) {
        for (const ContentPart& p : m.parts) {
            total += p.kind == ContentPart::Kind::Image ? est.image_cost : est.text_tokens(p.value);
        }
    }
    return total;
}

void GatewayConfig::validate() const {
    if (!(timeout_s > 0)) throw Error("gateway timeout must be positive");
    if (max_retries < 0) throw Error("gateway max_retries must be >= 0");
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

std::string image_mime(const std::string& ref) {
    auto ext = to_lower(std::filesystem::path(ref).extension().string());
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    return "image/png";
}

json message_json(const ChatMessage& m) {
    json j;
    j["role"] = to_string(m.role);
    bool has_image = false;
    for (const auto& p : m.parts) has_image |= p.kind == ContentPart::Kind::Image;
    if (!has_image) {
        j["content"] = m.joined_text();
        return j;
    }
    json parts = json::array();
    for (const ContentPart& p : m.parts) {
        if (p.kind == ContentPart::Kind::Text) {
            parts.push_back({{"type", "text"}, {"text", p.value}});
        } else {
            std::string url = "data:" + image_mime(p.value) + ";base64," +
                              detail::base64_encode(load_image_bytes(p.value));
            parts.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
        }
    }
    j["content"] = std::move(parts);
    return j;
}

std::string response_text(const json& body) {
    const json& content = body.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string out;
    for (const json& part : content) {
        if (part.value("type", "") == "text") out += part.value("text", "");
    }
    return out;
}

}  // namespace

HttpGateway::HttpGateway(GatewayConfig config) : config_(std::move(config)) { config_.validate(); }

std::string HttpGateway::request_body(const std::vector<ChatMessage>& messages) const {
    json body;
    body["model"] = config_.model_id;
    body["messages"] = json::array();
    for (const ChatMessage& m : messages) body["messages"].push_back(message_json(m));
    return body.dump();
}

ModelResponse HttpGateway::complete(const std::vector<ChatMessage>& messages) {
    const detail::Url url = detail::parse_url(config_.endpoint);
    const std::string body = request_body(messages);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const int max_attempts = 1 + config_.max_retries;
    for (int attempt = 1;; ++attempt) {
        const auto started = std::chrono::steady_clock::now();
        auto client = detail::make_client(url, config_.timeout_s);
        auto res = client->Post(url.path, headers, body, "application/json");
        const auto elapsed = std::chrono::steady_clock::now() - started;
        const bool last = attempt >= max_attempts;

        auto backoff = [&] {
            if (config_.backoff.empty()) return;
            const auto idx = std::min<std::size_t>(static_cast<std::size_t>(attempt - 1), config_.backoff.size() - 1);
            std::this_thread::sleep_for(config_.backoff[idx]);
        };

        if (!res) {
            const auto err = res.error();
            const bool timed_out =
                err == httplib::Error::ConnectionTimeout ||
                (err == httplib::Error::Read &&
                 std::chrono::duration<double>(elapsed).count() >= 0.9 * config_.timeout_s);
            spdlog::warn("gateway attempt {}/{} failed: {}", attempt, max_attempts, httplib::to_string(err));
            if (last) {
                if (timed_out) {
                    throw TimeoutError("request timed out after " + std::to_string(attempt) + " attempts", attempt);
                }
                throw TransportError("transport error: " + httplib::to_string(err), attempt);
            }
            backoff();
            continue;
        }

        if (res->status == 429 || res->status >= 500) {
            spdlog::warn("gateway attempt {}/{} got HTTP {}", attempt, max_attempts, res->status);
            if (last) throw ProviderError(res->status, res->body, attempt);
            backoff();
            continue;
        }
        if (res->status < 200 || res->status >= 300) throw ProviderError(res->status, res->body, attempt);

        ModelResponse out;
        out.attempts = attempt;
        out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
        try {
            const json parsed = json::parse(res->body);
            out.text = response_text(parsed);
            out.model_id = parsed.value("model", config_.model_id);
            if (parsed.contains("usage") && parsed["usage"].is_object()) {
                out.usage.prompt_tokens = parsed["usage"].value("prompt_tokens", 0);
                out.usage.completion_tokens = parsed["usage"].value("completion_tokens", 0);
                out.usage.source = UsageSource::ProviderReported;
            } else {
                TokenEstimator est{config_.image_cost};
                out.usage.prompt_tokens = estimate_prompt_tokens(messages, est);
                out.usage.completion_tokens = est.text_tokens(out.text);
                out.usage.source = UsageSource::Estimated;
            }
        } catch (const json::exception& e) {
            throw ProviderError(res->status, "unreadable response: " + std::string(e.what()), attempt);
        }
        return out;
    }
}

ModelResponse complete(const GatewayConfig& config, const std::vector<ChatMessage>& messages) {
    HttpGateway gw(config);
    return gw.complete(messages);
}

// ---------------------------------------------------------------------------
// Scripted mock

ScriptedGateway::ScriptedGateway(std::vector<std::string> script, TokenEstimator est, std::string id)
    : script_(std::move(script)), est_(est), id_(std::move(id)) {
    if (script_.empty()) throw Error("mock model script is empty");
}

ModelResponse ScriptedGateway::complete(const std::vector<ChatMessage>& messages) {
    captured_.push_back(messages);
    if (cursor_ >= script_.size()) {
        throw ScriptExhaustedError("script exhausted after " + std::to_string(script_.size()) + " completions", 1);
    }
    ModelResponse r;
    r.text = script_[cursor_++];
    r.model_id = id_;
    r.usage.prompt_tokens = estimate_prompt_tokens(messages, est_);
    r.usage.completion_tokens = est_.text_tokens(r.text);
    r.usage.source = UsageSource::Estimated;
    return r;
}

std::size_t ScriptedGateway::calls() const { return captured_.size(); }
std::size_t ScriptedGateway::remaining() const { return script_.size() - cursor_; }

std::unique_ptr<ScriptedGateway> mock_model(std::vector<std::string> script, TokenEstimator est) {
    return std::make_unique<ScriptedGateway>(std::move(script), est);
}

std::vector<std::string> load_script(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read script " + path.string());
    std::vector<std::string> out;
    std::string current, line;
    auto flush = [&] {
        std::string t = trim(current);
        if (!t.empty()) out.push_back(std::move(t));
        current.clear();
    };
    while (std::getline(in, line)) {
        if (trim(line) == "=====") {
            flush();
        } else {
            current += line + "\n";
        }
    }
    flush();
    return out;
}

// ---------------------------------------------------------------------------
// Images

std::string load_image_bytes(const std::string& ref) {
    constexpr std::string_view kPlaceholder = "placeholder:";
    if (ref.rfind(kPlaceholder, 0) == 0) return placeholder_png(std::string_view(ref).substr(kPlaceholder.size()));
    std::ifstream in(ref, std::ios::binary);
    if (!in) throw Error("cannot read image " + ref);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

void put_chunk(std::string& out, std::string_view type, std::string_view data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    std::string body(type);
    body.append(data);
    out += body;
    put_u32(out, static_cast<std::uint32_t>(
                     crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

std::string placeholder_png(std::string_view label, int width, int height) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : label) h = (h ^ c) * 16777619u;
    const unsigned char rgb[3] = {static_cast<unsigned char>(h), static_cast<unsigned char>(h >> 8),
                                  static_cast<unsigned char>(h >> 16)};

    std::string raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
    for (int y = 0; y < height; ++y) {
        raw.push_back('\0');  // filter: none
        for (int x = 0; x < width; ++x) raw.append(reinterpret_cast<const char*>(rgb), 3);
    }
    uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(packed_len, '\0');
    compress(reinterpret_cast<Bytef*>(packed.data()), &packed_len, reinterpret_cast<const Bytef*>(raw.data()),
             static_cast<uLong>(raw.size()));
    packed.resize(packed_len);

    std::string ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(width));
    put_u32(ihdr, static_cast<std::uint32_t>(height));
    ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB

    std::string png("\x89PNG\r\n\x1a\n", 8);
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", packed);
    put_chunk(png, "IEND", "");
    return png;
}

}  // namespace dualmem
