#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dualmem {

// Base for every error raised by the library. Callers that only care about
// "something in dualmem failed" can catch this.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// How the decision context is composed at each step.
///  - Normal:  full history, windowed observations.
///  - InMem:   summary chain replaces history.
///  - ExMem:   Normal plus one block of retrieved insights.
///  - InExMem: summary chain plus insights injected into the system prompt.
enum class Mode { Normal, InMem, ExMem, InExMem };

std::string_view to_string(Mode mode);
/// Accepts "normal", "in", "ex", "in_ex" (and the enum spellings, any case).
Mode parse_mode(std::string_view text);

constexpr bool uses_internal_memory(Mode m) { return m == Mode::InMem || m == Mode::InExMem; }
constexpr bool uses_external_memory(Mode m) { return m == Mode::ExMem || m == Mode::InExMem; }

struct Query {
    std::string text;
    std::string task_id;
    std::optional<std::string> site_tag;
    std::optional<std::string> difficulty;

    bool operator==(const Query&) const = default;
};

/// Throws Error if the query text is blank.
void validate(const Query& q);

struct Viewport {
    int width = 1280;
    int height = 800;

    bool operator==(const Viewport&) const = default;
};

struct Observation {
    int step_index = 1;
    std::string screenshot;     // file path or "placeholder:<page>"
    std::string semantic_text;
    Viewport viewport;
    std::string location;       // page id (simulator) or URL (browser)

    bool operator==(const Observation&) const = default;
};

enum class UsageSource { ProviderReported, Estimated };

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    UsageSource source = UsageSource::Estimated;

    std::int64_t total() const { return prompt_tokens + completion_tokens; }
    bool operator==(const TokenUsage&) const = default;
};

/// Sums counts; the result is ProviderReported only if both sides are.
TokenUsage operator+(const TokenUsage& a, const TokenUsage& b);

std::string_view to_string(UsageSource s);
UsageSource parse_usage_source(std::string_view text);

// Small text helpers shared across modules.
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
/// Number of UTF-8 code points (counts lead bytes).
std::size_t utf8_length(std::string_view s);

}  // namespace dualmem
