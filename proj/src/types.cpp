#include "dualmem/types.hpp"

#include <algorithm>
#include <cctype>

namespace dualmem {

std::string_view to_string(Mode mode) {
    switch (mode) {
        case Mode::Normal: return "normal";
        case Mode::InMem: return "in";
        case Mode::ExMem: return "ex";
        case Mode::InExMem: return "in_ex";
    }
    return "normal";
}

Mode parse_mode(std::string_view text) {
    const std::string t = to_lower(trim(text));
    if (t == "normal") return Mode::Normal;
    if (t == "in" || t == "inmem" || t == "in_mem") return Mode::InMem;
    if (t == "ex" || t == "exmem" || t == "ex_mem") return Mode::ExMem;
    if (t == "in_ex" || t == "inexmem" || t == "in_ex_mem") return Mode::InExMem;
    throw Error("unknown mode '" + std::string(text) + "' (expected normal, in, ex, in_ex)");
}

void validate(const Query& q) {
    if (trim(q.text).empty()) throw Error("query text is empty");
}

TokenUsage operator+(const TokenUsage& a, const TokenUsage& b) {
    TokenUsage r;
    r.prompt_tokens = a.prompt_tokens + b.prompt_tokens;
    r.completion_tokens = a.completion_tokens + b.completion_tokens;
    r.source = (a.source == UsageSource::ProviderReported && b.source == UsageSource::ProviderReported)
                   ? UsageSource::ProviderReported
                   : UsageSource::Estimated;
    return r;
}

std::string_view to_string(UsageSource s) {
    return s == UsageSource::ProviderReported ? "provider" : "estimated";
}

UsageSource parse_usage_source(std::string_view text) {
    if (text == "provider") return UsageSource::ProviderReported;
    if (text == "estimated") return UsageSource::Estimated;
    throw Error("unknown usage source '" + std::string(text) + "'");
}

std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

}  // namespace dualmem
