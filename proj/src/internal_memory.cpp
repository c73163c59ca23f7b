#include "dualmem/internal_memory.hpp"

#include <optional>

namespace dualmem {

namespace {

constexpr std::string_view kArrow = "→";
constexpr std::string_view kAsciiArrow = "->";

std::size_t skip_spaces(std::string_view s, std::size_t i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return i;
}

// Position of the first `]<ws>arrow<ws>[` separator: returns (end of state
// bracket, start of action bracket).
std::optional<std::pair<std::size_t, std::size_t>> find_separator(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != ']') continue;
        std::size_t j = skip_spaces(s, i + 1);
        std::size_t arrow_len = 0;
        if (s.substr(j, kArrow.size()) == kArrow) {
            arrow_len = kArrow.size();
        } else if (s.substr(j, kAsciiArrow.size()) == kAsciiArrow) {
            arrow_len = kAsciiArrow.size();
        } else {
            continue;
        }
        std::size_t k = skip_spaces(s, j + arrow_len);
        if (k < s.size() && s[k] == '[') return std::make_pair(i, k);
    }
    return std::nullopt;
}

}  // namespace

std::string Summary::body() const {
    return "[" + state_part + "] " + std::string(kArrow) + " [" + action_part + "]";
}

Summary validate_summary(std::string_view raw, int step_index, std::size_t max_chars) {
    const std::string text = trim(raw);
    if (text.empty()) throw SummaryFormatError("summary is empty");
    if (utf8_length(text) > max_chars) {
        throw SummaryFormatError("summary exceeds " + std::to_string(max_chars) + " characters");
    }
    if (text.front() != '[' || text.back() != ']') {
        throw SummaryFormatError("summary must have the form [state] → [action]: " + text);
    }
    auto sep = find_separator(text);
    if (!sep) throw SummaryFormatError("summary is missing the '] → [' separator: " + text);

    Summary s;
    s.step_index = step_index;
    s.state_part = trim(std::string_view(text).substr(1, sep->first - 1));
    s.action_part = trim(std::string_view(text).substr(sep->second + 1, text.size() - sep->second - 2));
    if (s.state_part.empty()) throw SummaryFormatError("summary state part is empty");
    if (s.action_part.empty()) throw SummaryFormatError("summary action part is empty");
    return s;
}

InternalMemory InternalMemory::append(Summary s) const {
    const int expected = static_cast<int>(entries_.size()) + 1;
    if (s.step_index != expected) {
        throw GapError("summary for step " + std::to_string(s.step_index) + " does not follow step " +
                       std::to_string(expected - 1));
    }
    if (trim(s.state_part).empty() || trim(s.action_part).empty()) {
        throw SummaryFormatError("summary parts must be non-empty");
    }
    if (utf8_length(s.body()) > max_entry_chars_) {
        throw SummaryFormatError("summary exceeds " + std::to_string(max_entry_chars_) + " characters");
    }
    InternalMemory next = *this;
    next.entries_.push_back(std::move(s));
    return next;
}

InternalMemory InternalMemory::append_raw(std::string_view raw) const {
    return append(validate_summary(raw, static_cast<int>(entries_.size()) + 1, max_entry_chars_));
}

std::string InternalMemory::render() const {
    if (entries_.empty()) return std::string(kNoPriorSteps);
    std::string out;
    for (const Summary& s : entries_) {
        if (!out.empty()) out += "\n";
        out += "Step " + std::to_string(s.step_index) + ": " + s.body();
    }
    return out;
}

}  // namespace dualmem
