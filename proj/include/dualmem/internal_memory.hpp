#pragma once

// Per-task summary chain. Each entry abstracts one finished step as
// `[state before the action] → [action taken]`; raw observations and
// thoughts of finished steps never re-enter the prompt.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "dualmem/types.hpp"

namespace dualmem {

inline constexpr std::size_t kDefaultMaxSummaryChars = 400;
inline constexpr std::string_view kNoPriorSteps = "(no prior steps)";

struct Summary {
    int step_index = 0;
    std::string state_part;
    std::string action_part;

    /// `[state] → [action]`
    std::string body() const;
    bool operator==(const Summary&) const = default;
};

struct SummaryFormatError : Error {
    using Error::Error;
};

struct GapError : Error {
    using Error::Error;
};

/// Parses `[A] → [B]` (or `[A] -> [B]`). Parts are trimmed and must be
/// non-empty; the whole text must fit in `max_chars` code points.
Summary validate_summary(std::string_view raw, int step_index,
                         std::size_t max_chars = kDefaultMaxSummaryChars);

class InternalMemory {
public:
    InternalMemory() = default;
    explicit InternalMemory(std::size_t max_entry_chars) : max_entry_chars_(max_entry_chars) {}

    /// Returns a new memory with `s` appended; `*this` is unchanged.
    /// Throws GapError unless s.step_index == size() + 1.
    [[nodiscard]] InternalMemory append(Summary s) const;

    /// Validates `raw` against this memory's budget and appends it as the next step.
    [[nodiscard]] InternalMemory append_raw(std::string_view raw) const;

    const std::vector<Summary>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t max_entry_chars() const { return max_entry_chars_; }

    /// `Step i: [state] → [action]` lines, or the no-prior-steps placeholder.
    std::string render() const;

    bool operator==(const InternalMemory&) const = default;

private:
    std::vector<Summary> entries_;
    std::size_t max_entry_chars_ = kDefaultMaxSummaryChars;
};

}  // namespace dualmem
