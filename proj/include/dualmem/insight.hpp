#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dualmem/types.hpp"

namespace dualmem {

enum class TopicTag { SearchStrategy, NavigationEfficiency, StateValidation, InteractionOrder };

inline constexpr std::array<TopicTag, 4> kAllTopicTags = {
    TopicTag::SearchStrategy, TopicTag::NavigationEfficiency, TopicTag::StateValidation,
    TopicTag::InteractionOrder};

/// "Search Strategy", "Navigation Efficiency", ...
std::string_view to_string(TopicTag t);
/// Case-insensitive, tolerant of extra spaces. Unknown tags yield nullopt.
std::optional<TopicTag> topic_tag_from_string(std::string_view text);

struct Insight {
    TopicTag tag = TopicTag::SearchStrategy;
    std::string text;

    bool operator==(const Insight&) const = default;
};

/// True if the text carries an http:// or https:// literal (any case).
bool contains_url_literal(std::string_view text);

/// Empty text or URL literal -> false.
bool is_valid_insight(const Insight& i);

/// `[Search Strategy] text`
std::string render_insight(const Insight& i);

/// Insights of one retrieved bank entry.
struct InsightSet {
    std::size_t entry_ref = 0;
    double similarity = 0.0;
    std::vector<Insight> insights;

    bool operator==(const InsightSet&) const = default;
};

/// Numbered list of all insights in rank order (no cross-entry dedup), or a
/// "(no insights retrieved)" line.
std::string render_insight_sets(const std::vector<InsightSet>& sets);

}  // namespace dualmem
