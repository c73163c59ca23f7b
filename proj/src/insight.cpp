#include "dualmem/insight.hpp"

namespace dualmem {

std::string_view to_string(TopicTag t) {
    switch (t) {
        case TopicTag::SearchStrategy: return "Search Strategy";
        case TopicTag::NavigationEfficiency: return "Navigation Efficiency";
        case TopicTag::StateValidation: return "State Validation";
        case TopicTag::InteractionOrder: return "Interaction Order";
    }
    return "Search Strategy";
}

std::optional<TopicTag> topic_tag_from_string(std::string_view text) {
    // Collapse runs of whitespace so "Search  Strategy" still matches.
    std::string norm;
    for (char c : trim(text)) {
        if (c == ' ' || c == '\t') {
            if (!norm.empty() && norm.back() != ' ') norm.push_back(' ');
        } else {
            norm.push_back(c);
        }
    }
    norm = to_lower(norm);
    for (TopicTag t : kAllTopicTags) {
        if (to_lower(to_string(t)) == norm) return t;
    }
    return std::nullopt;
}

bool contains_url_literal(std::string_view text) {
    const std::string lower = to_lower(text);
    return lower.find("http://") != std::string::npos || lower.find("https://") != std::string::npos;
}

bool is_valid_insight(const Insight& i) {
    return !trim(i.text).empty() && !contains_url_literal(i.text);
}

std::string render_insight(const Insight& i) {
    return "[" + std::string(to_string(i.tag)) + "] " + i.text;
}

std::string render_insight_sets(const std::vector<InsightSet>& sets) {
    std::string out;
    int n = 0;
    for (const InsightSet& set : sets) {
        for (const Insight& ins : set.insights) {
            if (!out.empty()) out += "\n";
            out += std::to_string(++n) + ". " + render_insight(ins);
        }
    }
    if (out.empty()) out = "(no insights retrieved)";
    return out;
}

}  // namespace dualmem
