#include <gtest/gtest.h>

#include "dualmem/insight.hpp"

using namespace dualmem;

TEST(TopicTag, RoundTripsAndToleratesCaseAndSpacing) {
    for (TopicTag t : kAllTopicTags) EXPECT_EQ(topic_tag_from_string(to_string(t)), t);
    EXPECT_EQ(topic_tag_from_string("  navigation   EFFICIENCY "), TopicTag::NavigationEfficiency);
    EXPECT_FALSE(topic_tag_from_string("Shopping Tips"));
    EXPECT_FALSE(topic_tag_from_string(""));
}

TEST(Insight, UrlLiteralsAreInvalid) {
    EXPECT_TRUE(contains_url_literal("see https://example.com"));
    EXPECT_TRUE(contains_url_literal("HTTP://EXAMPLE.COM"));
    EXPECT_FALSE(contains_url_literal("use the site's search field"));
    EXPECT_FALSE(is_valid_insight({TopicTag::SearchStrategy, "go to http://x.y"}));
    EXPECT_FALSE(is_valid_insight({TopicTag::SearchStrategy, "   "}));
    EXPECT_TRUE(is_valid_insight({TopicTag::SearchStrategy, "submit with Enter"}));
}

TEST(Insight, RenderingNumbersAcrossSets) {
    std::vector<InsightSet> sets = {
        {0, 0.9, {{TopicTag::SearchStrategy, "a"}, {TopicTag::StateValidation, "b"}}},
        {3, 0.5, {{TopicTag::InteractionOrder, "c"}}}};
    EXPECT_EQ(render_insight_sets(sets), "1. [Search Strategy] a\n2. [State Validation] b\n3. [Interaction Order] c");
    EXPECT_EQ(render_insight_sets({}), "(no insights retrieved)");
}
