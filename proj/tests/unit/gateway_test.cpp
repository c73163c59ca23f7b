#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <nlohmann/json.hpp>

#include "dualmem/gateway.hpp"
#include "fake_server.hpp"
#include "support.hpp"

using namespace dualmem;
using nlohmann::json;

namespace {

const std::string kOk = R"({"model":"m-1","choices":[{"message":{"role":"assistant","content":"hello"}}],)"
                        R"("usage":{"prompt_tokens":12,"completion_tokens":3}})";

GatewayConfig config_for(const test::FakeServer& s) {
    GatewayConfig c;
    c.endpoint = s.url("/v1/chat/completions");
    c.model_id = "m-1";
    c.api_key_env = "DUALMEM_TEST_KEY";
    c.timeout_s = 5;
    c.max_retries = 3;
    c.backoff = {std::chrono::milliseconds(1)};
    return c;
}

std::vector<ChatMessage> simple_messages() {
    return {ChatMessage::text(Role::System, "sys"), ChatMessage::text(Role::User, "hi")};
}

}  // namespace

TEST(Messages, BundleBecomesSystemPlusOneUserMessage) {
    Observation o;
    o.step_index = 1;
    o.screenshot = "placeholder:home";
    o.semantic_text = "home page";
    const auto b = assemble_vanilla_context(test::prompts(), Query{"q", "t", {}, {}}, {}, 5, o);
    const auto msgs = to_messages(b);
    ASSERT_EQ(msgs.size(), 2u);
    EXPECT_EQ(msgs[0].role, Role::System);
    EXPECT_EQ(msgs[1].role, Role::User);
    ASSERT_EQ(msgs[1].parts.size(), b.segments.size() - 1);
    EXPECT_EQ(msgs[1].images(), std::vector<std::string>{"placeholder:home"});
    EXPECT_EQ(render_messages(msgs), render_bundle(b));
    EXPECT_EQ(estimate_prompt_tokens(msgs), count_tokens(b));
}

TEST(HttpGateway, RetriesRateLimitThenSucceeds) {
    test::FakeServer s;
    std::atomic<int> hits{0};
    s.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++hits <= 2) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
            return;
        }
        res.set_content(kOk, "application/json");
    });
    s.start();
    const auto r = complete(config_for(s), simple_messages());
    EXPECT_EQ(r.attempts, 3);
    EXPECT_EQ(hits.load(), 3);
    EXPECT_EQ(r.text, "hello");
    EXPECT_EQ(r.usage.prompt_tokens, 12);
    EXPECT_EQ(r.usage.completion_tokens, 3);
    EXPECT_EQ(r.usage.source, UsageSource::ProviderReported);
}

TEST(HttpGateway, ClientErrorIsNotRetried) {
    test::FakeServer s;
    std::atomic<int> hits{0};
    s.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    s.start();
    try {
        complete(config_for(s), simple_messages());
        FAIL() << "expected ProviderError";
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.status, 400);
        EXPECT_EQ(e.attempts, 1);
        EXPECT_EQ(e.body, "bad request");
    }
    EXPECT_EQ(hits.load(), 1);
}

TEST(HttpGateway, ServerErrorsExhaustRetries) {
    test::FakeServer s;
    std::atomic<int> hits{0};
    s.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    s.start();
    auto c = config_for(s);
    c.max_retries = 2;
    try {
        complete(c, simple_messages());
        FAIL() << "expected ProviderError";
    } catch (const ProviderError& e) {
        EXPECT_EQ(e.status, 503);
        EXPECT_EQ(e.attempts, 3);
    }
    EXPECT_EQ(hits.load(), 3);
}

TEST(HttpGateway, SlowProviderTimesOut) {
    test::FakeServer s;
    s.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(800));
        res.set_content(kOk, "application/json");
    });
    s.start();
    auto c = config_for(s);
    c.timeout_s = 0.2;
    c.max_retries = 0;
    EXPECT_THROW(complete(c, simple_messages()), TimeoutError);
}

TEST(HttpGateway, UnreachableEndpointIsTransportError) {
    GatewayConfig c;
    c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    c.model_id = "m";
    c.max_retries = 1;
    c.backoff = {std::chrono::milliseconds(1)};
    try {
        complete(c, simple_messages());
        FAIL() << "expected GatewayError";
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.attempts, 2);
    }
}

TEST(HttpGateway, SendsBearerKeyAndInlineImages) {
    test::FakeServer s;
    std::string auth;
    json seen;
    s.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        seen = json::parse(req.body);
        res.set_content(R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})",
                        "application/json");
    });
    s.start();
    ::setenv("DUALMEM_TEST_KEY", "sk-test", 1);
    ChatMessage user;
    user.role = Role::User;
    user.parts = {{ContentPart::Kind::Text, "look"}, {ContentPart::Kind::Image, "placeholder:home"}};
    const auto r = complete(config_for(s), {ChatMessage::text(Role::System, "sys"), user});
    ::unsetenv("DUALMEM_TEST_KEY");

    EXPECT_EQ(auth, "Bearer sk-test");
    EXPECT_EQ(seen["model"], "m-1");
    EXPECT_EQ(seen["messages"][0]["content"], "sys");
    const json& parts = seen["messages"][1]["content"];
    ASSERT_EQ(parts.size(), 2u);
    EXPECT_EQ(parts[0]["text"], "look");
    const std::string url = parts[1]["image_url"]["url"];
    EXPECT_EQ(url.rfind("data:image/png;base64,iVBORw0KGgo", 0), 0u);

    EXPECT_EQ(r.text, "ab");
    EXPECT_EQ(r.usage.source, UsageSource::Estimated);
    EXPECT_EQ(r.usage.completion_tokens, 1);
}

TEST(HttpGateway, RejectsBadConfig) {
    GatewayConfig c;
    c.endpoint = "http://x";
    c.timeout_s = 0;
    EXPECT_THROW(HttpGateway{c}, Error);
    c.timeout_s = 1;
    c.max_retries = -1;
    EXPECT_THROW(HttpGateway{c}, Error);
}

TEST(ScriptedGateway, ReplaysAndCaptures) {
    ScriptedGateway gw({"one", "two"});
    EXPECT_EQ(gw.complete(simple_messages()).text, "one");
    const auto r = gw.complete(simple_messages());
    EXPECT_EQ(r.text, "two");
    EXPECT_EQ(r.usage.prompt_tokens, estimate_prompt_tokens(simple_messages()));
    EXPECT_EQ(gw.calls(), 2u);
    EXPECT_EQ(gw.remaining(), 0u);
    EXPECT_THROW(gw.complete(simple_messages()), ScriptExhaustedError);
    EXPECT_EQ(gw.captured().size(), 3u);
    EXPECT_THROW(ScriptedGateway({}), Error);
}

TEST(ScriptedGateway, LoadsScriptFiles) {
    const auto script = load_script(test::fixture("scripts/t01.txt"));
    EXPECT_EQ(script.size(), 6u);
    for (const auto& s : script) {
        EXPECT_EQ(s.find("====="), std::string::npos);
        EXPECT_NO_THROW(parse_agent_output(s, Mode::InExMem));
    }
    EXPECT_EQ(load_script(test::fixture("scripts/loop.txt")).size(), 60u);
}

TEST(Images, PlaceholderIsDeterministicPng) {
    const std::string a = load_image_bytes("placeholder:home");
    EXPECT_EQ(a.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
    EXPECT_EQ(a, placeholder_png("home"));
    EXPECT_NE(a, placeholder_png("cart"));
    EXPECT_THROW(load_image_bytes("/no/such/file.png"), Error);
}
