#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "qdsched/evolution.hpp"
#include "qdsched/remote_generator.hpp"

using namespace qdsched;

namespace {

// Minimal chat-completion endpoint that answers with a scripted status
// sequence and records the last request it saw.
class MockEndpoint {
public:
    MockEndpoint() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int n = calls_++;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            const int status = n < static_cast<int>(statuses_.size()) ? statuses_[static_cast<std::size_t>(n)] : 200;
            res.status = status;
            if (status != 200) {
                res.set_content("{\"error\":\"busy\"}", "application/json");
                return;
            }
            if (malformed_) {
                res.set_content("{\"choices\": []}", "application/json");
                return;
            }
            const nlohmann::json reply = {
                {"choices", {{{"message", {{"role", "assistant"}, {"content", content_}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockEndpoint() {
        server_.stop();
        thread_.join();
    }

    RemoteConfig config() const {
        RemoteConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/";
        c.model = "mock-model";
        c.timeout_s = 5.0;
        c.transport_retries = 2;
        c.backoff_s = 0.0;
        return c;
    }

    std::vector<int> statuses_;
    bool malformed_ = false;
    std::string content_ = "Sure.\n```dsl\njob: add(PT, WKR) | machine: PTM\n```";
    std::atomic<int> calls_{0};
    std::string last_body_, last_auth_;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

GeneratorRequest seed_request() {
    GeneratorRequest r;
    r.kind = RequestKind::Seed;
    r.persona = 2;
    r.temperature = 0.9;
    return r;
}

}  // namespace

TEST(RemoteGenerator, SpeaksTheChatCompletionFormat) {
    ::setenv("QDSCHED_TEST_KEY", "secret-token", 1);
    MockEndpoint mock;
    auto cfg = mock.config();
    cfg.api_key_env = "QDSCHED_TEST_KEY";
    RemoteGenerator gen(cfg);
    EXPECT_FALSE(gen.deterministic());
    EXPECT_EQ(gen.name(), "remote:mock-model");
    const Rule r = parse_reply(gen.generate(seed_request()), {});
    EXPECT_EQ(r.id, parse_rule("job: add(PT, WKR) | machine: PTM").id);

    EXPECT_EQ(mock.last_auth_, "Bearer secret-token");
    const auto body = nlohmann::json::parse(mock.last_body_);
    EXPECT_EQ(body.at("model"), "mock-model");
    EXPECT_DOUBLE_EQ(body.at("temperature").get<double>(), 0.9);
    const Prompt p = render_prompt(seed_request());
    ASSERT_EQ(body.at("messages").size(), 2u);
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][0]["content"], p.system);
    EXPECT_EQ(body["messages"][1]["role"], "user");
    EXPECT_EQ(body["messages"][1]["content"], p.user);
}

TEST(RemoteGenerator, OmitsAuthorizationWithoutKey) {
    MockEndpoint mock;
    auto cfg = mock.config();
    cfg.api_key_env = "QDSCHED_UNSET_VARIABLE_FOR_TESTS";
    ::unsetenv(cfg.api_key_env.c_str());
    RemoteGenerator gen(cfg);
    gen.generate(seed_request());
    EXPECT_TRUE(mock.last_auth_.empty());
}

TEST(RemoteGenerator, RetriesServerErrorsAndRateLimits) {
    MockEndpoint mock;
    mock.statuses_ = {503, 429};
    RemoteGenerator gen(mock.config());
    EXPECT_NO_THROW(gen.generate(seed_request()));
    EXPECT_EQ(mock.calls_.load(), 3);
}

TEST(RemoteGenerator, GivesUpAfterTheRetryBudget) {
    MockEndpoint mock;
    mock.statuses_ = {500, 500, 500, 500};
    RemoteGenerator gen(mock.config());
    EXPECT_THROW(gen.generate(seed_request()), GeneratorError);
    EXPECT_EQ(mock.calls_.load(), 3);
}

TEST(RemoteGenerator, ClientErrorsAreNotRetried) {
    MockEndpoint mock;
    mock.statuses_ = {401};
    RemoteGenerator gen(mock.config());
    EXPECT_THROW(gen.generate(seed_request()), GeneratorError);
    EXPECT_EQ(mock.calls_.load(), 1);
}

TEST(RemoteGenerator, MalformedResponseIsAnError) {
    MockEndpoint mock;
    mock.malformed_ = true;
    RemoteGenerator gen(mock.config());
    EXPECT_THROW(gen.generate(seed_request()), GeneratorError);
}

TEST(RemoteGenerator, UnreachableEndpointIsAnError) {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    RemoteConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.transport_retries = 1;
    cfg.backoff_s = 0.0;
    cfg.timeout_s = 1.0;
    RemoteGenerator gen(cfg);
    EXPECT_THROW(gen.generate(seed_request()), GeneratorError);
}

TEST(RemoteGenerator, BaseUrlParsing) {
    const auto u = parse_base_url("http://localhost:8080/v1/");
    EXPECT_EQ(u.origin, "http://localhost:8080");
    EXPECT_EQ(u.path, "/v1");
    EXPECT_EQ(parse_base_url("http://host").path, "");
    EXPECT_THROW(parse_base_url("localhost:8080"), ConfigError);
    EXPECT_THROW(parse_base_url("ftp://host"), ConfigError);
    EXPECT_THROW(parse_base_url("http://"), ConfigError);
}

TEST(RemoteGenerator, DrivesTheEvolutionLoop) {
    MockEndpoint mock;
    mock.statuses_ = {500};
    RemoteGenerator gen(mock.config());
    EvolutionConfig c;
    c.variants_per_persona = 1;
    c.generations = 0;
    const auto res = run_evolution(c, gen, calibration_set(1));
    EXPECT_EQ(res.archive.size(), 1u);  // every persona got the same reply
    EXPECT_EQ(res.rules_evaluated, 7u);
    EXPECT_TRUE(res.warnings.empty());
}
