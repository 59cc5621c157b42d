#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "asktmk/error.hpp"
#include "asktmk/genai.hpp"
#include "asktmk/net.hpp"
#include "asktmk/retrieval.hpp"

using namespace asktmk;
using namespace asktmk::genai;

namespace {

template <typename F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no error";
  return Error(Errc::Io, "none");
}

// Local HTTP stub on a free port; torn down with the fixture.
class StubServer {
 public:
  explicit StubServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post(".*", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

int free_port() {
  httplib::Server s;
  return s.bind_to_any_port("127.0.0.1");
}

}  // namespace

TEST(RenderPrompt, SubstitutesNamedPlaceholders) {
  PromptTemplate t("t", "v1", "Hi {agent_name}, see {x}.");
  EXPECT_EQ(render_prompt(t, {{"agent_name", "VERA"}, {"x", "y"}}), "Hi VERA, see y.");
  EXPECT_EQ(t.required_bindings(), (std::set<std::string>{"agent_name", "x"}));
  EXPECT_EQ(t.tag(), "t@v1");
}

TEST(RenderPrompt, MissingAndUnknownBindings) {
  PromptTemplate t("t", "v1", "{a} {b}");
  auto e = error_of([&] { render_prompt(t, {{"a", "1"}}); });
  EXPECT_EQ(e.code(), Errc::MissingBinding);
  EXPECT_EQ(e.reason(), "b");
  e = error_of([&] { render_prompt(t, {{"a", "1"}, {"b", "2"}, {"c", "3"}}); });
  EXPECT_EQ(e.code(), Errc::UnknownBinding);
  EXPECT_EQ(e.reason(), "c");
}

TEST(RenderPrompt, ValuesAreNotRescanned) {
  PromptTemplate t("t", "v1", "{a}");
  EXPECT_EQ(render_prompt(t, {{"a", "{b}"}}), "{b}");
}

TEST(RenderPrompt, EscapedBracesAndBadTemplates) {
  PromptTemplate t("t", "v1", "{{literal}} {x}");
  EXPECT_EQ(render_prompt(t, {{"x", "1"}}), "{literal} 1");
  EXPECT_EQ(error_of([] { PromptTemplate("t", "v1", "oops {x"); }).code(), Errc::InvalidTemplate);
  EXPECT_EQ(error_of([] { PromptTemplate("t", "v1", "oops }"); }).code(), Errc::InvalidTemplate);
  EXPECT_EQ(error_of([] { PromptTemplate("t", "v1", "{x}", {"y"}); }).code(), Errc::InvalidTemplate);
}

TEST(BuiltinTemplates, AllPresentWithExpectedBindings) {
  EXPECT_EQ(builtin_templates().size(), 9u);
  EXPECT_EQ(builtin_template(templates::kMultiModelsDesc).required_bindings(),
            (std::set<std::string>{"Knowledge_names", "Task_names", "Method_names"}));
  EXPECT_EQ(builtin_template(templates::kMultiModelsAnswerPrompt).required_bindings(),
            (std::set<std::string>{"software_qa_prompt", "context_str", "question"}));
  EXPECT_EQ(builtin_template(templates::kCantAnswerRefusal).required_bindings(),
            (std::set<std::string>{"agent_name"}));
  for (const auto& t : builtin_templates()) {
    EXPECT_EQ(t.version(), "v1");
    EXPECT_FALSE(t.text().empty());
    EXPECT_NE(t.text().back(), '\n') << t.id();
  }
}

TEST(Context, FormatAndParseRoundTrip) {
  std::vector<ContextDocument> docs = {{"Run Simulation", "Line one.\nLine two."}, {"User", "Learner."}};
  auto prompt = "Intro\n" + format_context(docs) + "Question: q";
  auto back = parse_context(prompt);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].title, "Run Simulation");
  EXPECT_EQ(back[0].body, "Line one.\nLine two.");
  EXPECT_EQ(back[1].title, "User");
  EXPECT_TRUE(parse_context("no blocks").empty());
}

TEST(MockProvider, InitialAnswerNamesDocuments) {
  MockProvider p;
  auto prompt = format_context({{"Run a Simulation", "Execute it. More."}, {"User", "A learner"}});
  EXPECT_EQ(p.complete({prompt}), "Based on: Run a Simulation; User. Execute it. A learner");
}

TEST(MockProvider, RefineAppendsTitles) {
  MockProvider p;
  auto prompt = "EXISTING_ANSWER:\nOld.\nEND_EXISTING_ANSWER\n" + format_context({{"Run Simulation", "x"}});
  EXPECT_EQ(p.complete({prompt}), "Old.; refined with: Run Simulation");
}

TEST(MockProvider, NoContextAndPurity) {
  MockProvider p;
  EXPECT_EQ(p.complete({"hello"}), "I do not know.");
  auto prompt = format_context({{"A", "b."}});
  EXPECT_EQ(p.complete({prompt}), p.complete({prompt}));
}

TEST(MockProvider, BudgetExceeded) {
  MockProvider p(10);
  EXPECT_EQ(error_of([&] { p.complete({std::string(41, 'x')}); }).code(), Errc::BudgetExceeded);
  EXPECT_NO_THROW(p.complete({std::string(40, 'x')}));
  EXPECT_EQ(estimate_tokens(""), 0u);
  EXPECT_EQ(estimate_tokens("abcde"), 2u);
}

TEST(MockProvider, NeverTouchesNetwork) {
  auto before = net::outbound_request_count();
  auto p = make_provider({});
  for (int i = 0; i < 20; ++i) p->complete({format_context({{"T", "b."}})});
  EXPECT_EQ(net::outbound_request_count(), before);
}

TEST(ProviderConfig, RemoteNeedsEndpoint) {
  ProviderConfig c;
  c.mode = ProviderMode::remote;
  EXPECT_EQ(error_of([&] { c.check(); }).code(), Errc::InvalidConfig);
  c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  c.auth = "literal-secret";
  EXPECT_EQ(error_of([&] { c.check(); }).code(), Errc::InvalidConfig);
  c.auth = "env:SOME_VAR";
  EXPECT_NO_THROW(c.check());
}

TEST(RemoteProvider, ReadsChatCompletion) {
  nlohmann::json seen;
  std::string auth;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"pong"}}]})", "application/json");
  });
  ::setenv("ASKTMK_TEST_KEY", "sekret", 1);
  ProviderConfig c;
  c.mode = ProviderMode::remote;
  c.endpoint = stub.url("/v1/chat/completions");
  c.model_name = "m";
  c.auth = "env:ASKTMK_TEST_KEY";
  auto before = net::outbound_request_count();
  EXPECT_EQ(complete(c, {"ping", 1920, 0.0}), "pong");
  EXPECT_EQ(net::outbound_request_count(), before + 1);
  EXPECT_EQ(seen["messages"][0]["content"], "ping");
  EXPECT_EQ(seen["max_tokens"], 1920);
  EXPECT_EQ(seen["temperature"], 0.0);
  EXPECT_EQ(seen["model"], "m");
  EXPECT_EQ(auth, "Bearer sekret");
}

TEST(RemoteProvider, Http500IsProviderError) {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  ProviderConfig c;
  c.mode = ProviderMode::remote;
  c.endpoint = stub.url("/v1/chat/completions");
  auto e = error_of([&] { complete(c, {"ping"}); });
  EXPECT_EQ(e.code(), Errc::ProviderError);
  EXPECT_EQ(e.details().value("status", 0), 500);
}

TEST(RemoteProvider, UnreachableIsProviderUnavailable) {
  ProviderConfig c;
  c.mode = ProviderMode::remote;
  c.endpoint = "http://127.0.0.1:" + std::to_string(free_port()) + "/v1/chat/completions";
  c.timeout_seconds = 2;
  EXPECT_EQ(error_of([&] { complete(c, {"ping"}); }).code(), Errc::ProviderUnavailable);
}

TEST(RemoteProvider, BudgetCheckedBeforeSending) {
  ProviderConfig c;
  c.mode = ProviderMode::remote;
  c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  c.prompt_token_limit = 4;
  auto before = net::outbound_request_count();
  EXPECT_EQ(error_of([&] { complete(c, {std::string(100, 'x')}); }).code(), Errc::BudgetExceeded);
  EXPECT_EQ(net::outbound_request_count(), before);
}

TEST(RemoteEmbedder, ReadsEmbeddingAndChecksDimension) {
  StubServer stub([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"data":[{"embedding":[3.0, 4.0]}]})", "application/json");
  });
  retrieval::RemoteEmbedderConfig c{stub.url("/v1/embeddings"), "e", std::nullopt, 2, 5};
  auto e = retrieval::make_remote_embedder(c);
  auto v = e->embed("hello");
  EXPECT_NEAR(v.values()[0], 0.6, 1e-12);
  EXPECT_NEAR(v.values()[1], 0.8, 1e-12);
  c.dimension = 3;
  auto wrong = retrieval::make_remote_embedder(c);
  EXPECT_EQ(error_of([&] { wrong->embed("hello"); }).code(), Errc::DimensionMismatch);
}
