#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "asktmk/error.hpp"
#include "asktmk/net.hpp"
#include "asktmk/service.hpp"
#include "support.hpp"

using namespace asktmk;
using namespace asktmk::service;
using nlohmann::json;

namespace {

const char* kWorkingExample = "How can I best utilise the output of the system in VERA?";

config::EngineConfig fixture_config() {
  config::EngineConfig c;
  c.model_path = asktmk::testing::fixture_path();
  return c;
}

struct ServiceTest : ::testing::Test {
  std::ostringstream log;
  Service svc{make_engine(fixture_config()), log};

  Service::Reply post(const std::string& path, const json& body) { return svc.handle("POST", path, body.dump(), "r1"); }
};

}  // namespace

TEST_F(ServiceTest, HealthAndModel) {
  auto h = svc.handle("GET", "/healthz", "", "r0");
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(h.body["status"], "ok");
  EXPECT_EQ(h.body["request_id"], "r0");
  auto m = svc.handle("GET", "/model", "", "r2");
  EXPECT_EQ(m.body["agent_name"], "VERA");
  EXPECT_EQ(m.body["counts"]["task"], 5);
  EXPECT_EQ(m.body["counts"]["method"], 4);
  EXPECT_EQ(m.body["counts"]["knowledge"], 6);
  EXPECT_EQ(m.body["top_level_task"]["name"], "Finish an Ecology Experiment");
  EXPECT_NE(log.str().find("[r0] GET /healthz -> 200"), std::string::npos);
}

TEST_F(ServiceTest, AskWorkingExample) {
  auto r = post("/ask", {{"question", kWorkingExample}});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["class"], "multimodels");
  EXPECT_EQ(r.body["hits"].size(), 4u);
  EXPECT_EQ(r.body["steps"].size(), 4u);
  EXPECT_EQ(r.body["request_id"], "r1");
  for (const auto& h : r.body["hits"]) {
    EXPECT_TRUE(h.contains("element_id"));
    EXPECT_TRUE(h.contains("kind"));
    EXPECT_TRUE(h.contains("score"));
  }
}

TEST_F(ServiceTest, AskErrorsCarryStage) {
  auto r = post("/ask", {{"question", "   "}});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["code"], "EmptyQuestion");
  EXPECT_EQ(r.body["error"]["stage"], "classify");
  EXPECT_EQ(r.body["request_id"], "r1");
  EXPECT_NE(log.str().find("stage=classify"), std::string::npos);
  r = post("/ask", {{"question", kWorkingExample}, {"k", 0}});
  EXPECT_EQ(r.status, 400);
  r = svc.handle("POST", "/ask", "{broken", "r3");
  EXPECT_EQ(r.body["error"]["code"], "MalformedInput");
  EXPECT_EQ(svc.handle("GET", "/nope", "", "r4").status, 404);
}

TEST_F(ServiceTest, SessionsCarryHistory) {
  post("/ask", {{"question", kWorkingExample}, {"session_id", "abc"}});
  auto r = post("/ask", {{"question", "How do you run simulation?"}, {"session_id", "abc"}});
  EXPECT_EQ(r.body["metadata"]["session_id"], "abc");
}

TEST_F(ServiceTest, Trace) {
  auto r = post("/trace", {{"task_id", "t_finish_experiment"}});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["trace"]["root"]["children"].size(), 2u);
  r = post("/trace", {{"task_id", "t_finish_simulation"},
                      {"selectors", {{"paths", {{"s_review", "results accepted"}}}}},
                      {"question", "What happened?"}});
  EXPECT_EQ(r.status, 200);
  EXPECT_FALSE(r.body["explanation"].get<std::string>().empty());
  EXPECT_EQ(post("/trace", {{"task_id", "t_nope"}}).status, 400);
  r = post("/trace", {{"task_id", "t_run_simulation"},
                      {"selectors", {{"paths", {{"r_tick", "steps remaining"}}}}},
                      {"step_bound", 5}});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body["error"]["code"], "StepBoundExceeded");
}

TEST_F(ServiceTest, EvalRunAndReport) {
  EXPECT_EQ(svc.handle("GET", "/eval/report", "", "r0").status, 404);
  auto r = post("/eval/run", {{"bank_path", asktmk::testing::source_path("data/question_bank.jsonl")},
                              {"ratings_path", asktmk::testing::source_path("data/paper.ratings.jsonl")}});
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body["records"], 66);
  EXPECT_EQ(r.body["failures"], 0);
  EXPECT_EQ(r.body["outbound_requests"], 0);
  auto rep = svc.handle("GET", "/eval/report", "", "r5");
  EXPECT_EQ(rep.status, 200);
  EXPECT_EQ(rep.body["report"], r.body["report"]);
}

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status_for(Errc::EmptyQuestion), 400);
  EXPECT_EQ(http_status_for(Errc::ProviderError), 502);
  EXPECT_EQ(http_status_for(Errc::ProviderUnavailable), 502);
  EXPECT_EQ(http_status_for(Errc::StepBoundExceeded), 422);
  EXPECT_EQ(http_status_for(Errc::EmptyCorpus), 500);
}

TEST(MakeEngine, InvalidModelFailsFast) {
  auto j = asktmk::testing::fixture_json();
  asktmk::testing::fixture_mutations()[0].apply(j);
  std::string path = ::testing::TempDir() + "asktmk_bad_model.json";
  {
    std::ofstream f(path);
    f << j.dump();
  }
  auto c = fixture_config();
  c.model_path = path;
  try {
    make_engine(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidModel);
    EXPECT_NE(std::string(e.what()).find("DANGLING_STATE"), std::string::npos);
  }
  std::remove(path.c_str());
}

TEST(HttpServer, ServesOverLoopbackAndEchoesRequestId) {
  std::ostringstream log;
  Service svc(make_engine(fixture_config()), log);
  int port = svc.bind("127.0.0.1", 0);
  std::thread t([&] { svc.run(); });
  svc.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(health->get_header_value("X-Request-Id"), "req-1");
  auto ask = client.Post("/ask", httplib::Headers{{"X-Request-Id", "mine"}},
                         json{{"question", kWorkingExample}}.dump(), "application/json");
  ASSERT_TRUE(ask);
  auto body = json::parse(ask->body);
  EXPECT_EQ(body["class"], "multimodels");
  EXPECT_EQ(body["request_id"], "mine");
  EXPECT_EQ(ask->get_header_value("X-Request-Id"), "mine");

  Service other(make_engine(fixture_config()), log);
  try {
    other.bind("127.0.0.1", port);
    ADD_FAILURE() << "second bind succeeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PortInUse);
  }
  svc.stop();
  t.join();
  EXPECT_NE(log.str().find("[mine] POST /ask -> 200"), std::string::npos);
}
