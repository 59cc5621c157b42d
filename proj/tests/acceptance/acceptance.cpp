// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "asktmk/cli.hpp"
#include "asktmk/config.hpp"
#include "asktmk/error.hpp"
#include "asktmk/evalharness.hpp"
#include "asktmk/net.hpp"
#include "asktmk/pipeline.hpp"
#include "asktmk/retrieval.hpp"
#include "asktmk/text.hpp"
#include "asktmk/tmk.hpp"
#include "asktmk/trace.hpp"
#include "../support.hpp"

using namespace asktmk;
namespace at = asktmk::testing;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3fs", s);
  return buf;
}

const char* kWorkingExample = "How can I best utilise the output of the system in VERA?";

std::shared_ptr<pipeline::Engine> mock_engine() {
  return std::make_shared<pipeline::Engine>(at::fixture_model(), pipeline::EngineOptions{},
                                            std::make_shared<genai::MockProvider>());
}

Outcome fixture_validation() {
  Outcome o;
  auto t0 = Clock::now();
  auto report = tmk::validate(at::fixture_model());
  o.require(report.ok(), "fixture: " + report.to_text());
  for (const auto& mut : at::fixture_mutations()) {
    auto j = at::fixture_json();
    mut.apply(j);
    auto codes = at::codes_for(j);
    std::string got;
    for (const auto& c : codes) got += c + " ";
    o.require(codes == std::vector<std::string>{mut.expected_code},
              mut.name + ": expected " + mut.expected_code + ", got " + got);
  }
  double s = seconds_since(t0);
  o.require(s < 1.0, "took " + fmt_seconds(s));
  if (o.pass) o.detail = "fixture ok, 6/6 mutations, " + fmt_seconds(s);
  return o;
}

// Independent oracle: score every entry, full sort.
std::vector<retrieval::RetrievalHit> brute_force(const retrieval::VectorIndex& index,
                                                 const retrieval::EmbeddingVector& q, std::size_t k) {
  std::vector<retrieval::RetrievalHit> all;
  for (const auto& e : index.entries()) {
    double dot = 0;
    for (std::size_t i = 0; i < q.dimension(); ++i) dot += q.values()[i] * e.vector.values()[i];
    all.push_back({e.key.element_id, e.key.kind, std::clamp((1.0 + dot) / 2.0, 0.0, 1.0), e.title});
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key() < b.key();
  });
  all.resize(std::min(k, all.size()));
  return all;
}

retrieval::EmbeddingVector gaussian(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n;
  std::vector<double> v(d);
  for (auto& x : v) x = n(rng);
  return retrieval::EmbeddingVector::normalized(std::move(v));
}

Outcome retrieval_oracle() {
  Outcome o;
  auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  retrieval::HashingEmbedder embedder(256);
  std::size_t comparisons = 0;
  for (int corpus = 0; corpus < 100 && o.pass; ++corpus) {
    const std::size_t n = 1 + rng() % 200;
    retrieval::VectorIndex index(1, "", {});
    retrieval::EmbeddingVector query;
    if (corpus % 2 == 0) {
      // Text corpora: hashed bag-of-words, many exact score ties.
      auto docs = at::random_corpus(rng, n);
      index = retrieval::build_index(docs, embedder);
      query = embedder.embed(docs[rng() % n].body + " population trend");
    } else {
      std::vector<retrieval::IndexEntry> entries;
      for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "v%03zu", i);
        entries.push_back({{static_cast<tmk::Kind>(rng() % 3), id}, id, gaussian(rng, 256)});
      }
      index = retrieval::VectorIndex(256, "gaussian", std::move(entries));
      query = gaussian(rng, 256);
    }
    for (std::size_t k : {1u, 4u, 10u}) {
      auto got = retrieval::search(index, query, k);
      auto want = brute_force(index, query, k);
      ++comparisons;
      o.require(got.size() == want.size(), "corpus " + std::to_string(corpus) + " size mismatch");
      for (std::size_t i = 0; o.pass && i < got.size(); ++i) {
        o.require(got[i].key() == want[i].key() && std::abs(got[i].score - want[i].score) <= 1e-12,
                  "corpus " + std::to_string(corpus) + " k=" + std::to_string(k) + " rank " + std::to_string(i));
      }
    }
  }
  double s = seconds_since(t0);
  o.require(s < 30.0, "took " + fmt_seconds(s));
  if (o.pass) o.detail = std::to_string(comparisons) + " searches match, " + fmt_seconds(s);
  return o;
}

Outcome configuration() {
  Outcome o;
  auto c = config::resolve({}, {}, {});
  o.require(c.k == 4, "k=" + std::to_string(c.k));
  o.require(c.temperature == 0.0, "temperature");
  o.require(c.max_tokens == 1920, "max_tokens");
  pipeline::EngineOptions e;
  o.require(e.k == 4 && e.generation.temperature == 0.0 && e.generation.max_tokens == 1920, "engine options");
  if (o.pass) o.detail = "k=4 temperature=0 max_tokens=1920";
  return o;
}

Outcome working_example() {
  Outcome o;
  auto a = mock_engine()->ask(kWorkingExample, std::nullopt);
  auto b = mock_engine()->ask(kWorkingExample, std::nullopt);
  o.require(a.cls == pipeline::QuestionClass::multimodels, "class " + std::string(pipeline::to_string(a.cls)));
  o.require(a.hits.size() == 4, "hits " + std::to_string(a.hits.size()));
  for (std::size_t i = 0; i < a.hits.size(); ++i) {
    o.require(a.hits[i].score >= 0.0 && a.hits[i].score <= 1.0, "score out of range");
    if (i) o.require(a.hits[i].score <= a.hits[i - 1].score, "scores increase");
    o.require(a.answer.find(a.hits[i].title) != std::string::npos, "answer lacks " + a.hits[i].title);
  }
  o.require(a.steps.size() == 4, "steps " + std::to_string(a.steps.size()));
  o.require(!a.answer.empty(), "empty answer");
  o.require(pipeline::to_json(a).dump() == pipeline::to_json(b).dump(), "runs differ");
  if (o.pass) {
    std::string titles;
    for (const auto& h : a.hits) titles += (titles.empty() ? "" : ", ") + h.title + " " + text::percent(h.score);
    o.detail = "multimodels, 4 hits (" + titles + "), 4 steps, identical";
  }
  return o;
}

Outcome kind_filtering() {
  Outcome o;
  auto model = at::fixture_model();
  auto engine = mock_engine();
  std::vector<std::string> names;
  for (const auto& t : model.tasks) names.push_back(t.name);
  for (const auto& m : model.methods) names.push_back(m.name);
  std::vector<std::string> concepts;
  for (const auto& c : model.knowledge) concepts.push_back(c.name);
  const std::vector<std::string> openers = {"How do you", "How does VERA", "How can I", "How would the system",
                                            "How should I", "How did you", "How will VERA", "How could you"};
  std::mt19937_64 rng(47);
  int asked = 0;
  for (int i = 0; i < 50; ++i) {
    std::string q = openers[rng() % openers.size()] + " " + names[rng() % names.size()];
    if (i % 3 == 0) q += " with the " + concepts[rng() % concepts.size()];
    q += "?";
    auto cls = pipeline::classify_by_rules(q, model);
    o.require(cls == pipeline::QuestionClass::mmodel, "not mmodel: " + q);
    for (std::size_t k : {4u, 15u}) {
      auto r = engine->ask(q, std::nullopt, k);
      for (const auto& h : r.hits) o.require(h.kind != tmk::Kind::knowledge, "knowledge hit for: " + q);
    }
    ++asked;
  }
  if (o.pass) o.detail = std::to_string(asked) + " mmodel questions, 0 knowledge hits at k=4 and k=15";
  return o;
}

Outcome table_reproduction() {
  Outcome o;
  auto bank = eval::load_bank(at::source_path("data/question_bank.jsonl"));
  auto records = eval::run_bank(bank, *mock_engine());
  eval::apply_ratings(records, eval::load_ratings(at::source_path("data/paper.ratings.jsonl")));
  auto report = eval::aggregate(records);
  o.require(report.totals.questions == 66, "total " + std::to_string(report.totals.questions));
  const std::map<eval::Category, std::size_t> sizes = {
      {eval::Category::input, 4},   {eval::Category::output, 22},        {eval::Category::how_global, 17},
      {eval::Category::why_not, 1}, {eval::Category::others, 10},        {eval::Category::others_context, 3},
      {eval::Category::agent_specific, 9}};
  std::size_t cells = 0;
  for (auto [cat, n] : sizes) {
    const std::string name(eval::to_string(cat));
    o.require(report.categories.at(cat).questions == n, name + " count");
    for (auto metric : eval::kMetrics) {
      std::size_t high = n, medium = 0;
      if (cat == eval::Category::output && metric == eval::Metric::precision) high = 21, medium = 1;
      o.require(report.count(cat, metric, eval::Level::High) == high &&
                    report.count(cat, metric, eval::Level::Medium) == medium &&
                    report.count(cat, metric, eval::Level::Low) == 0,
                name + " " + std::string(eval::to_string(metric)));
      ++cells;
    }
  }
  if (o.pass) o.detail = "66 questions, " + std::to_string(cells) + " rating cells exact";
  return o;
}

Outcome trace_criterion() {
  Outcome o;
  auto model = at::fixture_model();
  auto t = trace::derive_trace(model, model.top_level_task()->id);
  const std::set<std::string> allowed = {"Edit a Model", "Finish a Simulation"};
  o.require(!t.root.children.empty(), "no children");
  for (const auto& c : t.root.children) {
    o.require(allowed.count(model.find_task(c.task_id)->name) == 1, "child " + c.task_id);
  }
  auto loop = tmk::parse_model(R"({"agent_name":"Loop","version":"1",
    "tasks":[{"id":"t","name":"Spin","description":"d","givens":[],"makes":[],"subtasks":[],
              "by_methods":["m"],"top_level":true}],
    "methods":[{"id":"m","name":"Spin","description":"d","implements":"t",
      "states":[{"id":"a","name":"A","terminal":false},{"id":"b","name":"B","terminal":false}],
      "transitions":[{"from_state":"a","to_state":"b","condition_label":"go"},
                     {"from_state":"b","to_state":"a","condition_label":"back"}],
      "start_state":"a"}],"knowledge":[]})");
  trace::TraceOptions opts;
  opts.step_bound = 5;
  bool raised = false;
  try {
    trace::derive_trace(loop, "t", opts);
  } catch (const Error& e) {
    raised = e.code() == Errc::StepBoundExceeded;
  }
  o.require(raised, "2-cycle did not raise StepBoundExceeded");
  if (o.pass) o.detail = std::to_string(t.root.children.size()) + " children, 2-cycle raises StepBoundExceeded";
  return o;
}

Outcome offline() {
  Outcome o;
  auto before = net::outbound_request_count();
  std::ostringstream out, err;
  std::string prefix = "/tmp/asktmk_acceptance_eval";
  int code = cli::run({"eval", "run", "--model", at::fixture_path(), "--mock", "--bank",
                       at::source_path("data/question_bank.jsonl"), "--ratings",
                       at::source_path("data/paper.ratings.jsonl"), "--report", prefix},
                      out, err, {});
  o.require(code == 0, "eval run exit " + std::to_string(code) + ": " + err.str());
  o.require(out.str().find("outbound_requests: 0") != std::string::npos, "eval run reported outbound requests");
  o.require(net::outbound_request_count() == before, "counter moved during eval run");
  o.require(net::outbound_request_count() == 0, "process made outbound requests");
  if (o.pass) o.detail = "mock eval run and this process: 0 outbound requests";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"fixture validation", fixture_validation},
      {"retrieval oracle equivalence", retrieval_oracle},
      {"configuration fidelity", configuration},
      {"working example pipeline structure", working_example},
      {"kind filtering", kind_filtering},
      {"results table reproduction", table_reproduction},
      {"derivational trace", trace_criterion},
      {"offline guarantee", offline},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const Error& e) {
      o = {false, std::string(e.code_name()) + ": " + e.what()};
    } catch (const std::exception& e) {
      o = {false, e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s  %-36s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
