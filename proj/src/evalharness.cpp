#include "asktmk/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "asktmk/error.hpp"
#include "asktmk/text.hpp"

namespace asktmk::eval {

using nlohmann::json;

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::input: return "input";
    case Category::output: return "output";
    case Category::how_global: return "how_global";
    case Category::why_not: return "why_not";
    case Category::others: return "others";
    case Category::others_context: return "others_context";
    case Category::agent_specific: return "agent_specific";
  }
  return "others";
}

std::optional<Category> parse_category(std::string_view s) noexcept {
  for (auto c : kCategories) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::string_view display_name(Category c) noexcept {
  switch (c) {
    case Category::input: return "Input";
    case Category::output: return "Output";
    case Category::how_global: return "How (global)";
    case Category::why_not: return "Why not";
    case Category::others: return "Others";
    case Category::others_context: return "Others (context)";
    case Category::agent_specific: return "Agent specific";
  }
  return "Others";
}

std::string_view to_string(Level l) noexcept {
  switch (l) {
    case Level::High: return "High";
    case Level::Medium: return "Medium";
    case Level::Low: return "Low";
  }
  return "Low";
}

std::optional<Level> parse_level(std::string_view s) noexcept {
  for (auto l : kLevels) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

std::string_view to_string(Metric m) noexcept {
  switch (m) {
    case Metric::recall: return "recall";
    case Metric::precision: return "precision";
    case Metric::accuracy: return "accuracy";
  }
  return "recall";
}

Level Rating::get(Metric m) const noexcept {
  switch (m) {
    case Metric::recall: return recall;
    case Metric::precision: return precision;
    case Metric::accuracy: return accuracy;
  }
  return recall;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Calls fn(line_number, parsed_object) for each non-blank line.
template <typename Fn>
void for_each_jsonl(std::string_view jsonl, Errc on_error, const char* what, Fn&& fn) {
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(on_error, std::string(what) + " line " + std::to_string(n) + ": " + e.what());
    }
    if (!j.is_object()) throw Error(on_error, std::string(what) + " line " + std::to_string(n) + ": not an object");
    try {
      fn(n, j);
    } catch (const json::exception& e) {
      throw Error(on_error, std::string(what) + " line " + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<BankQuestion> parse_bank(std::string_view jsonl) {
  std::vector<BankQuestion> bank;
  std::set<std::string> ids;
  for_each_jsonl(jsonl, Errc::MalformedBank, "bank", [&](std::size_t n, const json& j) {
    BankQuestion q;
    q.id = j.at("id").get<std::string>();
    const auto cat = j.at("category").get<std::string>();
    auto parsed = parse_category(cat);
    if (!parsed) {
      throw Error(Errc::UnknownCategory, "bank line " + std::to_string(n) + ": unknown category \"" + cat + "\"")
          .with_reason(cat);
    }
    q.category = *parsed;
    q.example_text = j.value("example_text", std::string());
    q.adapted_text = j.at("adapted_text").get<std::string>();
    q.authored = j.value("authored", false);
    if (text::trim(q.adapted_text).empty()) {
      throw Error(Errc::MalformedBank, "bank line " + std::to_string(n) + ": adapted_text is empty");
    }
    if (!ids.insert(q.id).second) throw Error(Errc::MalformedBank, "bank: duplicate question id \"" + q.id + "\"");
    bank.push_back(std::move(q));
  });
  if (bank.empty()) throw Error(Errc::MalformedBank, "bank has no questions");
  return bank;
}

std::vector<BankQuestion> load_bank(const std::string& path) { return parse_bank(read_file(path)); }

std::map<std::string, ImportedRating> parse_ratings(std::string_view jsonl) {
  std::map<std::string, ImportedRating> out;
  for_each_jsonl(jsonl, Errc::MalformedRatings, "ratings", [&](std::size_t n, const json& j) {
    const auto id = j.at("id").get<std::string>();
    auto level = [&](const char* key) {
      const auto s = j.at(key).get<std::string>();
      auto l = parse_level(s);
      if (!l) {
        throw Error(Errc::MalformedRatings, "ratings line " + std::to_string(n) + ": " + key + " \"" + s +
                                                "\" is not High, Medium or Low");
      }
      return *l;
    };
    ImportedRating r{{level("recall"), level("precision"), level("accuracy"), j.value("justification", "")},
                     j.value("rater", "")};
    if (!out.emplace(id, std::move(r)).second) throw Error(Errc::MalformedRatings, "ratings: duplicate id \"" + id + "\"");
  });
  return out;
}

std::map<std::string, ImportedRating> load_ratings(const std::string& path) { return parse_ratings(read_file(path)); }

// ---------------------------------------------------------------------------
// Running

std::vector<EvalRecord> run_bank(const std::vector<BankQuestion>& bank, const pipeline::Engine& engine,
                                 const RunOptions& options) {
  std::vector<EvalRecord> records(bank.size());
  auto run_one = [&](std::size_t i) {
    EvalRecord& rec = records[i];
    rec.question = bank[i];
    pipeline::Session session("bank-" + bank[i].id, engine.options().session_bound);
    try {
      rec.result = engine.ask(bank[i].adapted_text, session, options.k);
    } catch (const Error& e) {
      rec.error = e.to_json();
    } catch (const std::exception& e) {
      rec.error = json{{"code", "Internal"}, {"message", e.what()}};
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(bank.size(), 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < bank.size(); ++i) run_one(i);
    return records;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < bank.size(); i = next++) run_one(i);
      });
    }
  }
  return records;
}

void apply_ratings(std::vector<EvalRecord>& records, const std::map<std::string, ImportedRating>& ratings) {
  std::map<std::string, EvalRecord*> by_id;
  for (auto& r : records) by_id[r.question.id] = &r;
  for (const auto& [id, imported] : ratings) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(Errc::MalformedRatings, "rating for unknown question \"" + id + "\"");
    if (!it->second->result) {
      throw Error(Errc::MalformedRatings, "question \"" + id + "\" has no result to rate");
    }
    it->second->rating = imported.rating;
    it->second->rater = imported.rater;
  }
}

// ---------------------------------------------------------------------------
// Aggregation

std::size_t AggregateReport::count(Category c, Metric m, Level l) const {
  auto cat = categories.find(c);
  if (cat == categories.end()) return 0;
  auto met = cat->second.counts.find(m);
  if (met == cat->second.counts.end()) return 0;
  auto lev = met->second.find(l);
  return lev == met->second.end() ? 0 : lev->second;
}

namespace {

CategoryTally empty_tally() {
  CategoryTally t;
  for (auto m : kMetrics) {
    for (auto l : kLevels) t.counts[m][l] = 0;
  }
  return t;
}

json tally_json(const CategoryTally& t) {
  json out = {{"questions", t.questions}};
  for (auto m : kMetrics) {
    json levels = json::object();
    for (auto l : kLevels) levels[std::string(to_string(l))] = t.counts.at(m).at(l);
    out[std::string(to_string(m))] = std::move(levels);
  }
  return out;
}

std::string cell(const CategoryTally& t, Metric m) {
  std::vector<std::string> parts;
  for (auto l : kLevels) {
    const auto n = t.counts.at(m).at(l);
    if (n) parts.push_back(std::string(to_string(l)) + " - " + std::to_string(n));
  }
  return parts.empty() ? "-" : text::join(parts, ", ");
}

}  // namespace

AggregateReport aggregate(const std::vector<EvalRecord>& records) {
  AggregateReport report;
  for (auto c : kCategories) report.categories[c] = empty_tally();
  report.totals = empty_tally();
  for (const auto& r : records) {
    if (!r.rating) throw Error(Errc::UnratedRecord, "record \"" + r.question.id + "\" has no rating").with_reason(r.question.id);
    auto& tally = report.categories[r.question.category];
    ++tally.questions;
    ++report.totals.questions;
    for (auto m : kMetrics) {
      ++tally.counts[m][r.rating->get(m)];
      ++report.totals.counts[m][r.rating->get(m)];
    }
  }
  return report;
}

json AggregateReport::to_json() const {
  json cats = json::object();
  for (const auto& [c, t] : categories) cats[std::string(eval::to_string(c))] = tally_json(t);
  return {{"categories", std::move(cats)}, {"totals", tally_json(totals)}};
}

std::string AggregateReport::to_text() const {
  std::vector<std::array<std::string, 5>> rows;
  rows.push_back({"Category", "# of Questions", "Recall", "Precision", "Accuracy"});
  for (auto c : kCategories) {
    const auto& t = categories.at(c);
    rows.push_back({std::string(display_name(c)), std::to_string(t.questions), cell(t, Metric::recall),
                    cell(t, Metric::precision), cell(t, Metric::accuracy)});
  }
  rows.push_back({"Total", std::to_string(totals.questions), cell(totals, Metric::recall),
                  cell(totals, Metric::precision), cell(totals, Metric::accuracy)});
  std::array<std::size_t, 5> width{};
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream out;
  auto rule = [&] {
    for (std::size_t i = 0; i < width.size(); ++i) out << std::string(width[i] + (i + 1 < width.size() ? 2 : 0), '-');
    out << "\n";
  };
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (r == 1 || r + 1 == rows.size()) rule();
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      if (i + 1 < rows[r].size()) {
        out << std::left << std::setw(static_cast<int>(width[i] + 2)) << rows[r][i];
      } else {
        out << rows[r][i];
      }
    }
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Record persistence

json to_json(const EvalRecord& r) {
  json out = {{"question",
               {{"id", r.question.id},
                {"category", std::string(to_string(r.question.category))},
                {"example_text", r.question.example_text},
                {"adapted_text", r.question.adapted_text},
                {"authored", r.question.authored}}},
              {"rater", r.rater}};
  out["result"] = r.result ? pipeline::to_json(*r.result) : json(nullptr);
  out["error"] = r.error ? *r.error : json(nullptr);
  if (r.rating) {
    out["rating"] = {{"recall", std::string(to_string(r.rating->recall))},
                     {"precision", std::string(to_string(r.rating->precision))},
                     {"accuracy", std::string(to_string(r.rating->accuracy))},
                     {"justification", r.rating->justification}};
  } else {
    out["rating"] = nullptr;
  }
  return out;
}

EvalRecord record_from_json(const json& j) {
  try {
    EvalRecord r;
    const auto& q = j.at("question");
    r.question.id = q.at("id").get<std::string>();
    auto cat = parse_category(q.at("category").get<std::string>());
    if (!cat) throw Error(Errc::UnknownCategory, "unknown category " + q.at("category").dump());
    r.question.category = *cat;
    r.question.example_text = q.value("example_text", "");
    r.question.adapted_text = q.at("adapted_text").get<std::string>();
    r.question.authored = q.value("authored", false);
    r.rater = j.value("rater", "");
    if (j.contains("result") && !j["result"].is_null()) r.result = pipeline::explanation_from_json(j["result"]);
    if (j.contains("error") && !j["error"].is_null()) r.error = j["error"];
    if (j.contains("rating") && !j["rating"].is_null()) {
      const auto& rt = j["rating"];
      auto lv = [&](const char* key) {
        auto l = parse_level(rt.at(key).get<std::string>());
        if (!l) throw Error(Errc::MalformedRatings, std::string("bad level for ") + key);
        return *l;
      };
      r.rating = Rating{lv("recall"), lv("precision"), lv("accuracy"), rt.value("justification", "")};
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedInput, std::string("eval record: ") + e.what());
  }
}

std::string records_to_jsonl(const std::vector<EvalRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += "\n";
  }
  return out;
}

std::vector<EvalRecord> records_from_jsonl(std::string_view jsonl) {
  std::vector<EvalRecord> out;
  for_each_jsonl(jsonl, Errc::MalformedInput, "records",
                 [&](std::size_t, const json& j) { out.push_back(record_from_json(j)); });
  return out;
}

}  // namespace asktmk::eval
