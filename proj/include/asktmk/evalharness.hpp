#pragma once

// Question-bank evaluation: load the categorized bank, run it through the
// engine, attach imported expert ratings and tally them per category.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "asktmk/pipeline.hpp"

namespace asktmk::eval {

enum class Category { input, output, how_global, why_not, others, others_context, agent_specific };
inline constexpr std::array<Category, 7> kCategories{Category::input,  Category::output,         Category::how_global,
                                                     Category::why_not, Category::others, Category::others_context,
                                                     Category::agent_specific};

std::string_view to_string(Category c) noexcept;
std::optional<Category> parse_category(std::string_view s) noexcept;
/// Row label used in the text report ("How (global)", "Others (context)", ...).
std::string_view display_name(Category c) noexcept;

enum class Level { High, Medium, Low };
inline constexpr std::array<Level, 3> kLevels{Level::High, Level::Medium, Level::Low};
std::string_view to_string(Level l) noexcept;
std::optional<Level> parse_level(std::string_view s) noexcept;

enum class Metric { recall, precision, accuracy };
inline constexpr std::array<Metric, 3> kMetrics{Metric::recall, Metric::precision, Metric::accuracy};
std::string_view to_string(Metric m) noexcept;

struct BankQuestion {
  std::string id;
  Category category = Category::others;
  std::string example_text;
  std::string adapted_text;
  bool authored = false;  // text written to fill the category, not printed in the source table

  bool operator==(const BankQuestion&) const = default;
};

struct Rating {
  Level recall = Level::High;
  Level precision = Level::High;
  Level accuracy = Level::High;
  std::string justification;

  Level get(Metric m) const noexcept;
  bool operator==(const Rating&) const = default;
};

struct EvalRecord {
  BankQuestion question;
  std::optional<pipeline::ExplanationResult> result;
  std::optional<nlohmann::json> error;  // Error::to_json() when the question failed
  std::optional<Rating> rating;
  std::string rater;

  bool operator==(const EvalRecord&) const = default;
};

/// Line-delimited JSON, one BankQuestion per line; blank lines ignored.
/// Throws Error{MalformedBank} (bad JSON, missing fields, duplicate ids, no
/// entries) and Error{UnknownCategory}.
std::vector<BankQuestion> parse_bank(std::string_view jsonl);
std::vector<BankQuestion> load_bank(const std::string& path);

struct RunOptions {
  std::size_t threads = 1;
  std::optional<std::size_t> k;
};

/// One fresh session per question; failures are stored in the record and
/// the run continues. Record order follows the bank.
std::vector<EvalRecord> run_bank(const std::vector<BankQuestion>& bank, const pipeline::Engine& engine,
                                 const RunOptions& options = {});

struct ImportedRating {
  Rating rating;
  std::string rater;
};

/// Line-delimited JSON: {id, recall, precision, accuracy, justification?, rater?}.
/// Throws Error{MalformedRatings}.
std::map<std::string, ImportedRating> parse_ratings(std::string_view jsonl);
std::map<std::string, ImportedRating> load_ratings(const std::string& path);

/// Attaches ratings by question id. A rating for an id outside `records`,
/// or for a record without a result, throws Error{MalformedRatings}.
void apply_ratings(std::vector<EvalRecord>& records, const std::map<std::string, ImportedRating>& ratings);

struct CategoryTally {
  std::size_t questions = 0;
  std::map<Metric, std::map<Level, std::size_t>> counts;
};

struct AggregateReport {
  std::map<Category, CategoryTally> categories;  // always holds all seven
  CategoryTally totals;

  std::size_t count(Category c, Metric m, Level l) const;
  nlohmann::json to_json() const;
  /// Aligned table in the layout of the published results table.
  std::string to_text() const;
  bool operator==(const AggregateReport& o) const { return to_json() == o.to_json(); }
};

/// Throws Error{UnratedRecord} naming the first unrated record.
AggregateReport aggregate(const std::vector<EvalRecord>& records);

nlohmann::json to_json(const EvalRecord& r);
EvalRecord record_from_json(const nlohmann::json& j);
std::string records_to_jsonl(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_jsonl(std::string_view jsonl);

}  // namespace asktmk::eval
