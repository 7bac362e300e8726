#pragma once

#include "mcrc/corpus.hpp"
#include "mcrc/llm_client.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mcrc {

enum class Condition { with_text, without_text };

const char* to_string(Condition c);
Condition parse_condition(std::string_view text);

/// First-token masses on the positive and negative label letters,
/// renormalized so that p_true + p_false = 1.
struct LabelDistribution {
    double p_true = 0;
    double p_false = 0;
};

/// Collects the "R" and "F" masses (whitespace-prefixed variants merged).
/// Returns nullopt when neither letter carries any mass.
std::optional<LabelDistribution> label_distribution(const TokenDistribution& dist);

enum class EvaluatorKind { human, llm };
enum class Decision { parsed_letter, ratio_threshold };

const char* to_string(EvaluatorKind k);
const char* to_string(Decision d);

struct EvaluatorProfile {
    EvaluatorKind kind = EvaluatorKind::llm;
    std::string id;
    std::optional<BackendConfig> backend;
    Decision decision = Decision::parsed_letter;
    /// Separate thresholds per condition; required for ratio_threshold.
    std::optional<double> tau_with_text;
    std::optional<double> tau_without_text;

    std::optional<double> tau_for(Condition c) const;
    void validate() const;
};

struct ResponseRecord {
    std::string item_id;
    int option_index = 0;
    std::string evaluator_id;
    EvaluatorKind evaluator_kind = EvaluatorKind::llm;
    Condition condition = Condition::with_text;
    /// Absent when the response could not be interpreted.
    std::optional<bool> label;
    std::optional<double> ratio;
    std::optional<std::string> raw_text;

    bool valid() const { return label.has_value(); }

    friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

/// Orders by (evaluator, condition, item, option).
void sort_records(std::vector<ResponseRecord>& records);

nlohmann::json to_json(const ResponseRecord& r);
ResponseRecord record_from_json(const nlohmann::json& j);

/// Newline-delimited records. An optional leading {"meta": ...} line carries provenance.
std::string records_to_jsonl(const std::vector<ResponseRecord>& records,
                             const nlohmann::json& meta = nullptr);
/// Parses newline-delimited records, skipping meta lines.
std::vector<ResponseRecord> records_from_jsonl(std::string_view content);

std::string build_response_prompt(const MCItem& item, std::size_t option_index, const TextDoc* text,
                                  Condition condition);

/// "R" -> true, "F" -> false; first standalone letter wins, case-insensitive.
std::optional<bool> parse_letter_label(std::string_view raw);

/// Inclusive: p_true >= tau is positive.
bool label_from_ratio(const LabelDistribution& dist, double tau);

ResponseRecord respond_option(const MCItem& item, std::size_t option_index, const TextDoc* text,
                              Condition condition, const EvaluatorProfile& evaluator, Backend& backend);

struct EvaluationRun {
    std::vector<ResponseRecord> records;
    int invalid = 0;
};

/// Responds to every option of every item in the corpus, one option per call.
EvaluationRun evaluate_corpus(const Corpus& corpus, Condition condition,
                              const EvaluatorProfile& evaluator, Backend& backend, int max_parallel = 1);

struct CalibrationResult {
    Condition condition = Condition::with_text;
    double tau = 0;
    double achieved_accuracy = 0;
    std::size_t n_records = 0;
    std::vector<std::pair<double, double>> grid;  // (candidate tau, accuracy)
};

nlohmann::json to_json(const CalibrationResult& r);
CalibrationResult calibration_from_json(const nlohmann::json& j);

/// Accuracy of the rule ratio >= tau against gold labels.
double threshold_accuracy(const std::vector<std::pair<double, bool>>& records, double tau);

/// Grid search over distinct ratios, neighbour midpoints and one point above the largest
/// ratio; ties go to the largest tau.
CalibrationResult calibrate_threshold(const std::vector<std::pair<double, bool>>& records,
                                      Condition condition);

}  // namespace mcrc
