#pragma once

#include "mcrc/bootstrap.hpp"
#include "mcrc/corpus.hpp"
#include "mcrc/evaluation.hpp"
#include "mcrc/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace mcrc {

struct ReportInputs {
    const Corpus* corpus = nullptr;
    std::vector<ResponseRecord> records;  // all evaluators, both conditions
    std::vector<Rating> ratings;          // human quality ratings, may be empty
    BootstrapOptions bootstrap;
    nlohmann::json provenance = nlohmann::json::object();
};

struct Report {
    nlohmann::json data;
    std::string text;
    std::string accuracy_csv;
    std::string informativity_csv;
    std::string ratings_csv;
    std::string rating_accuracy_csv;
    std::vector<std::string> warnings;
};

/// Generator x evaluator accuracies and informativity, agreement, and rating
/// summaries. Deterministic for fixed inputs and seed.
Report build_report(const ReportInputs& inputs);

/// Writes report.json, report.txt and the CSV series into `dir`.
std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir);

std::vector<Rating> ratings_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<Rating>& ratings);

}  // namespace mcrc
