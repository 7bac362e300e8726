#pragma once

#include "mcrc/annotation.hpp"
#include "mcrc/bootstrap.hpp"
#include "mcrc/evaluation.hpp"
#include "mcrc/generation.hpp"
#include "mcrc/llm_client.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mcrc {

struct GeneratorSpec {
    std::string name;  // becomes llm:<name>
    BackendConfig backend;
};

struct CalibrationSpec {
    std::filesystem::path corpus;
    std::vector<std::string> evaluators;  // empty: every ratio_threshold evaluator
};

/// One declarative run document. Relative paths resolve against the config
/// file's directory; "${NAME}" in any string is replaced from the environment.
struct RunConfig {
    std::filesystem::path base_dir;
    nlohmann::json raw;        // as written, before interpolation
    std::string config_hash;   // of `raw`, so secrets never reach outputs
    std::uint64_t seed = 0;
    std::filesystem::path run_dir;
    std::filesystem::path corpus;
    int max_parallel = 1;
    BootstrapOptions bootstrap;
    GenerationPolicy policy;
    std::vector<GeneratorSpec> generators;
    std::vector<EvaluatorProfile> evaluators;
    std::optional<CalibrationSpec> calibration;
    std::optional<ServiceConfig> annotation;
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    std::vector<std::filesystem::path> human_responses;
    std::vector<std::filesystem::path> ratings;

    /// Seeds and hash embedded in every artifact.
    nlohmann::json provenance() const;
};

/// Replaces ${NAME} with the variable's value; unset variables are a config error.
nlohmann::json interpolate_env(const nlohmann::json& j);

RunConfig parse_run_config(const nlohmann::json& raw, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Corpus the later stages work on: run_dir/corpus.json once generate has run.
std::filesystem::path working_corpus_path(const RunConfig& config);

// Each command returns a process exit code: 0 ok, 1 runtime failure, 2 usage or config.
int cmd_generate(const RunConfig& config, std::ostream& log);
int cmd_evaluate(const RunConfig& config, std::ostream& log);
int cmd_calibrate(const RunConfig& config, std::ostream& log);
int cmd_report(const RunConfig& config, std::ostream& log);
int cmd_export(const RunConfig& config, std::ostream& log);
int cmd_serve(const RunConfig& config, std::ostream& log);

int exit_code_for(ErrorCode code);

}  // namespace mcrc
