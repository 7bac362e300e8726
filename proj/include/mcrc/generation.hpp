#pragma once

#include "mcrc/corpus.hpp"
#include "mcrc/error.hpp"
#include "mcrc/language_id.hpp"
#include "mcrc/llm_client.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace mcrc {

struct GenerationPolicy {
    int n_items = 3;
    int n_options = 3;
    double first_temperature = 0.0;
    double retry_temperature = 0.5;
    double min_target_language_share = 0.8;
    int max_retries = 5;
    int max_tokens = 1024;
    std::string target_language = "de";

    void validate() const;
};

GenerationPolicy generation_policy_from_json(const nlohmann::json& j);

struct ParseDiagnostics {
    int truncated_extra_items = 0;
    /// "item <k> option <j>" for every option whose label could not be read.
    std::vector<std::string> unlabeled_options;
    /// Items removed after truncation because their option count was wrong.
    std::vector<std::string> dropped_items;
    /// Non-empty lines that belong to no question or option.
    std::vector<std::string> ignored_lines;
};

struct ParsedItems {
    std::vector<MCItem> items;
    ParseDiagnostics diagnostics;
};

struct GenerationResult {
    std::vector<MCItem> items;
    std::string raw_output;
    int attempts = 0;
    double language_share = 0.0;
    int truncated_extra_items = 0;
    ParseDiagnostics diagnostics;
    /// Language share of every attempt, in order.
    std::vector<double> attempt_shares;
};

nlohmann::json diagnostics_to_json(const GenerationResult& result);

/// Raised when generated output has no recognizable item structure.
class GenerationParseError : public Error {
public:
    GenerationParseError(const std::string& message, std::string raw)
        : Error(ErrorCode::parse, message), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// Raised when every attempt stayed below the language-share threshold.
class GenerationExhausted : public Error {
public:
    GenerationExhausted(const std::string& message, GenerationResult best)
        : Error(ErrorCode::exhaustion, message), best_(std::move(best)) {}
    /// The attempt with the highest language share.
    const GenerationResult& best() const noexcept { return best_; }

private:
    GenerationResult best_;
};

std::string build_generation_prompt(const TextDoc& text, int n_items = 3, int n_options = 3);

/// Maps a label word to a gold value: richtig/correct -> true, falsch/incorrect -> false.
std::optional<bool> parse_label_word(std::string_view word);

ParsedItems parse_generated_items(std::string_view raw, const GenerationPolicy& policy,
                                  const std::string& text_id, const Generator& generator);

std::string generated_item_id(const std::string& text_id, const Generator& generator, int index);

GenerationResult generate_items(const TextDoc& text, Backend& backend, const GenerationPolicy& policy,
                                const Generator& generator,
                                const LanguageIdentifier& identifier = TrigramLanguageIdentifier::bundled());

}  // namespace mcrc
