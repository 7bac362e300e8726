#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcrc {

inline constexpr int kCorpusSchemaVersion = 1;

/// Source of an item: the human author, or an LLM named after the colon
/// ("human", "llm:gpt-4").
class Generator {
public:
    Generator() : value_("human") {}

    static Generator human() { return Generator{}; }
    static Generator llm(std::string_view name);
    /// Accepts "human" or "llm:<name>" with a non-empty name.
    static Generator parse(std::string_view text);

    bool is_human() const { return value_ == "human"; }
    bool is_llm() const { return !is_human(); }
    /// Model name for llm generators, "human" otherwise.
    std::string name() const;
    const std::string& str() const { return value_; }

    friend bool operator==(const Generator&, const Generator&) = default;
    friend auto operator<=>(const Generator&, const Generator&) = default;

private:
    explicit Generator(std::string value) : value_(std::move(value)) {}
    std::string value_;
};

struct TextDoc {
    std::string id;
    std::string title;
    std::vector<std::string> body;  // paragraphs and subheadings, in order
    std::string language = "de";
    std::optional<std::string> source_url;

    /// Title followed by every body segment, joined by single newlines.
    std::string joined() const;
    /// Whitespace-delimited token count over title and body.
    std::size_t token_count() const;

    friend bool operator==(const TextDoc&, const TextDoc&) = default;
};

struct AnswerOption {
    std::string text;
    bool gold_label = false;
    /// The generator's own label word, e.g. "richtig". Absent for human items
    /// and for generated options whose label could not be read.
    std::optional<std::string> origin_label_raw;

    friend bool operator==(const AnswerOption&, const AnswerOption&) = default;
};

struct MCItem {
    std::string id;
    std::string text_id;
    std::string stem;
    std::vector<AnswerOption> options;
    Generator generator;
    std::vector<std::string> flags;

    std::vector<bool> gold_vector() const;
    bool has_flag(std::string_view flag) const;

    friend bool operator==(const MCItem&, const MCItem&) = default;
};

enum class Split { test, calibration };

const char* to_string(Split split);
Split parse_split(std::string_view text);

struct Corpus {
    std::vector<TextDoc> texts;
    std::vector<MCItem> items;
    Split split = Split::test;

    const TextDoc* find_text(std::string_view id) const;
    const MCItem* find_item(std::string_view id) const;
    /// Items attached to a text, in corpus order, optionally restricted to one generator.
    std::vector<const MCItem*> items_for(std::string_view text_id,
                                         const Generator* generator = nullptr) const;
    /// Distinct generators in order of first appearance.
    std::vector<Generator> generators() const;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct Violation {
    std::string field;
    std::string rule;

    friend bool operator==(const Violation&, const Violation&) = default;
};

namespace flags {
inline constexpr const char* nonstandard_option_count = "nonstandard_option_count";
inline constexpr const char* unlabeled_option = "unlabeled_option";
}  // namespace flags

std::vector<Violation> validate_item(const MCItem& item);

nlohmann::json to_json(const TextDoc& text);
nlohmann::json to_json(const MCItem& item);
nlohmann::json to_json(const Corpus& corpus);

/// Builds and validates a corpus from its JSON document form.
Corpus corpus_from_json(const nlohmann::json& doc);
Corpus parse_corpus(std::string_view content);
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace mcrc
