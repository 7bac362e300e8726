#include "mcrc/generation.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <mutex>

using namespace mcrc;
using mcrc::testing::read_data;

namespace {

const std::string kEnglishItems =
    "1. Why can no football matches take place in Yemen any more?\n"
    "a) Because of the civil war and the insecurity that comes with it. (correct)\n"
    "b) Because the stadiums were destroyed. (incorrect)\n"
    "c) Because all the players have left the country. (incorrect)\n"
    "2. Where did the team train for the Asian Cup?\n"
    "a) In several Arab countries. (correct)\n"
    "b) In Malaysia. (correct)\n"
    "c) In Yemen. (incorrect)\n"
    "3. What is the message of the team to the people and the politicians?\n"
    "a) They should invest more money in football. (incorrect)\n"
    "b) They should let the guns fall silent and start a dialogue. (correct)\n"
    "c) They should support the players better. (incorrect)\n";

// Answers each attempt from a fixed list and remembers every request.
class SequenceBackend : public Backend {
public:
    explicit SequenceBackend(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {}

    Completion complete(const ChatRequest& request) override {
        std::lock_guard lock(mu_);
        requests.push_back(request);
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(request.attempt), outputs_.size() - 1);
        return {outputs_[i], std::nullopt, id(), ""};
    }
    std::string id() const override { return "sequence"; }
    const std::string& model_name() const override { return name_; }

    std::vector<ChatRequest> requests;

private:
    std::vector<std::string> outputs_;
    std::string name_ = "sequence";
    std::mutex mu_;
};

TextDoc yemen() { return load_corpus(mcrc::testing::data_path("fixtures/yemen_corpus.json")).texts.at(0); }

std::vector<std::vector<bool>> gold_vectors(const std::vector<MCItem>& items) {
    std::vector<std::vector<bool>> out;
    for (const auto& i : items) out.push_back(i.gold_vector());
    return out;
}

}  // namespace

TEST(GenerationPrompt, MatchesTemplate) {
    TextDoc t;
    t.title = "Titel";
    t.body = {"Absatz eins.", "Absatz zwei."};
    EXPECT_EQ(build_generation_prompt(t),
              "Text:\nTitel\nAbsatz eins.\nAbsatz zwei.\n\n"
              "Schreibe 3 Multiple-Choice-Verständnisfragen zum Text oben, in deutscher Sprache. "
              "Jede Frage soll 3 Antwortmöglichkeiten haben. Schreibe hinter jede Antwort in Klammern, "
              "ob sie richtig oder falsch ist. Zwischen 0 und 3 Antworten können richtig sein. "
              "Die falschen Antworten sollten plausibel sein, wenn man den Text nicht gelesen hat.");
}

TEST(GenerationPrompt, CountsAreSubstituted) {
    TextDoc t;
    t.title = "T";
    const auto p = build_generation_prompt(t, 4, 5);
    EXPECT_NE(p.find("Schreibe 4 Multiple-Choice"), std::string::npos);
    EXPECT_NE(p.find("soll 5 Antwortmöglichkeiten"), std::string::npos);
    EXPECT_NE(p.find("Zwischen 0 und 5 Antworten"), std::string::npos);
}

TEST(LabelWord, KnownWords) {
    EXPECT_EQ(parse_label_word("richtig"), true);
    EXPECT_EQ(parse_label_word("Richtig"), true);
    EXPECT_EQ(parse_label_word("falsch"), false);
    EXPECT_EQ(parse_label_word("correct"), true);
    EXPECT_EQ(parse_label_word("incorrect"), false);
    EXPECT_EQ(parse_label_word("vielleicht"), std::nullopt);
}

TEST(GenerationParser, GptStyleFixture) {
    GenerationPolicy policy;
    const auto parsed = parse_generated_items(read_data("fixtures/yemen_gpt4.txt"), policy, "yemen",
                                              Generator::llm("gpt-4"));
    ASSERT_EQ(parsed.items.size(), 3u);
    const std::vector<std::vector<bool>> expected = {{true, false, false}, {true, true, false}, {false, true, false}};
    EXPECT_EQ(gold_vectors(parsed.items), expected);
    EXPECT_EQ(parsed.items[0].stem, "Warum dürfen im Jemen keine Fußballspiele mehr stattfinden?");
    EXPECT_EQ(parsed.items[1].options[1].text, "In Malaysia.");
    EXPECT_EQ(parsed.items[2].options[1].text,
              "Sie sollten die Gewehre schweigen lassen und einen vernünftigen Dialog und Frieden an ihre Stelle "
              "treten.");
    EXPECT_EQ(parsed.items[0].options[0].origin_label_raw, "richtig");
    EXPECT_EQ(parsed.items[0].id, "yemen-gpt-4-q1");
    EXPECT_EQ(parsed.items[2].generator, Generator::llm("gpt-4"));
    EXPECT_EQ(parsed.diagnostics.truncated_extra_items, 0);
    EXPECT_TRUE(parsed.diagnostics.unlabeled_options.empty());
    for (const auto& item : parsed.items) EXPECT_TRUE(validate_item(item).empty());
}

TEST(GenerationParser, BulletStyleFixture) {
    GenerationPolicy policy;
    const auto parsed = parse_generated_items(read_data("fixtures/yemen_llama2.txt"), policy, "yemen",
                                              Generator::llm("llama-2"));
    ASSERT_EQ(parsed.items.size(), 3u);
    const std::vector<std::vector<bool>> expected = {{true, false, false}, {true, false, false}, {true, false, false}};
    EXPECT_EQ(gold_vectors(parsed.items), expected);
    EXPECT_EQ(parsed.items[1].stem,
              "Wie haben die jemenitischen Fußballspieler sich für die Asienmeisterschaften qualifiziert?");
    EXPECT_EQ(parsed.items[0].options[0].text, "Weil das Land zu unsicher ist");
}

TEST(GenerationParser, KeepsFirstThreeItems) {
    const std::string raw = read_data("fixtures/yemen_gpt4.txt") +
                            "\n4. Wer ist Bashir Sinan?\na) Der Kapitän. (richtig)\nb) Der Trainer. (falsch)\n"
                            "c) Ein Fan. (falsch)\n";
    GenerationPolicy policy;
    const auto parsed = parse_generated_items(raw, policy, "yemen", Generator::llm("gpt-4"));
    ASSERT_EQ(parsed.items.size(), 3u);
    EXPECT_EQ(parsed.diagnostics.truncated_extra_items, 1);
    EXPECT_EQ(parsed.items[2].stem,
              "Was ist die Botschaft der jemenitischen Fußballmannschaft an die Bevölkerung und die Politik?");
}

TEST(GenerationParser, WrongOptionCountIsDropped) {
    const std::string raw =
        "1. Erste Frage?\na) A (richtig)\nb) B (falsch)\nc) C (falsch)\nd) D (falsch)\n"
        "2. Zweite Frage?\na) A (falsch)\nb) B (richtig)\nc) C (falsch)\n";
    GenerationPolicy policy;
    const auto parsed = parse_generated_items(raw, policy, "t", Generator::llm("m"));
    ASSERT_EQ(parsed.items.size(), 1u);
    EXPECT_EQ(parsed.items[0].stem, "Zweite Frage?");
    EXPECT_EQ(parsed.diagnostics.dropped_items.size(), 1u);
}

TEST(GenerationParser, UnlabeledOptionIsFlagged) {
    const std::string raw = "1. Frage?\na) A (richtig)\nb) B\nc) C (falsch)\n";
    GenerationPolicy policy;
    const auto parsed = parse_generated_items(raw, policy, "t", Generator::llm("m"));
    ASSERT_EQ(parsed.items.size(), 1u);
    EXPECT_TRUE(parsed.items[0].has_flag(flags::unlabeled_option));
    EXPECT_EQ(parsed.items[0].options[1].origin_label_raw, std::nullopt);
    EXPECT_FALSE(parsed.items[0].options[1].gold_label);
    EXPECT_EQ(parsed.diagnostics.unlabeled_options.size(), 1u);
}

TEST(GenerationParser, MarkdownEmphasisIsStripped) {
    const std::string raw = "**Frage 1:** Wo spielt die Mannschaft?\n- Im Jemen (**falsch**)\n- In Katar (richtig)\n"
                            "- In Malaysia (richtig)\n";
    GenerationPolicy policy;
    const auto parsed = parse_generated_items(raw, policy, "t", Generator::llm("m"));
    ASSERT_EQ(parsed.items.size(), 1u);
    EXPECT_EQ(parsed.items[0].stem, "Wo spielt die Mannschaft?");
    EXPECT_EQ(parsed.items[0].gold_vector(), (std::vector<bool>{false, true, true}));
}

TEST(GenerationParser, NoStructureThrows) {
    GenerationPolicy policy;
    EXPECT_THROW(parse_generated_items("Ich kann diese Aufgabe leider nicht erledigen.", policy, "t",
                                       Generator::llm("m")),
                 GenerationParseError);
}

TEST(GenerationParser, ItemIds) {
    EXPECT_EQ(generated_item_id("t7", Generator::llm("gpt-4"), 2), "t7-gpt-4-q2");
}

TEST(GenerationPolicy, Validation) {
    GenerationPolicy p;
    EXPECT_NO_THROW(p.validate());
    p.max_retries = -1;
    EXPECT_THROW(p.validate(), Error);
    p = {};
    p.min_target_language_share = 1.5;
    EXPECT_THROW(p.validate(), Error);
}

TEST(GenerationLoop, GermanOnFirstAttempt) {
    SequenceBackend backend({read_data("fixtures/yemen_gpt4.txt")});
    GenerationPolicy policy;
    const auto result = generate_items(yemen(), backend, policy, Generator::llm("gpt-4"));
    EXPECT_EQ(result.attempts, 1);
    EXPECT_EQ(result.items.size(), 3u);
    ASSERT_EQ(backend.requests.size(), 1u);
    EXPECT_EQ(backend.requests[0].temperature, 0.0);
    EXPECT_EQ(backend.requests[0].max_tokens, 1024);
    EXPECT_GE(result.language_share, 0.8);
}

TEST(GenerationLoop, EnglishThenGermanTakesTwoAttempts) {
    SequenceBackend backend({kEnglishItems, read_data("fixtures/yemen_gpt4.txt")});
    GenerationPolicy policy;
    const auto result = generate_items(yemen(), backend, policy, Generator::llm("gpt-4"));
    EXPECT_EQ(result.attempts, 2);
    ASSERT_EQ(backend.requests.size(), 2u);
    EXPECT_EQ(backend.requests[0].temperature, 0.0);
    EXPECT_EQ(backend.requests[1].temperature, 0.5);
    EXPECT_EQ(backend.requests[1].attempt, 1);
    ASSERT_EQ(result.attempt_shares.size(), 2u);
    EXPECT_LT(result.attempt_shares[0], 0.8);
    EXPECT_EQ(gold_vectors(result.items),
              (std::vector<std::vector<bool>>{{true, false, false}, {true, true, false}, {false, true, false}}));
}

TEST(GenerationLoop, ExhaustionAfterMaxRetries) {
    SequenceBackend backend({kEnglishItems});
    GenerationPolicy policy;
    policy.max_retries = 2;
    try {
        generate_items(yemen(), backend, policy, Generator::llm("gpt-4"));
        FAIL() << "expected exhaustion";
    } catch (const GenerationExhausted& e) {
        EXPECT_EQ(e.code(), ErrorCode::exhaustion);
        EXPECT_EQ(e.best().attempts, 3);
        EXPECT_EQ(e.best().attempt_shares.size(), 3u);
        EXPECT_EQ(e.best().items.size(), 3u);
    }
    EXPECT_EQ(backend.requests.size(), 3u);
}

TEST(GenerationLoop, ScriptedSequenceByAttempt) {
    ScriptRule rule;
    rule.contains = "Schreibe 3 Multiple-Choice";
    rule.sequence = {{kEnglishItems, std::nullopt}, {kEnglishItems, std::nullopt},
                     {read_data("fixtures/yemen_gpt4.txt"), std::nullopt}};
    ScriptedBackend backend("gpt-4", {rule});
    GenerationPolicy policy;
    const auto result = generate_items(yemen(), backend, policy, Generator::llm("gpt-4"));
    EXPECT_EQ(result.attempts, 3);
    EXPECT_EQ(result.items.size(), 3u);
}

TEST(GenerationLoop, DiagnosticsJson) {
    SequenceBackend backend({kEnglishItems, read_data("fixtures/yemen_gpt4.txt")});
    const auto result = generate_items(yemen(), backend, GenerationPolicy{}, Generator::llm("gpt-4"));
    const auto j = diagnostics_to_json(result);
    EXPECT_EQ(j.at("attempts"), 2);
    EXPECT_EQ(j.at("attempt_language_shares").size(), 2u);
}
