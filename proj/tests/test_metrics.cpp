#include "mcrc/metrics.hpp"

#include "mcrc/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mcrc;

namespace {

// Textbook kappa on proportions; independent of the integer form used in the library.
double oracle_kappa(const std::vector<bool>& a, const std::vector<bool>& b) {
    const double n = static_cast<double>(a.size());
    double agree = 0, pa = 0, pb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        agree += a[i] == b[i] ? 1 : 0;
        pa += a[i] ? 1 : 0;
        pb += b[i] ? 1 : 0;
    }
    const double po = agree / n;
    const double pe = (pa / n) * (pb / n) + (1 - pa / n) * (1 - pb / n);
    return (po - pe) / (1 - pe);
}

std::vector<bool> bits(unsigned mask, int n) {
    std::vector<bool> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
    return v;
}

ResponseRecord rec(const std::string& item, int opt, const std::string& ev, Condition c, std::optional<bool> label,
                   EvaluatorKind kind = EvaluatorKind::llm) {
    ResponseRecord r;
    r.item_id = item;
    r.option_index = opt;
    r.evaluator_id = ev;
    r.evaluator_kind = kind;
    r.condition = c;
    r.label = label;
    return r;
}

// Answers every option of every item; correct on the first `k` options of each item.
std::vector<ResponseRecord> answer_all(const Corpus& corpus, const std::string& ev, Condition c, int k,
                                       EvaluatorKind kind = EvaluatorKind::llm) {
    std::vector<ResponseRecord> out;
    for (const auto& item : corpus.items)
        for (int j = 0; j < static_cast<int>(item.options.size()); ++j) {
            const bool g = item.options[static_cast<std::size_t>(j)].gold_label;
            out.push_back(rec(item.id, j, ev, c, j < k ? g : !g, kind));
        }
    return out;
}

BootstrapOptions boot(std::uint64_t seed = 7) {
    BootstrapOptions b;
    b.seed = seed;
    return b;
}

}  // namespace

TEST(Kappa, MatchesProportionFormulaExhaustively) {
    for (int n = 1; n <= 6; ++n)
        for (unsigned x = 0; x < (1u << n); ++x)
            for (unsigned y = 0; y < (1u << n); ++y) {
                const auto a = bits(x, n), b = bits(y, n);
                const double k = cohens_kappa(a, b);
                const bool degenerate = (x == 0 || x == (1u << n) - 1) && x == y;
                if (degenerate) {
                    EXPECT_EQ(k, 1.0);
                    continue;
                }
                ASSERT_NEAR(k, oracle_kappa(a, b), 1e-12) << n << " " << x << " " << y;
                EXPECT_EQ(k, cohens_kappa(b, a));
            }
}

TEST(Kappa, KnownValues) {
    EXPECT_EQ(cohens_kappa({true, false, true, false}, {true, false, true, false}), 1.0);
    EXPECT_EQ(cohens_kappa({true, false, true, false}, {false, true, false, true}), -1.0);
    // One constant rater leaves no agreement beyond chance to measure.
    EXPECT_EQ(cohens_kappa({true, true, true}, {false, false, false}), 0.0);
    EXPECT_EQ(cohens_kappa({false, false}, {false, false}), 1.0);
    EXPECT_NEAR(cohens_kappa({true, true, false, false}, {true, false, false, false}), 0.5, 1e-15);
}

TEST(Kappa, Errors) {
    EXPECT_THROW(cohens_kappa({}, {}), Error);
    EXPECT_THROW(cohens_kappa({true}, {true, false}), Error);
}

TEST(Accuracy, OptionLevelAndInvalid) {
    const auto corpus = mcrc::testing::synthetic_corpus(2, {Generator::human()});
    auto records = answer_all(corpus, "m", Condition::with_text, 2);
    records.push_back(rec("t1-human-q1", 0, "m", Condition::with_text, std::nullopt));
    const auto s = option_accuracy(records, corpus, {Generator::human(), std::string("m"), Condition::with_text});
    EXPECT_EQ(s.n_responses, 18u);
    EXPECT_EQ(s.n_correct, 12u);
    EXPECT_EQ(s.n_invalid, 1u);
    EXPECT_DOUBLE_EQ(s.accuracy, 12.0 / 18.0);
    EXPECT_THROW(option_accuracy(records, corpus, {Generator::llm("x"), std::nullopt, std::nullopt}), Error);
}

TEST(Accuracy, HumanGroupPoolsAnnotators) {
    const auto corpus = mcrc::testing::synthetic_corpus(1, {Generator::human()});
    auto records = answer_all(corpus, "h1", Condition::with_text, 3, EvaluatorKind::human);
    const auto more = answer_all(corpus, "h2", Condition::with_text, 0, EvaluatorKind::human);
    records.insert(records.end(), more.begin(), more.end());
    const auto s = option_accuracy(records, corpus, {std::nullopt, std::string("human"), Condition::with_text});
    EXPECT_EQ(s.n_responses, 18u);
    EXPECT_DOUBLE_EQ(s.accuracy, 0.5);
}

TEST(Accuracy, UnknownItemIsIntegrityError) {
    const auto corpus = mcrc::testing::synthetic_corpus(1, {Generator::human()});
    try {
        option_accuracy({rec("nope", 0, "m", Condition::with_text, true)}, corpus, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::integrity);
    }
}

TEST(Informativity, Difference) {
    const auto corpus = mcrc::testing::synthetic_corpus(4, {Generator::human()});
    auto records = answer_all(corpus, "m", Condition::with_text, 3);
    const auto guess = answer_all(corpus, "m", Condition::without_text, 1);
    records.insert(records.end(), guess.begin(), guess.end());
    const auto cell = informativity_cell(records, corpus, Generator::human(), "m", boot());
    EXPECT_DOUBLE_EQ(cell.answerability, 1.0);
    EXPECT_DOUBLE_EQ(cell.guessability, 1.0 / 3.0);
    EXPECT_EQ(cell.informativity, cell.answerability - cell.guessability);
    ASSERT_TRUE(cell.ci);
    // Every text has the same accuracy, so every resample gives the point value.
    EXPECT_DOUBLE_EQ(cell.ci->low, cell.informativity);
    EXPECT_DOUBLE_EQ(cell.ci->high, cell.informativity);
}

TEST(Informativity, RejectsMismatchedInputs) {
    AccuracySummary a, g;
    a.condition = Condition::with_text;
    g.condition = Condition::without_text;
    a.generator = g.generator = "human";
    a.evaluator = "m";
    g.evaluator = "n";
    EXPECT_THROW(text_informativity(a, g), Error);
    g.evaluator = "m";
    EXPECT_NO_THROW(text_informativity(a, g));
    EXPECT_THROW(text_informativity(g, a), Error);
}

TEST(Informativity, MissingConditionIsAnError) {
    const auto corpus = mcrc::testing::synthetic_corpus(2, {Generator::human()});
    const auto records = answer_all(corpus, "m", Condition::with_text, 3);
    EXPECT_THROW(informativity_cell(records, corpus, Generator::human(), "m", boot()), Error);
}

TEST(Bootstrap, DeterministicAndSeedSensitive) {
    std::vector<double> groups;
    std::mt19937 rng(3);
    for (int i = 0; i < 40; ++i) groups.push_back(std::uniform_real_distribution<double>(0, 1)(rng));
    auto mean = [](const std::vector<const double*>& s) {
        double t = 0;
        for (const auto* v : s) t += *v;
        return t / static_cast<double>(s.size());
    };
    const auto a = bootstrap_ci(groups, mean, boot(1));
    EXPECT_EQ(a, bootstrap_ci(groups, mean, boot(1)));
    EXPECT_NE(a, bootstrap_ci(groups, mean, boot(2)));
    EXPECT_LT(a.low, a.high);
}

TEST(Bootstrap, Validation) {
    std::vector<int> one{1}, two{1, 2};
    auto f = [](const std::vector<const int*>&) { return 0.0; };
    EXPECT_THROW(bootstrap_ci(one, f, boot()), Error);
    auto b = boot();
    b.n_resamples = 999;
    EXPECT_THROW(bootstrap_ci(two, f, b), Error);
    b = boot();
    b.level = 1.0;
    EXPECT_THROW(bootstrap_ci(two, f, b), Error);
    auto nan = [](const std::vector<const int*>&) { return std::nan(""); };
    EXPECT_THROW(bootstrap_ci(two, nan, boot()), Error);
}

TEST(Bootstrap, Quantile) {
    EXPECT_DOUBLE_EQ(sorted_quantile({1, 2, 3, 4, 5}, 0.5), 3);
    EXPECT_DOUBLE_EQ(sorted_quantile({0, 10}, 0.25), 2.5);
    EXPECT_DOUBLE_EQ(sorted_quantile({4}, 0.9), 4);
}

TEST(Agreement, PairwiseMeanSkipsDisjointHumans) {
    const auto c = Condition::without_text;
    std::vector<ResponseRecord> r;
    const std::vector<bool> h1{true, false, true, false}, h2{true, false, false, false}, m{true, true, true, false};
    for (int i = 0; i < 4; ++i) {
        const auto item = "i" + std::to_string(i);
        r.push_back(rec(item, 0, "h1", c, h1[i], EvaluatorKind::human));
        r.push_back(rec(item, 0, "h2", c, h2[i], EvaluatorKind::human));
        r.push_back(rec(item, 0, "m", c, m[i]));
        r.push_back(rec("other" + std::to_string(i), 0, "h3", c, true, EvaluatorKind::human));
    }
    const auto res = mean_pairwise_iaa("m", {"h1", "h2", "h3"}, c, r);
    EXPECT_EQ(res.pairs, 2u);
    EXPECT_EQ(res.skipped, std::vector<std::string>{"h3"});
    EXPECT_DOUBLE_EQ(res.mean, (cohens_kappa(m, h1) + cohens_kappa(m, h2)) / 2);
    EXPECT_THROW(mean_pairwise_iaa("m", {"h3"}, c, r), Error);
    EXPECT_THROW(mean_pairwise_iaa("m", {"h1"}, Condition::with_text, r), Error);

    const auto h1_res = mean_pairwise_iaa("h1", {"h1", "h2", "h3"}, c, r);
    EXPECT_EQ(h1_res.pairs, 1u);
    EXPECT_DOUBLE_EQ(h1_res.mean, cohens_kappa(h1, h2));
}

TEST(Agreement, MatrixSymmetricAndAverages) {
    const auto c = Condition::with_text;
    std::vector<ResponseRecord> r;
    std::mt19937 rng(11);
    const std::vector<std::string> evs{"h1", "h2", "h3", "m1"};
    for (int i = 0; i < 30; ++i)
        for (const auto& e : evs)
            r.push_back(rec("i" + std::to_string(i), i % 3, e, c, rng() % 2 == 0,
                            e[0] == 'h' ? EvaluatorKind::human : EvaluatorKind::llm));
    const auto m = agreement_matrix(r, {"h1", "h2", "h3"}, {"m1"}, c);
    ASSERT_EQ(m.evaluators.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_FALSE(m.kappa[i][i]);
        for (std::size_t j = 0; j < 4; ++j)
            if (i != j) EXPECT_EQ(m.kappa[i][j], m.kappa[j][i]);
    }
    for (const auto& e : evs) {
        std::set<std::string> humans{"h1", "h2", "h3"};
        EXPECT_DOUBLE_EQ(*m.mean_with_humans.at(e), mean_pairwise_iaa(e, humans, c, r).mean) << e;
    }
    const double avg =
        (*m.mean_with_humans.at("h1") + *m.mean_with_humans.at("h2") + *m.mean_with_humans.at("h3")) / 3;
    EXPECT_DOUBLE_EQ(*m.human_average, avg);
}

TEST(Ratings, SummaryPerGenerator) {
    const auto corpus = mcrc::testing::synthetic_corpus(1, {Generator::human(), Generator::llm("g")});
    const std::vector<Rating> ratings{{"t1-human-q1", "h1", 5}, {"t1-human-q2", "h1", 4},
                                      {"t1-g-q1", "h1", 1}, {"t1-g-q1", "h2", 2}};
    const auto h = rating_summary(ratings, corpus, Generator::human());
    EXPECT_EQ(h.n, 2u);
    EXPECT_EQ(h.count(5), 1u);
    EXPECT_DOUBLE_EQ(*h.mean, 4.5);
    const auto g = rating_summary(ratings, corpus, Generator::llm("g"));
    EXPECT_EQ(g.count(1), 1u);
    EXPECT_EQ(g.count(2), 1u);
    EXPECT_FALSE(rating_summary({}, corpus, Generator::human()).mean);
    EXPECT_THROW(rating_summary({{"t1-g-q1", "h1", 6}}, corpus, Generator::human()), Error);
}

TEST(Ratings, AccuracyJoinsOwnRatingFirst) {
    const auto corpus = mcrc::testing::synthetic_corpus(1, {Generator::human()});
    const auto c = Condition::with_text;
    // h1 rated q1 with 2 and is right on all of it; h2 gave 5 and is wrong on all of it.
    // m never rated, so its responses join every rating of the item.
    std::vector<ResponseRecord> r;
    const auto& item = *corpus.find_item("t1-human-q1");
    for (int j = 0; j < 3; ++j) {
        const bool g = item.options[static_cast<std::size_t>(j)].gold_label;
        r.push_back(rec(item.id, j, "h1", c, g, EvaluatorKind::human));
        r.push_back(rec(item.id, j, "h2", c, !g, EvaluatorKind::human));
    }
    const std::vector<Rating> ratings{{item.id, "h1", 2}, {item.id, "h2", 5}};
    auto out = accuracy_by_rating(r, ratings, corpus);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].rating, 2);
    EXPECT_DOUBLE_EQ(out[0].with_text->accuracy, 1.0);
    EXPECT_FALSE(out[0].without_text);
    EXPECT_DOUBLE_EQ(out[1].with_text->accuracy, 0.0);

    r.push_back(rec(item.id, 0, "m", c, item.options[0].gold_label));
    out = accuracy_by_rating(r, ratings, corpus);
    EXPECT_EQ(out[0].with_text->n_responses, 4u);
    EXPECT_EQ(out[1].with_text->n_responses, 4u);
    EXPECT_EQ(out[1].with_text->n_correct, 1u);
}
