#pragma once

#include "mcrc/bootstrap.hpp"
#include "mcrc/corpus.hpp"
#include "mcrc/evaluation.hpp"

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace mcrc {

/// Resolves (item, option) keys of response records to gold labels and texts.
class GoldIndex {
public:
    explicit GoldIndex(const Corpus& corpus);

    const MCItem& item(const std::string& item_id) const;
    bool gold(const ResponseRecord& r) const;
    bool contains(const ResponseRecord& r) const;

private:
    std::unordered_map<std::string, const MCItem*> items_;
};

/// Evaluator column used in reports: all human annotators pool into "human".
std::string evaluator_group(const ResponseRecord& r);

struct AccuracyFilter {
    std::optional<Generator> generator;
    /// Matches evaluator_group(), so "human" selects every annotator.
    std::optional<std::string> evaluator;
    std::optional<Condition> condition;

    bool matches(const ResponseRecord& r, const GoldIndex& gold) const;
    std::string describe() const;
};

struct AccuracySummary {
    std::optional<Condition> condition;
    std::string generator;
    std::string evaluator;
    std::size_t n_responses = 0;  // valid responses only
    std::size_t n_correct = 0;
    std::size_t n_invalid = 0;
    double accuracy = 0;
    std::optional<Interval> ci;
};

/// Option-level accuracy of valid responses matching the filter.
AccuracySummary option_accuracy(const std::vector<ResponseRecord>& records, const Corpus& gold,
                                const AccuracyFilter& filter);

/// Same, with a bootstrap CI over per-text groups.
AccuracySummary option_accuracy_ci(const std::vector<ResponseRecord>& records, const Corpus& gold,
                                   const AccuracyFilter& filter, const BootstrapOptions& bootstrap);

struct InformativityCell {
    std::string generator;
    std::string evaluator;
    double answerability = 0;
    double guessability = 0;
    double informativity = 0;
    std::optional<Interval> ci;
};

/// answerability minus guessability for one (generator, evaluator) pair.
InformativityCell text_informativity(const AccuracySummary& answerability,
                                     const AccuracySummary& guessability);

/// Per-text response counts; the bootstrap resampling unit.
struct TextTally {
    std::string text_id;
    std::size_t with_correct = 0, with_total = 0;
    std::size_t without_correct = 0, without_total = 0;
};

std::vector<TextTally> tally_by_text(const std::vector<ResponseRecord>& records, const Corpus& gold,
                                     const AccuracyFilter& filter);

/// Full cell: accuracies in both conditions plus a bootstrap CI of their difference.
InformativityCell informativity_cell(const std::vector<ResponseRecord>& records, const Corpus& gold,
                                     const Generator& generator, const std::string& evaluator,
                                     const BootstrapOptions& bootstrap);

/// Cohen's kappa for two binary raters. Both raters constant and equal -> 1.
double cohens_kappa(const std::vector<bool>& a, const std::vector<bool>& b);

struct IaaResult {
    double mean = 0;
    std::size_t pairs = 0;
    std::map<std::string, double> pairwise;  // human id -> kappa
    std::vector<std::string> skipped;        // humans sharing no responses with the target
};

/// Mean pairwise kappa between `target` and each human (excluding the target itself),
/// over the intersection of valid (item, option) responses in `condition`.
IaaResult mean_pairwise_iaa(const std::string& target, const std::set<std::string>& humans,
                            Condition condition, const std::vector<ResponseRecord>& records);

struct AgreementMatrix {
    Condition condition = Condition::with_text;
    std::vector<std::string> evaluators;
    std::vector<std::vector<std::optional<double>>> kappa;  // symmetric, diagonal unset
    std::map<std::string, std::optional<double>> mean_with_humans;
    std::optional<double> human_average;
};

AgreementMatrix agreement_matrix(const std::vector<ResponseRecord>& records,
                                 const std::vector<std::string>& humans,
                                 const std::vector<std::string>& others, Condition condition);

struct Rating {
    std::string item_id;
    std::string annotator_id;
    int value = 0;

    friend bool operator==(const Rating&, const Rating&) = default;
};

struct RatingSummary {
    std::string generator;
    std::array<std::size_t, 5> counts{};  // counts[v - 1] for rating v
    std::size_t n = 0;
    std::optional<double> mean;

    std::size_t count(int value) const { return counts.at(static_cast<std::size_t>(value - 1)); }
};

RatingSummary rating_summary(const std::vector<Rating>& ratings, const Corpus& corpus,
                             const Generator& generator);

struct RatingAccuracy {
    int rating = 0;
    std::optional<AccuracySummary> with_text;
    std::optional<AccuracySummary> without_text;
};

/// Accuracy grouped by item rating. A record joins its own annotator's rating
/// of the item when there is one, otherwise every rating the item received.
std::vector<RatingAccuracy> accuracy_by_rating(const std::vector<ResponseRecord>& records,
                                               const std::vector<Rating>& ratings, const Corpus& gold,
                                               const std::optional<BootstrapOptions>& bootstrap = std::nullopt);

}  // namespace mcrc
