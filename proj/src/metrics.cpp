#include "mcrc/metrics.hpp"

#include "mcrc/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace mcrc {

GoldIndex::GoldIndex(const Corpus& corpus) {
    for (const auto& item : corpus.items) items_.emplace(item.id, &item);
}

const MCItem& GoldIndex::item(const std::string& item_id) const {
    auto it = items_.find(item_id);
    if (it == items_.end()) throw Error(ErrorCode::integrity, "response refers to unknown item " + item_id);
    return *it->second;
}

bool GoldIndex::contains(const ResponseRecord& r) const {
    auto it = items_.find(r.item_id);
    return it != items_.end() && r.option_index >= 0 &&
           static_cast<std::size_t>(r.option_index) < it->second->options.size();
}

bool GoldIndex::gold(const ResponseRecord& r) const {
    const auto& it = item(r.item_id);
    if (r.option_index < 0 || static_cast<std::size_t>(r.option_index) >= it.options.size())
        throw Error(ErrorCode::integrity, "response refers to option " + std::to_string(r.option_index) +
                                              " of item " + r.item_id + ", which does not exist");
    return it.options[static_cast<std::size_t>(r.option_index)].gold_label;
}

std::string evaluator_group(const ResponseRecord& r) {
    return r.evaluator_kind == EvaluatorKind::human ? "human" : r.evaluator_id;
}

bool AccuracyFilter::matches(const ResponseRecord& r, const GoldIndex& gold) const {
    if (condition && r.condition != *condition) return false;
    if (evaluator && evaluator_group(r) != *evaluator) return false;
    if (generator && gold.item(r.item_id).generator != *generator) return false;
    return true;
}

std::string AccuracyFilter::describe() const {
    std::string out = "generator=" + (generator ? generator->str() : std::string("*"));
    out += " evaluator=" + (evaluator ? *evaluator : std::string("*"));
    out += " condition=" + std::string(condition ? to_string(*condition) : "*");
    return out;
}

namespace {

AccuracySummary summarize(std::size_t correct, std::size_t total, std::size_t invalid,
                          const AccuracyFilter& filter) {
    if (total == 0) throw Error(ErrorCode::invalid_argument, "no valid responses for " + filter.describe());
    AccuracySummary s;
    s.condition = filter.condition;
    s.generator = filter.generator ? filter.generator->str() : "*";
    s.evaluator = filter.evaluator.value_or("*");
    s.n_responses = total;
    s.n_correct = correct;
    s.n_invalid = invalid;
    s.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    return s;
}

struct Tally {
    std::size_t correct = 0, total = 0;
};

double pooled_accuracy(const std::vector<const Tally*>& groups) {
    std::size_t c = 0, t = 0;
    for (const auto* g : groups) {
        c += g->correct;
        t += g->total;
    }
    return t == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(c) / static_cast<double>(t);
}

}  // namespace

AccuracySummary option_accuracy(const std::vector<ResponseRecord>& records, const Corpus& gold_corpus,
                                const AccuracyFilter& filter) {
    const GoldIndex gold(gold_corpus);
    std::size_t correct = 0, total = 0, invalid = 0;
    for (const auto& r : records) {
        if (!filter.matches(r, gold)) continue;
        const bool g = gold.gold(r);
        if (!r.valid()) {
            ++invalid;
            continue;
        }
        ++total;
        if (*r.label == g) ++correct;
    }
    return summarize(correct, total, invalid, filter);
}

AccuracySummary option_accuracy_ci(const std::vector<ResponseRecord>& records, const Corpus& gold_corpus,
                                   const AccuracyFilter& filter, const BootstrapOptions& bootstrap) {
    auto summary = option_accuracy(records, gold_corpus, filter);
    const GoldIndex gold(gold_corpus);
    std::map<std::string, Tally> by_text;
    for (const auto& r : records) {
        if (!r.valid() || !filter.matches(r, gold)) continue;
        auto& t = by_text[gold.item(r.item_id).text_id];
        ++t.total;
        if (*r.label == gold.gold(r)) ++t.correct;
    }
    std::vector<Tally> groups;
    for (const auto& [id, t] : by_text) groups.push_back(t);
    if (groups.size() >= 2) summary.ci = bootstrap_ci(groups, pooled_accuracy, bootstrap);
    return summary;
}

InformativityCell text_informativity(const AccuracySummary& ans, const AccuracySummary& guess) {
    if (ans.condition != Condition::with_text)
        throw Error(ErrorCode::invalid_argument, "answerability must come from with_text responses");
    if (guess.condition != Condition::without_text)
        throw Error(ErrorCode::invalid_argument, "guessability must come from without_text responses");
    if (ans.generator != guess.generator || ans.evaluator != guess.evaluator)
        throw Error(ErrorCode::invalid_argument, "informativity needs matching generator and evaluator, got " +
                                                     ans.generator + "/" + ans.evaluator + " vs " +
                                                     guess.generator + "/" + guess.evaluator);
    InformativityCell cell;
    cell.generator = ans.generator;
    cell.evaluator = ans.evaluator;
    cell.answerability = ans.accuracy;
    cell.guessability = guess.accuracy;
    cell.informativity = ans.accuracy - guess.accuracy;
    return cell;
}

std::vector<TextTally> tally_by_text(const std::vector<ResponseRecord>& records, const Corpus& gold_corpus,
                                     const AccuracyFilter& filter) {
    const GoldIndex gold(gold_corpus);
    std::map<std::string, TextTally> by_text;
    for (const auto& r : records) {
        if (!r.valid() || !filter.matches(r, gold)) continue;
        const auto& text_id = gold.item(r.item_id).text_id;
        auto& t = by_text[text_id];
        t.text_id = text_id;
        const bool ok = *r.label == gold.gold(r);
        if (r.condition == Condition::with_text) {
            ++t.with_total;
            t.with_correct += ok;
        } else {
            ++t.without_total;
            t.without_correct += ok;
        }
    }
    std::vector<TextTally> out;
    for (auto& [id, t] : by_text) out.push_back(std::move(t));
    return out;
}

InformativityCell informativity_cell(const std::vector<ResponseRecord>& records, const Corpus& gold,
                                     const Generator& generator, const std::string& evaluator,
                                     const BootstrapOptions& bootstrap) {
    AccuracyFilter with{generator, evaluator, Condition::with_text};
    AccuracyFilter without{generator, evaluator, Condition::without_text};
    auto cell = text_informativity(option_accuracy(records, gold, with), option_accuracy(records, gold, without));

    const auto groups = tally_by_text(records, gold, AccuracyFilter{generator, evaluator, std::nullopt});
    if (groups.size() >= 2) {
        cell.ci = bootstrap_ci(
            groups,
            [](const std::vector<const TextTally*>& sample) {
                std::size_t wc = 0, wt = 0, gc = 0, gt = 0;
                for (const auto* t : sample) {
                    wc += t->with_correct;
                    wt += t->with_total;
                    gc += t->without_correct;
                    gt += t->without_total;
                }
                if (wt == 0 || gt == 0) return std::numeric_limits<double>::quiet_NaN();
                return static_cast<double>(wc) / static_cast<double>(wt) -
                       static_cast<double>(gc) / static_cast<double>(gt);
            },
            bootstrap);
    }
    return cell;
}

double cohens_kappa(const std::vector<bool>& a, const std::vector<bool>& b) {
    if (a.size() != b.size())
        throw Error(ErrorCode::invalid_argument, "kappa needs equal-length label vectors (" +
                                                     std::to_string(a.size()) + " vs " +
                                                     std::to_string(b.size()) + ")");
    if (a.empty()) throw Error(ErrorCode::invalid_argument, "kappa of empty label vectors");
    const auto n = static_cast<long long>(a.size());
    long long agree = 0, ca = 0, cb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        agree += a[i] == b[i];
        ca += a[i];
        cb += b[i];
    }
    // Scaled by n^2: p_o -> agree * n, p_e -> expected.
    const long long expected = ca * cb + (n - ca) * (n - cb);
    const long long denom = n * n - expected;
    if (denom == 0) return 1.0;  // both raters constant and equal
    return static_cast<double>(agree * n - expected) / static_cast<double>(denom);
}

namespace {

using LabelMap = std::map<std::pair<std::string, int>, bool>;

std::map<std::string, LabelMap> labels_by_evaluator(const std::vector<ResponseRecord>& records,
                                                    Condition condition) {
    std::map<std::string, LabelMap> out;
    for (const auto& r : records)
        if (r.condition == condition && r.valid()) out[r.evaluator_id][{r.item_id, r.option_index}] = *r.label;
    return out;
}

std::optional<double> pair_kappa(const LabelMap& x, const LabelMap& y) {
    std::vector<bool> a, b;
    for (const auto& [key, label] : x) {
        auto it = y.find(key);
        if (it == y.end()) continue;
        a.push_back(label);
        b.push_back(it->second);
    }
    if (a.empty()) return std::nullopt;
    return cohens_kappa(a, b);
}

}  // namespace

IaaResult mean_pairwise_iaa(const std::string& target, const std::set<std::string>& humans,
                            Condition condition, const std::vector<ResponseRecord>& records) {
    const auto labels = labels_by_evaluator(records, condition);
    static const LabelMap empty;
    auto lookup = [&](const std::string& id) -> const LabelMap& {
        auto it = labels.find(id);
        return it == labels.end() ? empty : it->second;
    };
    IaaResult result;
    double sum = 0;
    for (const auto& h : humans) {
        if (h == target) continue;
        const auto k = pair_kappa(lookup(target), lookup(h));
        if (!k) {
            result.skipped.push_back(h);
            continue;
        }
        result.pairwise[h] = *k;
        sum += *k;
        ++result.pairs;
    }
    if (result.pairs == 0)
        throw Error(ErrorCode::invalid_argument,
                    "evaluator " + target + " shares no " + to_string(condition) + " responses with any human");
    result.mean = sum / static_cast<double>(result.pairs);
    return result;
}

AgreementMatrix agreement_matrix(const std::vector<ResponseRecord>& records,
                                 const std::vector<std::string>& humans, const std::vector<std::string>& others,
                                 Condition condition) {
    AgreementMatrix m;
    m.condition = condition;
    m.evaluators = humans;
    m.evaluators.insert(m.evaluators.end(), others.begin(), others.end());
    const auto labels = labels_by_evaluator(records, condition);
    static const LabelMap empty;
    auto lookup = [&](const std::string& id) -> const LabelMap& {
        auto it = labels.find(id);
        return it == labels.end() ? empty : it->second;
    };
    const auto n = m.evaluators.size();
    m.kappa.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto k = pair_kappa(lookup(m.evaluators[i]), lookup(m.evaluators[j]));
            m.kappa[i][j] = k;
            m.kappa[j][i] = k;
        }

    const std::set<std::string> human_set(humans.begin(), humans.end());
    double human_sum = 0;
    std::size_t human_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        std::size_t count = 0;
        for (std::size_t j = 0; j < humans.size(); ++j) {
            if (j == i || !m.kappa[i][j]) continue;
            sum += *m.kappa[i][j];
            ++count;
        }
        std::optional<double> mean;
        if (count) mean = sum / static_cast<double>(count);
        m.mean_with_humans[m.evaluators[i]] = mean;
        if (i < humans.size() && mean) {
            human_sum += *mean;
            ++human_n;
        }
    }
    if (human_n) m.human_average = human_sum / static_cast<double>(human_n);
    return m;
}

RatingSummary rating_summary(const std::vector<Rating>& ratings, const Corpus& corpus,
                             const Generator& generator) {
    const GoldIndex index(corpus);
    RatingSummary s;
    s.generator = generator.str();
    long long sum = 0;
    for (const auto& r : ratings) {
        if (r.value < 1 || r.value > 5)
            throw Error(ErrorCode::invalid_argument, "rating " + std::to_string(r.value) + " for item " +
                                                         r.item_id + " is outside 1..5");
        if (index.item(r.item_id).generator != generator) continue;
        ++s.counts[static_cast<std::size_t>(r.value - 1)];
        ++s.n;
        sum += r.value;
    }
    if (s.n) s.mean = static_cast<double>(sum) / static_cast<double>(s.n);
    return s;
}

std::vector<RatingAccuracy> accuracy_by_rating(const std::vector<ResponseRecord>& records,
                                               const std::vector<Rating>& ratings, const Corpus& gold_corpus,
                                               const std::optional<BootstrapOptions>& bootstrap) {
    const GoldIndex gold(gold_corpus);
    std::map<std::string, std::vector<const Rating*>> by_item;
    for (const auto& r : ratings) {
        if (r.value < 1 || r.value > 5)
            throw Error(ErrorCode::invalid_argument, "rating outside 1..5 for item " + r.item_id);
        by_item[r.item_id].push_back(&r);
    }

    // rating -> condition -> text -> tally
    std::map<int, std::map<Condition, std::map<std::string, Tally>>> tallies;
    for (const auto& r : records) {
        if (!r.valid()) continue;
        auto it = by_item.find(r.item_id);
        if (it == by_item.end()) continue;
        std::vector<int> joined;
        for (const auto* rating : it->second)
            if (rating->annotator_id == r.evaluator_id) joined.push_back(rating->value);
        if (joined.empty())
            for (const auto* rating : it->second) joined.push_back(rating->value);
        const bool ok = *r.label == gold.gold(r);
        const auto& text_id = gold.item(r.item_id).text_id;
        for (int v : joined) {
            auto& t = tallies[v][r.condition][text_id];
            ++t.total;
            t.correct += ok;
        }
    }

    std::vector<RatingAccuracy> out;
    for (const auto& [value, by_condition] : tallies) {
        RatingAccuracy ra;
        ra.rating = value;
        for (const auto& [condition, by_text] : by_condition) {
            std::vector<Tally> groups;
            std::size_t c = 0, t = 0;
            for (const auto& [id, tally] : by_text) {
                groups.push_back(tally);
                c += tally.correct;
                t += tally.total;
            }
            AccuracyFilter f;
            f.condition = condition;
            auto s = summarize(c, t, 0, f);
            s.generator = "*";
            s.evaluator = "rating=" + std::to_string(value);
            if (bootstrap && groups.size() >= 2) s.ci = bootstrap_ci(groups, pooled_accuracy, *bootstrap);
            (condition == Condition::with_text ? ra.with_text : ra.without_text) = std::move(s);
        }
        out.push_back(std::move(ra));
    }
    return out;
}

}  // namespace mcrc
