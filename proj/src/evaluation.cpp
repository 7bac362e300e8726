#include "mcrc/evaluation.hpp"

#include "mcrc/error.hpp"
#include "mcrc/parallel.hpp"

#include <algorithm>
#include <tuple>

namespace mcrc {

using nlohmann::json;

const char* to_string(Condition c) {
    return c == Condition::with_text ? "with_text" : "without_text";
}

Condition parse_condition(std::string_view text) {
    if (text == "with_text") return Condition::with_text;
    if (text == "without_text") return Condition::without_text;
    throw Error(ErrorCode::parse, "unknown condition '" + std::string(text) + "'");
}

const char* to_string(EvaluatorKind k) { return k == EvaluatorKind::human ? "human" : "llm"; }

const char* to_string(Decision d) {
    return d == Decision::parsed_letter ? "parsed_letter" : "ratio_threshold";
}

std::optional<LabelDistribution> label_distribution(const TokenDistribution& dist) {
    double r = 0, f = 0;
    for (const auto& [token, p] : dist) {
        const auto b = token.find_first_not_of(" \t\n\r");
        if (b == std::string::npos) continue;
        const auto e = token.find_last_not_of(" \t\n\r");
        const auto core = token.substr(b, e - b + 1);
        if (core == "R") r += p;
        else if (core == "F") f += p;
    }
    if (r + f <= 0) return std::nullopt;
    return LabelDistribution{r / (r + f), f / (r + f)};
}

std::optional<double> EvaluatorProfile::tau_for(Condition c) const {
    return c == Condition::with_text ? tau_with_text : tau_without_text;
}

void EvaluatorProfile::validate() const {
    if (id.empty()) throw Error(ErrorCode::config, "evaluator needs an id");
    if (decision == Decision::ratio_threshold) {
        for (auto c : {Condition::with_text, Condition::without_text}) {
            const auto tau = tau_for(c);
            if (!tau)
                throw Error(ErrorCode::config, "evaluator " + id + " uses ratio_threshold but has no tau for " +
                                                   to_string(c));
            if (!(*tau >= 0.0 && *tau <= 1.0))
                throw Error(ErrorCode::config, "evaluator " + id + ": tau must be in [0, 1]");
        }
    }
}

void sort_records(std::vector<ResponseRecord>& records) {
    std::sort(records.begin(), records.end(), [](const ResponseRecord& a, const ResponseRecord& b) {
        return std::tie(a.evaluator_id, a.condition, a.item_id, a.option_index) <
               std::tie(b.evaluator_id, b.condition, b.item_id, b.option_index);
    });
}

json to_json(const ResponseRecord& r) {
    json j = {{"item_id", r.item_id},
              {"option_index", r.option_index},
              {"evaluator_id", r.evaluator_id},
              {"evaluator_kind", to_string(r.evaluator_kind)},
              {"condition", to_string(r.condition)}};
    j["label"] = r.label ? json(*r.label) : json(nullptr);
    j["ratio"] = r.ratio ? json(*r.ratio) : json(nullptr);
    j["raw_text"] = r.raw_text ? json(*r.raw_text) : json(nullptr);
    return j;
}

ResponseRecord record_from_json(const json& j) {
    ResponseRecord r;
    r.item_id = j.at("item_id").get<std::string>();
    r.option_index = j.at("option_index").get<int>();
    r.evaluator_id = j.at("evaluator_id").get<std::string>();
    r.evaluator_kind = j.value("evaluator_kind", std::string("llm")) == "human" ? EvaluatorKind::human
                                                                               : EvaluatorKind::llm;
    r.condition = parse_condition(j.at("condition").get<std::string>());
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) r.label = it->get<bool>();
    if (auto it = j.find("ratio"); it != j.end() && !it->is_null()) r.ratio = it->get<double>();
    if (auto it = j.find("raw_text"); it != j.end() && !it->is_null()) r.raw_text = it->get<std::string>();
    return r;
}

std::string records_to_jsonl(const std::vector<ResponseRecord>& records, const json& meta) {
    std::string out;
    if (!meta.is_null()) out += json{{"meta", meta}}.dump() + "\n";
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    return out;
}

std::vector<ResponseRecord> records_from_jsonl(std::string_view content) {
    std::vector<ResponseRecord> out;
    std::size_t start = 0, line_no = 0;
    while (start < content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string_view::npos) end = content.size();
        const auto line = content.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        try {
            const auto j = json::parse(line);
            if (j.contains("meta")) continue;
            out.push_back(record_from_json(j));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::parse,
                        "response record line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string build_response_prompt(const MCItem& item, std::size_t option_index, const TextDoc* text,
                                  Condition condition) {
    if (option_index >= item.options.size())
        throw Error(ErrorCode::invalid_argument, "option index " + std::to_string(option_index) +
                                                     " out of range for item " + item.id);
    const auto qa = "Frage: " + item.stem + "\nAntwort: " + item.options[option_index].text + "\n\n";
    if (condition == Condition::with_text) {
        if (!text)
            throw Error(ErrorCode::invalid_argument, "with_text prompt for item " + item.id + " needs its text");
        return "Text:\n" + text->joined() + "\n\n" + qa +
               "Gemäß dem Text oben, ist diese Antwort richtig (R) oder falsch (F)? "
               "Gib nur den Buchstaben R oder F an.";
    }
    return "Die folgende Frage und Antwort stammen aus einer Multiple-Choice-Verständnisaufgabe "
           "zu einem unbekannten Text.\n\n" +
           qa +
           "Ohne den Text zu kennen, nur basierend auf Allgemeinwissen, ist es plausibler, dass die "
           "Antwort richtig (R) oder falsch (F) ist? Gib nur den Buchstaben R oder F an.";
}

std::optional<bool> parse_letter_label(std::string_view raw) {
    std::size_t i = 0;
    while (i < raw.size()) {
        const auto c = static_cast<unsigned char>(raw[i]);
        const bool letter = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (!letter) {
            ++i;
            continue;
        }
        auto j = i;
        while (j < raw.size()) {
            const auto d = static_cast<unsigned char>(raw[j]);
            if (!((d >= 'a' && d <= 'z') || (d >= 'A' && d <= 'Z') || d >= 0x80)) break;
            ++j;
        }
        if (j - i == 1) {
            const char l = raw[i];
            if (l == 'R' || l == 'r') return true;
            if (l == 'F' || l == 'f') return false;
        }
        i = j;
    }
    return std::nullopt;
}

bool label_from_ratio(const LabelDistribution& dist, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::invalid_argument, "tau must be in [0, 1]");
    return dist.p_true >= tau;
}

ResponseRecord respond_option(const MCItem& item, std::size_t option_index, const TextDoc* text,
                              Condition condition, const EvaluatorProfile& evaluator, Backend& backend) {
    if (evaluator.kind != EvaluatorKind::llm)
        throw Error(ErrorCode::invalid_argument, "respond_option needs an llm evaluator");
    auto request = ChatRequest::user(build_response_prompt(item, option_index, text, condition), 0.0, 8);
    request.want_first_token_distribution = true;
    const auto completion = backend.complete(request);

    ResponseRecord r;
    r.item_id = item.id;
    r.option_index = static_cast<int>(option_index);
    r.evaluator_id = evaluator.id;
    r.evaluator_kind = EvaluatorKind::llm;
    r.condition = condition;
    r.raw_text = completion.text;

    std::optional<LabelDistribution> dist;
    if (completion.first_token_distribution) dist = label_distribution(*completion.first_token_distribution);
    if (dist) r.ratio = dist->p_true;

    if (evaluator.decision == Decision::parsed_letter) {
        r.label = parse_letter_label(completion.text);
    } else if (dist) {
        const auto tau = evaluator.tau_for(condition);
        if (!tau) throw Error(ErrorCode::config, "evaluator " + evaluator.id + " has no tau");
        r.label = label_from_ratio(*dist, *tau);
    }
    return r;
}

EvaluationRun evaluate_corpus(const Corpus& corpus, Condition condition, const EvaluatorProfile& evaluator,
                              Backend& backend, int max_parallel) {
    struct Task {
        const MCItem* item;
        std::size_t option;
        const TextDoc* text;
    };
    std::vector<Task> tasks;
    for (const auto& item : corpus.items) {
        const auto* text = corpus.find_text(item.text_id);
        for (std::size_t j = 0; j < item.options.size(); ++j)
            tasks.push_back({&item, j, condition == Condition::with_text ? text : nullptr});
    }
    EvaluationRun run;
    run.records.resize(tasks.size());
    parallel_for(tasks.size(), max_parallel, [&](std::size_t i) {
        const auto& t = tasks[i];
        run.records[i] = respond_option(*t.item, t.option, t.text, condition, evaluator, backend);
    });
    sort_records(run.records);
    run.invalid = static_cast<int>(std::count_if(run.records.begin(), run.records.end(),
                                                 [](const ResponseRecord& r) { return !r.valid(); }));
    return run;
}

json to_json(const CalibrationResult& r) {
    json grid = json::array();
    for (const auto& [tau, acc] : r.grid) grid.push_back({{"tau", tau}, {"accuracy", acc}});
    return {{"condition", to_string(r.condition)},
            {"tau", r.tau},
            {"achieved_accuracy", r.achieved_accuracy},
            {"n_records", r.n_records},
            {"grid", std::move(grid)}};
}

CalibrationResult calibration_from_json(const json& j) {
    CalibrationResult r;
    r.condition = parse_condition(j.at("condition").get<std::string>());
    r.tau = j.at("tau").get<double>();
    r.achieved_accuracy = j.value("achieved_accuracy", 0.0);
    r.n_records = j.value("n_records", std::size_t{0});
    for (const auto& g : j.value("grid", json::array()))
        r.grid.emplace_back(g.at("tau").get<double>(), g.at("accuracy").get<double>());
    return r;
}

double threshold_accuracy(const std::vector<std::pair<double, bool>>& records, double tau) {
    if (records.empty()) throw Error(ErrorCode::invalid_argument, "accuracy of empty record set");
    std::size_t correct = 0;
    for (const auto& [ratio, gold] : records)
        if ((ratio >= tau) == gold) ++correct;
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

CalibrationResult calibrate_threshold(const std::vector<std::pair<double, bool>>& records,
                                      Condition condition) {
    if (records.empty()) throw Error(ErrorCode::invalid_argument, "calibration needs at least one record");
    for (const auto& [ratio, gold] : records)
        if (!(ratio >= 0.0 && ratio <= 1.0))
            throw Error(ErrorCode::invalid_argument, "calibration ratio outside [0, 1]");

    auto sorted = records;
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    // suffix_true[i]: gold-true records among sorted[i..n); prefix_false[i]: gold-false among [0, i).
    std::vector<std::size_t> suffix_true(n + 1, 0), prefix_false(n + 1, 0);
    for (std::size_t i = n; i-- > 0;) suffix_true[i] = suffix_true[i + 1] + (sorted[i].second ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) prefix_false[i + 1] = prefix_false[i] + (sorted[i].second ? 0 : 1);

    std::vector<double> distinct;
    for (const auto& [ratio, gold] : sorted)
        if (distinct.empty() || distinct.back() != ratio) distinct.push_back(ratio);
    std::vector<double> candidates;
    for (std::size_t i = 0; i < distinct.size(); ++i) {
        candidates.push_back(distinct[i]);
        if (i + 1 < distinct.size()) candidates.push_back((distinct[i] + distinct[i + 1]) / 2.0);
    }
    // Lets every record fall below tau.
    if (distinct.back() < 1.0) candidates.push_back((distinct.back() + 1.0) / 2.0);

    CalibrationResult result;
    result.condition = condition;
    result.n_records = n;
    std::size_t best_correct = 0;
    for (const double tau : candidates) {
        // Records at or above tau are predicted true.
        const auto first = static_cast<std::size_t>(
            std::lower_bound(sorted.begin(), sorted.end(), std::make_pair(tau, false)) - sorted.begin());
        const auto correct = suffix_true[first] + prefix_false[first];
        result.grid.emplace_back(tau, static_cast<double>(correct) / static_cast<double>(n));
        if (correct >= best_correct) {
            best_correct = correct;
            result.tau = tau;
        }
    }
    result.achieved_accuracy = static_cast<double>(best_correct) / static_cast<double>(n);
    return result;
}

}  // namespace mcrc
