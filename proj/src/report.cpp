#include "mcrc/report.hpp"

#include "mcrc/error.hpp"
#include "mcrc/hashing.hpp"
#include "mcrc/io.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace mcrc {

using nlohmann::json;

namespace {

std::string num(double v, int digits = 3) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string num_or_dash(const std::optional<double>& v) { return v ? num(*v) : std::string("-"); }

std::string interval(const std::optional<Interval>& ci) {
    return ci ? "[" + num(ci->low) + ", " + num(ci->high) + "]" : std::string("[-]");
}

json interval_json(const std::optional<Interval>& ci) {
    return ci ? json::array({ci->low, ci->high}) : json(nullptr);
}

std::string pad(std::string s, std::size_t width) {
    // Pads by code points so umlauts do not shift columns.
    std::size_t len = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++len;
    if (len < width) s.append(width - len, ' ');
    return s;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string csv_num(const std::optional<double>& v) { return v ? num(*v, 6) : std::string(); }

std::uint64_t cell_seed(const BootstrapOptions& b, const std::string& key) {
    return derive_seed(b.seed, fnv1a64(key));
}

std::string provenance_line(const json& provenance) {
    std::string line = "#";
    for (const auto& [k, v] : provenance.items()) line += " " + k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
    return line;
}

}  // namespace

std::vector<Rating> ratings_from_json(const json& j) {
    std::vector<Rating> out;
    const auto& arr = j.is_object() && j.contains("ratings") ? j.at("ratings") : j;
    for (const auto& r : arr)
        out.push_back({r.at("item_id").get<std::string>(), r.at("annotator_id").get<std::string>(),
                       r.at("rating").get<int>()});
    return out;
}

json to_json(const std::vector<Rating>& ratings) {
    json arr = json::array();
    for (const auto& r : ratings)
        arr.push_back({{"item_id", r.item_id}, {"annotator_id", r.annotator_id}, {"rating", r.value}});
    return arr;
}

Report build_report(const ReportInputs& in) {
    if (!in.corpus) throw Error(ErrorCode::invalid_argument, "report needs a corpus");
    const Corpus& corpus = *in.corpus;
    const GoldIndex gold(corpus);
    for (const auto& r : in.records) gold.gold(r);  // every record must resolve

    Report report;
    const auto generators = corpus.generators();

    std::vector<std::string> evaluators;
    std::set<std::string> llm_ids;
    std::set<std::string> human_ids;
    for (const auto& r : in.records) {
        if (r.evaluator_kind == EvaluatorKind::human) human_ids.insert(r.evaluator_id);
        else llm_ids.insert(r.evaluator_id);
    }
    if (!human_ids.empty()) evaluators.push_back("human");
    evaluators.insert(evaluators.end(), llm_ids.begin(), llm_ids.end());

    json data;
    data["provenance"] = in.provenance;
    data["generators"] = json::array();
    for (const auto& g : generators) data["generators"].push_back(g.str());
    data["evaluators"] = evaluators;
    std::size_t invalid = 0;
    for (const auto& r : in.records) invalid += !r.valid();
    data["counts"] = {{"texts", corpus.texts.size()},
                      {"items", corpus.items.size()},
                      {"records", in.records.size()},
                      {"invalid_records", invalid}};

    std::ostringstream text;
    text << provenance_line(in.provenance) << "\n\n";

    // Accuracies ----------------------------------------------------------
    json accuracy = json::array();
    std::ostringstream acc_csv;
    acc_csv << provenance_line(in.provenance) << "\n";
    acc_csv << "generator,evaluator,condition,n_responses,n_correct,n_invalid,accuracy,ci_low,ci_high\n";
    text << "Response accuracy (option level, chance = 0.5), " << num(in.bootstrap.level * 100, 0)
         << "% bootstrap CI over texts\n";
    text << pad("generator", 16) << pad("evaluator", 16) << pad("condition", 14) << pad("n", 7)
         << pad("accuracy", 10) << "CI\n";
    for (const auto& g : generators) {
        for (const auto& e : evaluators) {
            for (auto c : {Condition::without_text, Condition::with_text}) {
                AccuracyFilter f{g, e, c};
                BootstrapOptions b = in.bootstrap;
                b.seed = cell_seed(in.bootstrap, "accuracy|" + g.str() + "|" + e + "|" + to_string(c));
                std::optional<AccuracySummary> s;
                try {
                    s = option_accuracy_ci(in.records, corpus, f, b);
                } catch (const Error&) {
                }
                if (!s) continue;
                accuracy.push_back({{"generator", g.str()},
                                    {"evaluator", e},
                                    {"condition", to_string(c)},
                                    {"n_responses", s->n_responses},
                                    {"n_correct", s->n_correct},
                                    {"n_invalid", s->n_invalid},
                                    {"accuracy", s->accuracy},
                                    {"ci", interval_json(s->ci)}});
                acc_csv << csv_field(g.str()) << ',' << csv_field(e) << ',' << to_string(c) << ','
                        << s->n_responses << ',' << s->n_correct << ',' << s->n_invalid << ','
                        << num(s->accuracy, 6) << ','
                        << (s->ci ? num(s->ci->low, 6) : "") << ',' << (s->ci ? num(s->ci->high, 6) : "") << "\n";
                text << pad(g.str(), 16) << pad(e, 16) << pad(to_string(c), 14)
                     << pad(std::to_string(s->n_responses), 7) << pad(num(s->accuracy), 10) << interval(s->ci)
                     << "\n";
            }
        }
    }
    data["accuracy"] = std::move(accuracy);
    report.accuracy_csv = acc_csv.str();

    // Informativity matrix --------------------------------------------------
    json informativity = json::array();
    std::ostringstream inf_csv;
    inf_csv << provenance_line(in.provenance) << "\n";
    inf_csv << "generator,evaluator,answerability,guessability,informativity,ci_low,ci_high,status\n";
    text << "\nText informativity (answerability - guessability), " << num(in.bootstrap.level * 100, 0)
         << "% bootstrap CI over texts\n";
    text << pad("generator \\ evaluator", 24);
    for (const auto& e : evaluators) text << pad(e, 24);
    text << "\n";
    for (const auto& g : generators) {
        text << pad(g.str(), 24);
        for (const auto& e : evaluators) {
            BootstrapOptions b = in.bootstrap;
            b.seed = cell_seed(in.bootstrap, "informativity|" + g.str() + "|" + e);
            std::optional<InformativityCell> cell;
            std::string reason;
            try {
                cell = informativity_cell(in.records, corpus, g, e, b);
            } catch (const Error& err) {
                reason = err.what();
            }
            if (cell) {
                informativity.push_back({{"generator", g.str()},
                                         {"evaluator", e},
                                         {"answerability", cell->answerability},
                                         {"guessability", cell->guessability},
                                         {"informativity", cell->informativity},
                                         {"ci", interval_json(cell->ci)},
                                         {"status", "ok"}});
                inf_csv << csv_field(g.str()) << ',' << csv_field(e) << ',' << num(cell->answerability, 6) << ','
                        << num(cell->guessability, 6) << ',' << num(cell->informativity, 6) << ','
                        << (cell->ci ? num(cell->ci->low, 6) : "") << ','
                        << (cell->ci ? num(cell->ci->high, 6) : "") << ",ok\n";
                text << pad(num(cell->informativity) + " " + interval(cell->ci), 24);
            } else {
                report.warnings.push_back("informativity " + g.str() + " x " + e + " absent: " + reason);
                informativity.push_back({{"generator", g.str()},
                                         {"evaluator", e},
                                         {"status", "absent"},
                                         {"reason", reason}});
                inf_csv << csv_field(g.str()) << ',' << csv_field(e) << ",,,,,,absent\n";
                text << pad("absent", 24);
            }
        }
        text << "\n";
    }
    data["informativity"] = std::move(informativity);
    report.informativity_csv = inf_csv.str();

    // Agreement -------------------------------------------------------------
    const std::vector<std::string> humans(human_ids.begin(), human_ids.end());
    const std::vector<std::string> others(llm_ids.begin(), llm_ids.end());
    if (humans.size() >= 2) {
        json agreement = {{"humans", humans}, {"others", others}};
        std::map<Condition, AgreementMatrix> matrices;
        for (auto c : {Condition::without_text, Condition::with_text}) {
            auto m = agreement_matrix(in.records, humans, others, c);
            json pairwise = json::array();
            for (std::size_t i = 0; i < m.evaluators.size(); ++i)
                for (std::size_t j = i + 1; j < m.evaluators.size(); ++j)
                    pairwise.push_back({{"a", m.evaluators[i]},
                                        {"b", m.evaluators[j]},
                                        {"kappa", m.kappa[i][j] ? json(*m.kappa[i][j]) : json(nullptr)}});
            json means = json::object();
            for (const auto& [id, v] : m.mean_with_humans) means[id] = v ? json(*v) : json(nullptr);
            agreement[to_string(c)] = {{"mean_with_humans", means},
                                       {"human_average", m.human_average ? json(*m.human_average) : json(nullptr)},
                                       {"pairwise", pairwise}};
            matrices.emplace(c, std::move(m));
        }
        data["agreement"] = std::move(agreement);

        text << "\nMean Cohen's kappa with (other) humans\n";
        text << pad("evaluator", 24) << pad("without_text", 16) << "with_text\n";
        const auto& wo = matrices.at(Condition::without_text);
        const auto& wi = matrices.at(Condition::with_text);
        for (const auto& h : humans)
            text << pad(h, 24) << pad(num_or_dash(wo.mean_with_humans.at(h)), 16)
                 << num_or_dash(wi.mean_with_humans.at(h)) << "\n";
        text << pad("humans (average)", 24) << pad(num_or_dash(wo.human_average), 16)
             << num_or_dash(wi.human_average) << "\n";
        for (const auto& o : others)
            text << pad(o, 24) << pad(num_or_dash(wo.mean_with_humans.at(o)), 16)
                 << num_or_dash(wi.mean_with_humans.at(o)) << "\n";
    } else {
        data["agreement"] = nullptr;
    }

    // Ratings ---------------------------------------------------------------
    json ratings = json::array();
    std::ostringstream rat_csv;
    rat_csv << provenance_line(in.provenance) << "\n";
    rat_csv << "generator,rating_1,rating_2,rating_3,rating_4,rating_5,n,mean\n";
    json rating_accuracy = json::array();
    std::ostringstream ra_csv;
    ra_csv << provenance_line(in.provenance) << "\n";
    ra_csv << "rating,condition,n_responses,accuracy,ci_low,ci_high\n";
    if (!in.ratings.empty()) {
        text << "\nQuality ratings (1 = unusable, 5 = perfect)\n";
        text << pad("generator", 16);
        for (int v = 1; v <= 5; ++v) text << pad(std::to_string(v), 6);
        text << pad("n", 6) << "mean\n";
        for (const auto& g : generators) {
            const auto s = rating_summary(in.ratings, corpus, g);
            ratings.push_back({{"generator", g.str()},
                               {"counts", s.counts},
                               {"n", s.n},
                               {"mean", s.mean ? json(*s.mean) : json(nullptr)}});
            rat_csv << csv_field(g.str());
            text << pad(g.str(), 16);
            for (auto c : s.counts) {
                rat_csv << ',' << c;
                text << pad(std::to_string(c), 6);
            }
            rat_csv << ',' << s.n << ',' << csv_num(s.mean) << "\n";
            text << pad(std::to_string(s.n), 6) << num_or_dash(s.mean) << "\n";
        }

        std::vector<ResponseRecord> human_records;
        for (const auto& r : in.records)
            if (r.evaluator_kind == EvaluatorKind::human) human_records.push_back(r);
        BootstrapOptions b = in.bootstrap;
        b.seed = cell_seed(in.bootstrap, "rating_accuracy");
        const auto by_rating = accuracy_by_rating(human_records, in.ratings, corpus, b);
        text << "\nHuman response accuracy by item rating\n";
        text << pad("rating", 8) << pad("condition", 14) << pad("n", 7) << pad("accuracy", 10) << "CI\n";
        for (const auto& ra : by_rating) {
            for (const auto* s : {&ra.without_text, &ra.with_text}) {
                if (!*s) continue;
                const auto& acc = **s;
                const auto* cond = to_string(*acc.condition);
                rating_accuracy.push_back({{"rating", ra.rating},
                                           {"condition", cond},
                                           {"n_responses", acc.n_responses},
                                           {"accuracy", acc.accuracy},
                                           {"ci", interval_json(acc.ci)}});
                ra_csv << ra.rating << ',' << cond << ',' << acc.n_responses << ',' << num(acc.accuracy, 6) << ','
                       << (acc.ci ? num(acc.ci->low, 6) : "") << ',' << (acc.ci ? num(acc.ci->high, 6) : "")
                       << "\n";
                text << pad(std::to_string(ra.rating), 8) << pad(cond, 14)
                     << pad(std::to_string(acc.n_responses), 7) << pad(num(acc.accuracy), 10) << interval(acc.ci)
                     << "\n";
            }
        }
    }
    data["ratings"] = std::move(ratings);
    data["rating_accuracy"] = std::move(rating_accuracy);
    report.ratings_csv = rat_csv.str();
    report.rating_accuracy_csv = ra_csv.str();

    data["warnings"] = report.warnings;
    if (!report.warnings.empty()) {
        text << "\nWarnings (" << report.warnings.size() << ")\n";
        for (const auto& w : report.warnings) text << "- " << w << "\n";
    }
    report.data = std::move(data);
    report.text = text.str();
    return report;
}

std::vector<std::filesystem::path> write_report(const Report& report, const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> written;
    auto put = [&](const char* name, const std::string& content) {
        const auto path = dir / name;
        write_file_atomic(path, content);
        written.push_back(path);
    };
    put("report.json", report.data.dump(2) + "\n");
    put("report.txt", report.text);
    put("accuracy.csv", report.accuracy_csv);
    put("informativity.csv", report.informativity_csv);
    put("ratings.csv", report.ratings_csv);
    put("rating_accuracy.csv", report.rating_accuracy_csv);
    return written;
}

}  // namespace mcrc
