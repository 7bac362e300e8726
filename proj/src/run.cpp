#include "mcrc/run.hpp"

#include "mcrc/corpus.hpp"
#include "mcrc/error.hpp"
#include "mcrc/hashing.hpp"
#include "mcrc/io.hpp"
#include "mcrc/parallel.hpp"
#include "mcrc/report.hpp"

#include <algorithm>
#include <csignal>
#include <cstdlib>
#include <map>
#include <mutex>
#include <ostream>
#include <regex>
#include <set>

namespace mcrc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "mcrc 0.1.0";

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::config, std::string("config key '") + key + "' has the wrong type");
    }
}

Decision parse_decision(const std::string& s) {
    if (s == "parsed_letter") return Decision::parsed_letter;
    if (s == "ratio_threshold") return Decision::ratio_threshold;
    throw Error(ErrorCode::config, "unknown decision '" + s + "'");
}

std::string rel(const RunConfig& c, const fs::path& p) { return fs::relative(p, c.run_dir).generic_string(); }

// Records every output of a stage with its content hash.
void update_manifest(const RunConfig& c, const std::string& stage, const std::vector<fs::path>& outputs) {
    const auto path = c.run_dir / "manifest.json";
    json manifest = json::object();
    if (fs::exists(path)) {
        try {
            manifest = json::parse(read_file(path));
        } catch (const json::exception&) {
            manifest = json::object();
        }
    }
    manifest["tool"] = kToolVersion;
    manifest["config_hash"] = c.config_hash;
    manifest["seed"] = c.seed;
    json files = json::array();
    for (const auto& p : outputs) files.push_back({{"path", rel(c, p)}, {"fnv1a64", to_hex(fnv1a64(read_file(p)))}});
    manifest["stages"][stage] = {{"outputs", files}};
    write_file_atomic(path, manifest.dump(2) + "\n");
}

Corpus load_working_corpus(const RunConfig& c) {
    const auto path = working_corpus_path(c);
    if (!fs::exists(path)) throw Error(ErrorCode::config, "corpus not found: " + path.string());
    return load_corpus(path);
}

void write_corpus(const Corpus& corpus, const json& provenance, const fs::path& path) {
    auto doc = to_json(corpus);
    doc["provenance"] = provenance;
    write_file_atomic(path, doc.dump(2) + "\n");
}

std::string responses_name(const std::string& evaluator, Condition c) {
    return evaluator + "." + to_string(c) + ".jsonl";
}

std::optional<CalibrationResult> stored_tau(const RunConfig& c, const std::string& evaluator, Condition cond) {
    const auto path = c.run_dir / "calibration" / (evaluator + ".json");
    if (!fs::exists(path)) return std::nullopt;
    const auto doc = json::parse(read_file(path));
    if (!doc.contains(to_string(cond))) return std::nullopt;
    return calibration_from_json(doc.at(to_string(cond)));
}

}  // namespace

json RunConfig::provenance() const {
    return {{"tool", kToolVersion}, {"config_hash", config_hash}, {"seed", seed}};
}

json interpolate_env(const json& j) {
    static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        std::string out;
        auto begin = std::sregex_iterator(s.begin(), s.end(), var);
        std::size_t last = 0;
        for (auto it = begin; it != std::sregex_iterator(); ++it) {
            const auto& m = *it;
            out.append(s, last, static_cast<std::size_t>(m.position()) - last);
            const char* value = std::getenv(m[1].str().c_str());
            if (!value) throw Error(ErrorCode::config, "environment variable " + m[1].str() + " is not set");
            out += value;
            last = static_cast<std::size_t>(m.position() + m.length());
        }
        out.append(s, last);
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& v : j) out.push_back(interpolate_env(v));
        return out;
    }
    if (j.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : j.items()) out[k] = interpolate_env(v);
        return out;
    }
    return j;
}

RunConfig parse_run_config(const json& raw, const fs::path& base_dir) {
    if (!raw.is_object()) throw Error(ErrorCode::config, "config must be a JSON object");
    RunConfig c;
    c.base_dir = base_dir;
    c.raw = raw;
    c.config_hash = to_hex(fnv1a64(raw.dump()));
    const json j = interpolate_env(raw);

    try {
        c.seed = get_or<std::uint64_t>(j, "seed", 0);
        if (!j.contains("corpus")) throw Error(ErrorCode::config, "config needs 'corpus'");
        c.corpus = resolve(base_dir, j.at("corpus").get<std::string>());
        c.run_dir = resolve(base_dir, get_or<std::string>(j, "run_dir", "run"));
        c.max_parallel = get_or(j, "max_parallel", 1);
        if (c.max_parallel < 1) throw Error(ErrorCode::config, "max_parallel must be >= 1");

        if (j.contains("bootstrap")) {
            const auto& b = j["bootstrap"];
            c.bootstrap.level = get_or(b, "level", c.bootstrap.level);
            c.bootstrap.n_resamples = get_or(b, "n_resamples", c.bootstrap.n_resamples);
        }
        c.bootstrap.seed = derive_seed(c.seed, fnv1a64("bootstrap"));

        if (j.contains("generation")) {
            const auto& g = j["generation"];
            if (g.contains("policy")) c.policy = generation_policy_from_json(g["policy"]);
            for (const auto& spec : g.value("generators", json::array())) {
                GeneratorSpec gs;
                gs.name = spec.at("name").get<std::string>();
                Generator::llm(gs.name);  // validates the name
                gs.backend = backend_config_from_json(spec.at("backend"), base_dir);
                c.generators.push_back(std::move(gs));
            }
        }
        c.policy.validate();

        std::set<std::string> ids;
        for (const auto& e : j.value("evaluators", json::array())) {
            EvaluatorProfile p;
            p.id = e.at("id").get<std::string>();
            if (p.id == "human") throw Error(ErrorCode::config, "evaluator id 'human' is reserved");
            if (!ids.insert(p.id).second) throw Error(ErrorCode::config, "duplicate evaluator id " + p.id);
            p.backend = backend_config_from_json(e.at("backend"), base_dir);
            p.decision = parse_decision(get_or<std::string>(e, "decision", "parsed_letter"));
            if (e.contains("tau_with_text")) p.tau_with_text = e["tau_with_text"].get<double>();
            if (e.contains("tau_without_text")) p.tau_without_text = e["tau_without_text"].get<double>();
            c.evaluators.push_back(std::move(p));
        }

        if (j.contains("calibration")) {
            CalibrationSpec cs;
            cs.corpus = resolve(base_dir, j["calibration"].at("corpus").get<std::string>());
            cs.evaluators = get_or(j["calibration"], "evaluators", std::vector<std::string>{});
            c.calibration = std::move(cs);
        }

        if (j.contains("annotation")) {
            const auto& a = j["annotation"];
            ServiceConfig sc;
            sc.annotators = a.at("annotators").get<std::vector<std::string>>();
            sc.seed = get_or<std::uint64_t>(a, "seed", derive_seed(c.seed, fnv1a64("annotation")));
            for (const auto& g : get_or(a, "generators", std::vector<std::string>{}))
                sc.generators.push_back(Generator::parse(g));
            sc.store_dir = resolve(base_dir, get_or<std::string>(a, "store_dir", "annotation_store"));
            sc.snapshot_every = get_or<std::size_t>(a, "snapshot_every", sc.snapshot_every);
            sc.cors_origin = get_or(a, "cors_origin", sc.cors_origin);
            if (a.contains("admin_token")) sc.admin_token = a["admin_token"].get<std::string>();
            c.serve_host = get_or(a, "host", c.serve_host);
            c.serve_port = get_or(a, "port", c.serve_port);
            c.annotation = std::move(sc);
        }

        if (j.contains("report")) {
            const auto& r = j["report"];
            for (const auto& p : get_or(r, "human_responses", std::vector<std::string>{}))
                c.human_responses.push_back(resolve(base_dir, p));
            for (const auto& p : get_or(r, "ratings", std::vector<std::string>{}))
                c.ratings.push_back(resolve(base_dir, p));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, std::string("invalid config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::config, "config file not found: " + path.string());
    json raw;
    try {
        raw = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, "config is not valid JSON: " + std::string(e.what()));
    }
    return parse_run_config(raw, path.parent_path());
}

fs::path working_corpus_path(const RunConfig& config) {
    const auto generated = config.run_dir / "corpus.json";
    return fs::exists(generated) ? generated : config.corpus;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::config:
        case ErrorCode::usage: return 2;
        default: return 1;
    }
}

int cmd_generate(const RunConfig& c, std::ostream& log) {
    if (!fs::exists(c.corpus)) throw Error(ErrorCode::usage, "corpus not found: " + c.corpus.string());
    if (c.generators.empty()) throw Error(ErrorCode::config, "config lists no generators");
    Corpus corpus = load_corpus(c.corpus);

    json diagnostics = json::object();
    diagnostics["provenance"] = c.provenance();
    bool exhausted = false;
    for (const auto& spec : c.generators) {
        const auto generator = Generator::llm(spec.name);
        auto backend = make_backend(spec.backend);
        std::erase_if(corpus.items, [&](const MCItem& i) { return i.generator == generator; });

        std::vector<std::optional<GenerationResult>> results(corpus.texts.size());
        std::vector<json> failures(corpus.texts.size());
        parallel_for(corpus.texts.size(), c.max_parallel, [&](std::size_t t) {
            try {
                results[t] = generate_items(corpus.texts[t], *backend, c.policy, generator);
            } catch (const GenerationExhausted& e) {
                auto d = diagnostics_to_json(e.best());
                d["error"] = {{"code", to_string(e.code())}, {"message", e.what()}};
                failures[t] = std::move(d);
            } catch (const GenerationParseError& e) {
                failures[t] = {{"error", {{"code", to_string(e.code())}, {"message", e.what()}}},
                               {"raw_output", e.raw()}};
            }
        });

        json per_text = json::object();
        for (std::size_t t = 0; t < corpus.texts.size(); ++t) {
            const auto& tid = corpus.texts[t].id;
            if (results[t]) {
                per_text[tid] = diagnostics_to_json(*results[t]);
                for (auto& item : results[t]->items) corpus.items.push_back(std::move(item));
            } else {
                per_text[tid] = failures[t];
                exhausted = true;
                log << "generate: " << generator.str() << " failed on " << tid << ": "
                    << failures[t]["error"]["message"].get<std::string>() << "\n";
            }
        }
        diagnostics["generators"][generator.str()] = std::move(per_text);
    }

    const auto corpus_path = c.run_dir / "corpus.json";
    const auto diag_path = c.run_dir / "generation_diagnostics.json";
    write_corpus(corpus, c.provenance(), corpus_path);
    write_file_atomic(diag_path, diagnostics.dump(2) + "\n");
    update_manifest(c, "generate", {corpus_path, diag_path});
    log << "generate: " << corpus.items.size() << " items written to " << corpus_path.string() << "\n";
    return exhausted ? 1 : 0;
}

int cmd_calibrate(const RunConfig& c, std::ostream& log) {
    if (!c.calibration) throw Error(ErrorCode::config, "config has no calibration section");
    if (!fs::exists(c.calibration->corpus))
        throw Error(ErrorCode::config, "calibration corpus not found: " + c.calibration->corpus.string());
    const Corpus calib = load_corpus(c.calibration->corpus);
    if (calib.split != Split::calibration)
        throw Error(ErrorCode::config, "calibration corpus must have split 'calibration'");
    const Corpus test = load_working_corpus(c);
    std::vector<std::string> overlap;
    for (const auto& t : calib.texts)
        if (test.find_text(t.id)) overlap.push_back(t.id);
    if (!overlap.empty()) {
        std::string msg = "calibration texts overlap the test corpus:";
        for (const auto& id : overlap) msg += " " + id;
        throw Error(ErrorCode::config, msg);
    }
    const GoldIndex gold(calib);

    std::vector<fs::path> outputs;
    int calibrated = 0;
    for (const auto& profile : c.evaluators) {
        const auto& wanted = c.calibration->evaluators;
        if (wanted.empty() ? profile.decision != Decision::ratio_threshold
                           : std::find(wanted.begin(), wanted.end(), profile.id) == wanted.end())
            continue;
        auto backend = make_backend(*profile.backend);
        // The decision rule does not matter here; only the recorded ratios are used.
        auto raw_profile = profile;
        raw_profile.decision = Decision::parsed_letter;

        json doc = {{"provenance", c.provenance()}, {"evaluator", profile.id}};
        for (auto cond : {Condition::with_text, Condition::without_text}) {
            auto run = evaluate_corpus(calib, cond, raw_profile, *backend, c.max_parallel);
            std::vector<std::pair<double, bool>> pairs;
            for (const auto& r : run.records)
                if (r.ratio) pairs.emplace_back(*r.ratio, gold.gold(r));
            if (pairs.empty())
                throw Error(ErrorCode::validation, "no calibration records with label distributions for " +
                                                       profile.id + " (" + to_string(cond) + ")");
            const auto result = calibrate_threshold(pairs, cond);
            doc[to_string(cond)] = to_json(result);
            const auto rec_path = c.run_dir / "calibration" / responses_name(profile.id, cond);
            write_file_atomic(rec_path, records_to_jsonl(run.records, c.provenance()));
            outputs.push_back(rec_path);
            log << "calibrate: " << profile.id << " " << to_string(cond) << " tau=" << result.tau
                << " accuracy=" << result.achieved_accuracy << " n=" << result.n_records << "\n";
        }
        const auto path = c.run_dir / "calibration" / (profile.id + ".json");
        write_file_atomic(path, doc.dump(2) + "\n");
        outputs.push_back(path);
        ++calibrated;
    }
    if (calibrated == 0) throw Error(ErrorCode::config, "no evaluator selected for calibration");
    std::sort(outputs.begin(), outputs.end());
    update_manifest(c, "calibrate", outputs);
    return 0;
}

int cmd_evaluate(const RunConfig& c, std::ostream& log) {
    if (c.evaluators.empty()) throw Error(ErrorCode::config, "config lists no evaluators");
    const Corpus corpus = load_working_corpus(c);
    std::vector<fs::path> outputs;
    for (auto profile : c.evaluators) {
        if (profile.decision == Decision::ratio_threshold) {
            for (auto cond : {Condition::with_text, Condition::without_text}) {
                auto& tau = cond == Condition::with_text ? profile.tau_with_text : profile.tau_without_text;
                if (!tau)
                    if (auto stored = stored_tau(c, profile.id, cond)) tau = stored->tau;
            }
        }
        profile.validate();
        auto backend = make_backend(*profile.backend);
        for (auto cond : {Condition::without_text, Condition::with_text}) {
            auto run = evaluate_corpus(corpus, cond, profile, *backend, c.max_parallel);
            json meta = c.provenance();
            meta["evaluator"] = profile.id;
            meta["condition"] = to_string(cond);
            meta["decision"] = to_string(profile.decision);
            if (auto tau = profile.tau_for(cond)) meta["tau"] = *tau;
            const auto path = c.run_dir / "responses" / responses_name(profile.id, cond);
            write_file_atomic(path, records_to_jsonl(run.records, meta));
            outputs.push_back(path);
            log << "evaluate: " << profile.id << " " << to_string(cond) << " " << run.records.size()
                << " records, " << run.invalid << " invalid\n";
        }
    }
    update_manifest(c, "evaluate", outputs);
    return 0;
}

int cmd_report(const RunConfig& c, std::ostream& log) {
    const Corpus corpus = load_working_corpus(c);
    ReportInputs in;
    in.corpus = &corpus;
    in.bootstrap = c.bootstrap;
    in.provenance = c.provenance();
    in.provenance["bootstrap_seed"] = c.bootstrap.seed;

    std::vector<fs::path> files = c.human_responses;
    const auto responses_dir = c.run_dir / "responses";
    if (fs::exists(responses_dir)) {
        std::vector<fs::path> found;
        for (const auto& entry : fs::directory_iterator(responses_dir))
            if (entry.path().extension() == ".jsonl") found.push_back(entry.path());
        std::sort(found.begin(), found.end());
        files.insert(files.end(), found.begin(), found.end());
    }
    for (const auto& f : files) {
        auto recs = records_from_jsonl(read_file(f));
        in.records.insert(in.records.end(), recs.begin(), recs.end());
    }
    if (in.records.empty()) throw Error(ErrorCode::config, "no response records to report on");

    auto rating_files = c.ratings;
    if (fs::exists(c.run_dir / "ratings.json")) rating_files.push_back(c.run_dir / "ratings.json");
    for (const auto& f : rating_files) {
        auto r = ratings_from_json(json::parse(read_file(f)));
        in.ratings.insert(in.ratings.end(), r.begin(), r.end());
    }

    const auto report = build_report(in);
    const auto written = write_report(report, c.run_dir / "report");
    update_manifest(c, "report", written);
    log << "report: " << in.records.size() << " records, " << report.warnings.size() << " warning(s)\n";
    for (const auto& w : report.warnings) log << "warning: " << w << "\n";
    return 0;
}

int cmd_export(const RunConfig& c, std::ostream& log) {
    if (!c.annotation) throw Error(ErrorCode::config, "config has no annotation section");
    AnnotationService service(load_working_corpus(c), *c.annotation);
    const auto exported = service.export_records();
    std::vector<fs::path> outputs;
    for (auto cond : {Condition::without_text, Condition::with_text}) {
        std::vector<ResponseRecord> part;
        for (const auto& r : exported.records)
            if (r.condition == cond) part.push_back(r);
        json meta = c.provenance();
        meta["evaluator"] = "human";
        meta["condition"] = to_string(cond);
        const auto path = c.run_dir / "responses" / responses_name("human", cond);
        write_file_atomic(path, records_to_jsonl(part, meta));
        outputs.push_back(path);
    }
    const auto ratings_path = c.run_dir / "ratings.json";
    write_file_atomic(ratings_path,
                      json{{"provenance", c.provenance()}, {"ratings", to_json(exported.ratings)}}.dump(2) + "\n");
    outputs.push_back(ratings_path);
    update_manifest(c, "export", outputs);
    log << "export: " << exported.records.size() << " records, " << exported.ratings.size() << " ratings\n";
    return 0;
}

namespace {
AnnotationServer* g_server = nullptr;
extern "C" void stop_server(int) {
    if (g_server) g_server->stop();
}
}  // namespace

int cmd_serve(const RunConfig& c, std::ostream& log) {
    if (!c.annotation) throw Error(ErrorCode::config, "config has no annotation section");
    AnnotationService service(load_working_corpus(c), *c.annotation);
    AnnotationServer server(service);
    const int port = server.bind(c.serve_host, c.serve_port);
    log << "serve: listening on http://" << c.serve_host << ":" << port << std::endl;
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    server.listen();
    g_server = nullptr;
    service.snapshot();
    return 0;
}

}  // namespace mcrc
