// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Time limits and tolerances are fixed here.

#include "mcrc/annotation.hpp"
#include "mcrc/evaluation.hpp"
#include "mcrc/generation.hpp"
#include "mcrc/io.hpp"
#include "mcrc/metrics.hpp"
#include "mcrc/run.hpp"

#include "annotation_sim.hpp"
#include "http_harness.hpp"
#include "test_util.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

using namespace mcrc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

Outcome pass(std::string detail) { return {true, std::move(detail)}; }
Outcome fail(std::string detail) { return {false, std::move(detail)}; }

const std::vector<Generator> kGens{Generator::human(), Generator::llm("a"), Generator::llm("b")};

// ---------------------------------------------------------------------------

Outcome metric_identity() {
    std::mt19937_64 rng(101);
    for (int run = 0; run < 100; ++run) {
        const auto n_texts = 2 + rng() % 6;
        const auto corpus = mcrc::testing::synthetic_corpus(n_texts, kGens);
        std::vector<ResponseRecord> records;
        const double p_with = std::uniform_real_distribution<double>(0, 1)(rng);
        const double p_without = std::uniform_real_distribution<double>(0, 1)(rng);
        for (const auto& item : corpus.items)
            for (int j = 0; j < 3; ++j)
                for (auto c : {Condition::with_text, Condition::without_text}) {
                    ResponseRecord r;
                    r.item_id = item.id;
                    r.option_index = j;
                    r.evaluator_id = "m";
                    r.condition = c;
                    const double p = c == Condition::with_text ? p_with : p_without;
                    if (rng() % 20 != 0)
                        r.label = std::uniform_real_distribution<double>(0, 1)(rng) < p;
                    records.push_back(r);
                }
        BootstrapOptions b;
        b.seed = rng();
        for (const auto& g : kGens) {
            InformativityCell cell;
            try {
                cell = informativity_cell(records, corpus, g, "m", b);
            } catch (const Error&) {
                continue;  // a condition with no valid response has no cell
            }
            const auto ans = option_accuracy(records, corpus, {g, std::string("m"), Condition::with_text});
            const auto guess = option_accuracy(records, corpus, {g, std::string("m"), Condition::without_text});
            if (cell.answerability != ans.accuracy || cell.guessability != guess.accuracy)
                return fail("component mismatch in run " + std::to_string(run));
            if (cell.informativity != ans.accuracy - guess.accuracy)
                return fail("informativity != answerability - guessability in run " + std::to_string(run));
            if (cell.informativity < -1.0 || cell.informativity > 1.0)
                return fail("informativity outside [-1, 1] in run " + std::to_string(run));
        }
    }
    return pass("100 runs");
}

Outcome kappa_oracle() {
    std::size_t pairs = 0;
    for (int n = 1; n <= 8; ++n)
        for (unsigned x = 0; x < (1u << n); ++x)
            for (unsigned y = 0; y < (1u << n); ++y) {
                std::vector<bool> a(n), b(n);
                double agree = 0, pa = 0, pb = 0;
                for (int i = 0; i < n; ++i) {
                    a[i] = (x >> i) & 1u;
                    b[i] = (y >> i) & 1u;
                    agree += a[i] == b[i];
                    pa += a[i];
                    pb += b[i];
                }
                const double po = agree / n;
                const double pe = (pa / n) * (pb / n) + (1 - pa / n) * (1 - pb / n);
                const double k = cohens_kappa(a, b);
                if (k != cohens_kappa(b, a)) return fail("asymmetric at n=" + std::to_string(n));
                if (x == y && k != 1.0) return fail("perfect agreement is not 1 at n=" + std::to_string(n));
                if (pe == 1.0) {
                    if (k != 1.0) return fail("degenerate case is not 1");
                } else if (std::fabs(k - (po - pe) / (1 - pe)) > 1e-12) {
                    return fail("oracle mismatch at n=" + std::to_string(n));
                }
                ++pairs;
            }
    return pass(std::to_string(pairs) + " pairs");
}

Outcome threshold_rule() {
    const double tau = 0.9952;
    const bool at = label_from_ratio({0.9952, 1 - 0.9952}, tau);
    const bool below = label_from_ratio({0.9951, 1 - 0.9951}, tau);
    const bool at_without = label_from_ratio({0.9849, 1 - 0.9849}, 0.9849);
    if (!at || below || !at_without) return fail("inclusive threshold rule violated");
    return pass("0.9952 positive, 0.9951 negative");
}

Outcome calibration_optimality() {
    std::mt19937_64 rng(202);
    for (int set = 0; set < 50; ++set) {
        const auto n = 1 + rng() % 200;
        std::vector<std::pair<double, bool>> records;
        for (std::size_t i = 0; i < n; ++i) {
            const bool gold = rng() % 2 == 0;
            // Coarse ratios force ties.
            double r = std::round(std::uniform_real_distribution<double>(gold ? 0.3 : 0.0, 1.0)(rng) * 50) / 50;
            records.emplace_back(r, gold);
        }
        const auto result = calibrate_threshold(records, Condition::with_text);
        const double got = threshold_accuracy(records, result.tau);
        // Every observed ratio, every step of a fine grid, and a threshold above all ratios.
        std::vector<double> grid;
        for (const auto& [r, g] : records) grid.push_back(r);
        for (int i = 0; i <= 1000; ++i) grid.push_back(i / 1000.0);
        grid.push_back(std::nextafter(1.0, 2.0));
        for (const double t : grid)
            if (threshold_accuracy(records, t) > got)
                return fail("set " + std::to_string(set) + ": tau " + std::to_string(t) + " beats returned " +
                            std::to_string(result.tau));
    }
    return pass("50 sets");
}

Outcome bootstrap_coverage() {
    auto run = [](std::uint64_t seed, std::string* trace) {
        int covered = 0;
        std::mt19937_64 draws(seed);
        for (int trial = 0; trial < 1000; ++trial) {
            std::vector<int> groups(50);
            for (auto& g : groups) g = std::uniform_real_distribution<double>(0, 1)(draws) < 0.7 ? 1 : 0;
            BootstrapOptions b;
            b.seed = derive_seed(seed, static_cast<std::uint64_t>(trial));
            const auto ci = bootstrap_ci(
                groups,
                [](const std::vector<const int*>& s) {
                    double t = 0;
                    for (const auto* v : s) t += *v;
                    return t / static_cast<double>(s.size());
                },
                b);
            covered += ci.low <= 0.7 && 0.7 <= ci.high;
            if (trace) {
                char line[64];
                std::snprintf(line, sizeof line, "%a %a\n", ci.low, ci.high);
                *trace += line;
            }
        }
        return covered;
    };
    std::string first, second;
    const int covered = run(303, &first);
    run(303, &second);
    char detail[96];
    std::snprintf(detail, sizeof detail, "coverage %.1f%%", covered / 10.0);
    if (first != second) return fail("intervals differ between runs with the same seed");
    if (covered < 920 || covered > 980) return fail(detail);
    return pass(detail);
}

Outcome generation() {
    const auto corpus = load_corpus(mcrc::testing::data_path("fixtures/yemen_corpus.json"));
    const auto& text = corpus.texts[0];
    const auto gpt4 = mcrc::testing::read_data("fixtures/yemen_gpt4.txt");
    GenerationPolicy policy;
    const auto gen = Generator::llm("gpt-4");

    const auto parsed = parse_generated_items(gpt4, policy, text.id, gen);
    const std::vector<std::vector<bool>> want{{true, false, false}, {true, true, false}, {false, true, false}};
    if (parsed.items.size() != 3) return fail("fixture parsed to " + std::to_string(parsed.items.size()) + " items");
    for (std::size_t i = 0; i < 3; ++i)
        if (parsed.items[i].gold_vector() != want[i]) return fail("gold vector mismatch on item " + std::to_string(i + 1));

    const auto extra = gpt4 + "\n4. Noch eine Frage?\na) Ja. (richtig)\nb) Nein. (falsch)\nc) Vielleicht. (falsch)\n";
    const auto four = parse_generated_items(extra, policy, text.id, gen);
    if (four.items.size() != 3 || four.diagnostics.truncated_extra_items != 1 ||
        four.items[2].stem != parsed.items[2].stem)
        return fail("fourth item was not truncated");

    const std::string english =
        "1. What happened?\na) A war. (correct)\nb) A storm. (incorrect)\nc) A festival. (incorrect)\n"
        "2. Who speaks?\na) A coach. (correct)\nb) A singer. (incorrect)\nc) A pilot. (incorrect)\n"
        "3. Where?\na) In Yemen. (correct)\nb) In Peru. (incorrect)\nc) In Chile. (incorrect)\n";
    ScriptRule rule;
    rule.contains = "Text:\n";
    rule.sequence = {{english, std::nullopt}, {gpt4, std::nullopt}};
    ScriptedBackend retrying("gpt-4", {rule});
    const auto result = generate_items(text, retrying, policy, gen);
    if (result.attempts != 2) return fail("English then German took " + std::to_string(result.attempts) + " attempts");

    rule.sequence = {{english, std::nullopt}};
    ScriptedBackend always_english("gpt-4", {rule});
    policy.max_retries = 2;
    try {
        generate_items(text, always_english, policy, gen);
        return fail("always-English output did not exhaust");
    } catch (const GenerationExhausted& e) {
        if (e.best().attempts != 3) return fail("exhaustion after " + std::to_string(e.best().attempts) + " attempts");
    }
    return pass("vectors, truncation, retry 2, exhaustion 3");
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
    return out;
}

Outcome golden_e2e() {
    mcrc::testing::TempDir dir;
    auto config = load_run_config(mcrc::testing::data_path("golden/run.json"));
    config.run_dir = dir.path();
    for (const auto& g : config.generators)
        if (g.backend.kind != BackendKind::scripted) return fail("golden config uses a network backend");
    for (const auto& e : config.evaluators)
        if (!e.backend || e.backend->kind != BackendKind::scripted) return fail("golden config uses a network backend");
    std::ostringstream log;
    for (auto* cmd : {&cmd_generate, &cmd_calibrate, &cmd_evaluate, &cmd_report})
        if (const int rc = (*cmd)(config, log); rc != 0) return fail("stage failed: " + log.str());

    const auto produced = read_tree(dir / "report");
    const auto expected = read_tree(mcrc::testing::data_path("golden/expected_report"));
    if (produced != expected) {
        for (const auto& [name, content] : expected)
            if (!produced.count(name) || produced.at(name) != content) return fail(name + " differs from golden");
        return fail("report file set differs from golden");
    }
    const auto report = json::parse(produced.at("report.json"));
    std::size_t ok = 0;
    for (const auto& cell : report["informativity"]) ok += cell["status"] == "ok";
    if (report["generators"].size() != 3 || report["evaluators"].size() != 3 || ok != 9)
        return fail("informativity matrix is not 3x3");
    return pass("byte-identical, 3x3 matrix");
}

Outcome protocol() {
    const std::size_t T = 4;
    const auto corpus = mcrc::testing::synthetic_corpus(T, kGens);
    ServiceConfig cfg;
    cfg.annotators = {"h1", "h2", "h3"};
    cfg.seed = 404;
    AnnotationService svc(corpus, cfg);
    mcrc::testing::RunningServer server(svc);
    mcrc::testing::ApiClient api(server.port());

    const auto created = api.post("/api/sessions", {{"annotator_id", "h1"}});
    if (created.status != 201) return fail("session not created");
    const httplib::Headers auth{{"X-Session-Token", created.body["token"].get<std::string>()}};
    const auto base = "/api/sessions/" + created.body["session_id"].get<std::string>();
    mcrc::testing::SimulatedAnnotator sim(corpus, mcrc::testing::layout_for(svc, "h1"), 0.8, 9);
    for (const auto& t : created.body["texts"]) {
        const auto path = base + "/texts/" + t.get<std::string>();
        for (int stage = 0; stage < 2; ++stage) {
            const auto p = api.get(path + "/payload", auth);
            if (p.status != 200) return fail("payload status " + std::to_string(p.status));
            if (api.post(path + "/submit", sim.respond(p.body), auth).status != 200) return fail("submit rejected");
        }
        api.get(path + "/payload", auth);
    }
    api.get(base, auth);
    const auto exported = api.get("/api/export");
    if (exported.status != 200) return fail("export failed");

    std::size_t with = 0, without = 0;
    for (const auto& r : exported.body["records"]) (r["condition"] == "with_text" ? with : without)++;
    if (without != 9 * T || with != 27 * T)
        return fail("exported " + std::to_string(without) + " without_text / " + std::to_string(with) + " with_text");

    // Only comprehension payloads may carry the text.
    std::vector<std::string> needles;
    for (const auto& t : corpus.texts) {
        needles.push_back(t.title);
        for (const auto& p : t.body) needles.push_back(p);
    }
    std::size_t checked = 0;
    for (const auto& r : api.log()) {
        if (r.body.is_object() && r.body.value("stage", "") == "comprehension" && r.body.contains("items")) continue;
        if (mcrc::testing::leaks_text(r.body, needles)) return fail("text content in a non-comprehension response");
        ++checked;
    }
    return pass(std::to_string(without) + " without_text, " + std::to_string(with) + " with_text, " +
                std::to_string(checked) + " responses checked");
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double limit_s;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria{
        {"metric-identity", 5, metric_identity},
        {"kappa-oracle", 10, kappa_oracle},
        {"threshold-rule", 1, threshold_rule},
        {"calibration-optimality", 10, calibration_optimality},
        {"bootstrap-coverage", 60, bootstrap_coverage},
        {"generation", 5, generation},
        {"golden-e2e", 30, golden_e2e},
        {"protocol", 30, protocol},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.check();
        } catch (const std::exception& e) {
            out = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (out.ok && secs > c.limit_s) out = fail(out.detail + ", over time limit");
        failures += !out.ok;
        std::printf("%s %s (%s; %.2fs of %.0fs)\n", out.ok ? "PASS" : "FAIL", c.name, out.detail.c_str(), secs,
                    c.limit_s);
    }
    return failures == 0 ? 0 : 1;
}
