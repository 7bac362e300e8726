#include "mcrc/annotation.hpp"

#include "mcrc/error.hpp"
#include "mcrc/hashing.hpp"
#include "mcrc/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace mcrc {

using nlohmann::json;

struct AnnotationService::Live {
    Session session;
    mutable std::shared_mutex mutex;
};

namespace {

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorCode::invalid_argument, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string new_token() {
    std::random_device rd;
    std::string token;
    for (int i = 0; i < 4; ++i) {
        std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) | rd();
        token += to_hex(v);
    }
    return token;
}

json submission_to_json(const Submission& s) {
    json answers = json::array();
    for (const auto& a : s.answers)
        answers.push_back({{"item_id", a.item_id}, {"position", a.position}, {"label", a.label}});
    json ratings = json::array();
    for (const auto& r : s.ratings) ratings.push_back({{"item_id", r.item_id}, {"rating", r.value}});
    return {{"entry", s.entry}, {"stage", to_string(s.stage)}, {"answers", answers}, {"ratings", ratings},
            {"at", s.submitted_at}};
}

Submission submission_from_json(const json& j, const std::string& annotator) {
    Submission s;
    s.entry = j.at("entry").get<std::uint64_t>();
    s.stage = parse_stage(j.at("stage").get<std::string>());
    for (const auto& a : j.at("answers"))
        s.answers.push_back({a.at("item_id").get<std::string>(), a.at("position").get<std::size_t>(),
                             a.at("label").get<bool>()});
    for (const auto& r : j.at("ratings"))
        s.ratings.push_back({r.at("item_id").get<std::string>(), annotator, r.at("rating").get<int>()});
    s.submitted_at = j.value("at", "");
    return s;
}

json session_to_json(const Session& s) {
    json texts = json::object();
    for (const auto& [tid, p] : s.texts)
        texts[tid] = {{"stage", to_string(p.stage)},
                      {"guessing", p.guessing ? submission_to_json(*p.guessing) : json(nullptr)},
                      {"comprehension", p.comprehension ? submission_to_json(*p.comprehension) : json(nullptr)}};
    return {{"session_id", s.session_id},
            {"annotator_id", s.annotator_id},
            {"token_hash", s.token_hash},
            {"created_at", s.created_at},
            {"texts", texts}};
}

Session session_from_json(const json& j) {
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.annotator_id = j.at("annotator_id").get<std::string>();
    s.token_hash = j.at("token_hash").get<std::string>();
    s.created_at = j.value("created_at", "");
    for (const auto& [tid, p] : j.at("texts").items()) {
        TextProgress tp;
        tp.stage = parse_stage(p.at("stage").get<std::string>());
        if (!p.at("guessing").is_null()) tp.guessing = submission_from_json(p.at("guessing"), s.annotator_id);
        if (!p.at("comprehension").is_null())
            tp.comprehension = submission_from_json(p.at("comprehension"), s.annotator_id);
        s.texts.emplace(tid, std::move(tp));
    }
    return s;
}

void apply_submission(Session& s, const json& event) {
    auto& progress = s.texts.at(event.at("text_id").get<std::string>());
    json sub = event;
    sub["entry"] = event.at("seq");
    auto submission = submission_from_json(sub, s.annotator_id);
    if (submission.stage != progress.stage) throw Error(ErrorCode::export_error, "submission out of stage order");
    if (submission.stage == Stage::guessing) {
        progress.guessing = std::move(submission);
        progress.stage = Stage::comprehension;
    } else {
        progress.comprehension = std::move(submission);
        progress.stage = Stage::done;
    }
}

}  // namespace

AnnotationService::AnnotationService(Corpus corpus, ServiceConfig config)
    : corpus_(std::move(corpus)), config_(std::move(config)) {
    if (config_.generators.empty()) config_.generators = corpus_.generators();
    if (config_.snapshot_every == 0) config_.snapshot_every = 1;
    assignments_ = create_assignments(config_.annotators, corpus_, config_.generators, config_.seed);
    for (const auto& a : assignments_) layouts_.emplace(a.annotator_id, make_layout(a, corpus_, config_.seed));
    open_store();
}

AnnotationService::~AnnotationService() = default;

const Assignment& AnnotationService::assignment_for(const std::string& annotator_id) const {
    for (const auto& a : assignments_)
        if (a.annotator_id == annotator_id) return a;
    throw Error(ErrorCode::not_found, "unknown annotator '" + annotator_id + "'");
}

AnnotationService::Live& AnnotationService::live(const std::string& session_id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(ErrorCode::not_found, "unknown session '" + session_id + "'");
    return *it->second;
}

void AnnotationService::open_store() {
    if (config_.store_dir.empty()) return;
    std::filesystem::create_directories(config_.store_dir);
    std::uint64_t last = 0;
    const auto snap = config_.store_dir / "snapshot.json";
    if (std::filesystem::exists(snap)) {
        json doc;
        try {
            doc = json::parse(read_file(snap));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::export_error, "unreadable snapshot " + snap.string() + ": " + e.what());
        }
        last = doc.at("last_seq").get<std::uint64_t>();
        for (const auto& sj : doc.at("sessions")) {
            try {
                auto s = session_from_json(sj);
                session_by_annotator_[s.annotator_id] = s.session_id;
                auto live = std::make_unique<Live>();
                live->session = std::move(s);
                sessions_[live->session.session_id] = std::move(live);
            } catch (const std::exception&) {
                corrupt_entries_.push_back("snapshot session " + sj.value("session_id", std::string("?")));
            }
        }
        next_seq_ = last + 1;
    }

    const auto log_path = config_.store_dir / "events.jsonl";
    if (!std::filesystem::exists(log_path)) return;
    const auto content = read_file(log_path);
    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json event;
        try {
            event = json::parse(line);
        } catch (const json::exception&) {
            corrupt_entries_.push_back("line " + std::to_string(line_no));
            continue;
        }
        const auto seq = event.value("seq", std::uint64_t{0});
        if (seq == 0) {
            corrupt_entries_.push_back("line " + std::to_string(line_no));
            continue;
        }
        next_seq_ = std::max(next_seq_, seq + 1);
        if (seq <= last) continue;
        try {
            apply(event);
        } catch (const std::exception&) {
            corrupt_entries_.push_back("entry " + std::to_string(seq));
        }
    }
    // A crash can leave a torn last line; start appends on a fresh one.
    if (!content.empty() && content.back() != '\n') {
        std::ofstream out(log_path, std::ios::app | std::ios::binary);
        out << '\n';
    }
}

void AnnotationService::apply(const json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "session_created") {
        Session s;
        s.session_id = event.at("session_id").get<std::string>();
        s.annotator_id = event.at("annotator_id").get<std::string>();
        s.token_hash = event.at("token_hash").get<std::string>();
        s.created_at = event.value("at", "");
        const auto& as = assignment_for(s.annotator_id);
        for (const auto& tid : as.text_order) s.texts.emplace(tid, TextProgress{});
        session_by_annotator_[s.annotator_id] = s.session_id;
        auto live = std::make_unique<Live>();
        live->session = std::move(s);
        sessions_[live->session.session_id] = std::move(live);
    } else if (type == "stage_submitted") {
        auto it = sessions_.find(event.at("session_id").get<std::string>());
        if (it == sessions_.end()) throw Error(ErrorCode::export_error, "submission for unknown session");
        apply_submission(it->second->session, event);
    } else {
        throw Error(ErrorCode::export_error, "unknown event type '" + type + "'");
    }
}

void AnnotationService::append(const json& event) {
    if (config_.store_dir.empty()) return;
    std::ofstream out(config_.store_dir / "events.jsonl", std::ios::app | std::ios::binary);
    out << event.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::export_error, "cannot append to event log");
}

CreatedSession AnnotationService::create_session(const std::string& annotator_id) {
    const auto& as = assignment_for(annotator_id);
    CreatedSession created;
    bool due = false;
    {
        std::unique_lock lock(sessions_mutex_);
        if (session_by_annotator_.count(annotator_id))
            throw Error(ErrorCode::conflict, "annotator '" + annotator_id + "' already has a session");
        created.session_id = "s-" + to_hex(derive_seed(config_.seed, fnv1a64("session/" + annotator_id))).substr(0, 12);
        created.token = new_token();
        std::lock_guard log(log_mutex_);
        json event = {{"seq", next_seq_},
                      {"type", "session_created"},
                      {"session_id", created.session_id},
                      {"annotator_id", annotator_id},
                      {"token_hash", sha256_hex(created.token)},
                      {"at", now_utc()}};
        append(event);
        ++next_seq_;
        apply(event);
        due = ++since_snapshot_ >= config_.snapshot_every;
    }
    created.info = {{"session_id", created.session_id},
                    {"token", created.token},
                    {"annotator_id", annotator_id},
                    {"plan_id", as.plan_id},
                    {"texts", as.text_order}};
    if (due) snapshot();
    return created;
}

void AnnotationService::authorize(const std::string& session_id, const std::string& token) const {
    const auto& l = live(session_id);
    std::shared_lock lock(l.mutex);
    if (token.empty() || sha256_hex(token) != l.session.token_hash)
        throw Error(ErrorCode::unauthorized, "invalid session token");
}

json AnnotationService::status(const std::string& session_id) const {
    const auto& l = live(session_id);
    std::shared_lock lock(l.mutex);
    const auto& as = assignment_for(l.session.annotator_id);
    json texts = json::array();
    bool complete = true;
    for (const auto& tid : as.text_order) {
        const auto stage = l.session.texts.at(tid).stage;
        complete = complete && stage == Stage::done;
        texts.push_back({{"text_id", tid}, {"stage", to_string(stage)}});
    }
    return {{"session_id", session_id},
            {"annotator_id", l.session.annotator_id},
            {"plan_id", as.plan_id},
            {"texts", texts},
            {"complete", complete}};
}

namespace {

json item_payload(const MCItem& item, const SessionLayout& layout) {
    json options = json::array();
    const auto& perm = layout.option_order.at(item.id);
    for (std::size_t pos = 0; pos < perm.size(); ++pos)
        options.push_back({{"position", pos}, {"answer", item.options[perm[pos]].text}});
    return {{"item_key", layout.item_key.at(item.id)}, {"stem", item.stem}, {"options", options}};
}

// Items shown for a stage, in display order.
std::vector<const MCItem*> displayed_items(const Corpus& corpus, const SessionLayout& layout,
                                           const Assignment& as, const std::string& text_id, Stage stage) {
    std::vector<const MCItem*> out;
    const auto& guess_gen = as.guessing_generator.at(text_id);
    for (const auto& id : layout.item_order.at(text_id)) {
        const auto* item = corpus.find_item(id);
        if (stage == Stage::guessing && item->generator != guess_gen) continue;
        out.push_back(item);
    }
    return out;
}

}  // namespace

json AnnotationService::payload(const std::string& session_id, const std::string& text_id,
                                std::optional<Stage> requested) const {
    const auto& l = live(session_id);
    std::shared_lock lock(l.mutex);
    auto it = l.session.texts.find(text_id);
    if (it == l.session.texts.end())
        throw Error(ErrorCode::not_found, "text '" + text_id + "' is not assigned to this session");
    const Stage current = it->second.stage;
    if (requested && *requested != current) {
        if (*requested > current)
            throw Error(ErrorCode::stage_order, std::string(to_string(*requested)) + " stage is not open before the " +
                                                    to_string(current) + " stage is submitted");
        throw Error(ErrorCode::conflict, std::string(to_string(*requested)) + " stage already submitted");
    }
    json out = {{"session_id", session_id}, {"text_id", text_id}, {"stage", to_string(current)}};
    if (current == Stage::done) return out;

    const auto& as = assignment_for(l.session.annotator_id);
    const auto& layout = layouts_.at(l.session.annotator_id);
    json items = json::array();
    for (const auto* item : displayed_items(corpus_, layout, as, text_id, current))
        items.push_back(item_payload(*item, layout));
    out["items"] = std::move(items);
    if (current == Stage::guessing) {
        out["instructions"] =
            "Mark every answer option as correct or incorrect. The text is shown after this step.";
        return out;
    }
    const auto* text = corpus_.find_text(text_id);
    out["instructions"] = "Read the text, mark every answer option as correct or incorrect and rate each item.";
    out["text"] = {{"title", text->title}, {"body", text->body}};
    out["rating"] = {{"min", 1},
                     {"max", 5},
                     {"anchors", {{"1", "unusable"}, {"5", "perfect"}}},
                     {"criteria", rating_criteria()}};
    return out;
}

json AnnotationService::submit(const std::string& session_id, const std::string& text_id, const json& body) {
    auto& l = live(session_id);
    bool due = false;
    Stage next = Stage::guessing;
    {
        std::unique_lock lock(l.mutex);
        auto it = l.session.texts.find(text_id);
        if (it == l.session.texts.end())
            throw Error(ErrorCode::not_found, "text '" + text_id + "' is not assigned to this session");
        const Stage current = it->second.stage;

        if (!body.is_object()) throw ValidationError("submission must be a JSON object", {});
        if (!body.contains("stage") || !body["stage"].is_string())
            throw ValidationError("submission needs a stage", {"stage: missing"});
        const Stage stage = parse_stage(body["stage"].get<std::string>());
        if (stage == Stage::done) throw ValidationError("stage 'done' cannot be submitted", {"stage: done"});
        if (stage > current)
            throw Error(ErrorCode::stage_order, std::string(to_string(stage)) + " stage is not open before the " +
                                                    to_string(current) + " stage is submitted");
        if (stage < current) throw Error(ErrorCode::conflict, std::string(to_string(stage)) + " stage already submitted");

        const auto& as = assignment_for(l.session.annotator_id);
        const auto& layout = layouts_.at(l.session.annotator_id);
        const auto shown = displayed_items(corpus_, layout, as, text_id, stage);
        std::map<std::string, const MCItem*> by_key;
        for (const auto* item : shown) by_key.emplace(layout.item_key.at(item->id), item);

        std::vector<std::string> problems;
        std::set<std::pair<std::string, std::size_t>> seen;
        json answers = json::array();
        const json responses = body.value("responses", json::array());
        if (!responses.is_array()) problems.push_back("responses: must be an array");
        else {
            for (std::size_t i = 0; i < responses.size(); ++i) {
                const auto& r = responses[i];
                const auto where = "responses[" + std::to_string(i) + "]";
                if (!r.is_object() || !r.contains("item_key") || !r["item_key"].is_string() ||
                    !r.contains("position") || !r["position"].is_number_unsigned() || !r.contains("label") ||
                    !r["label"].is_boolean()) {
                    problems.push_back(where + ": needs item_key, position and a boolean label");
                    continue;
                }
                const auto key = r["item_key"].get<std::string>();
                const auto pos = r["position"].get<std::size_t>();
                auto found = by_key.find(key);
                if (found == by_key.end()) {
                    problems.push_back(where + ": item " + key + " is not shown in this stage");
                    continue;
                }
                if (pos >= found->second->options.size()) {
                    problems.push_back(where + ": item " + key + " has no position " + std::to_string(pos));
                    continue;
                }
                if (!seen.emplace(key, pos).second) {
                    problems.push_back(where + ": duplicate answer for item " + key + " position " +
                                       std::to_string(pos));
                    continue;
                }
                answers.push_back({{"item_id", found->second->id}, {"position", pos}, {"label", r["label"]}});
            }
        }
        for (const auto& [key, item] : by_key)
            for (std::size_t pos = 0; pos < item->options.size(); ++pos)
                if (!seen.count({key, pos}))
                    problems.push_back("missing response: item " + key + " position " + std::to_string(pos));

        json ratings = json::array();
        const json rated = body.value("ratings", json::array());
        if (!rated.is_array()) problems.push_back("ratings: must be an array");
        else if (stage == Stage::guessing) {
            if (!rated.empty()) problems.push_back("ratings: not collected in the guessing stage");
        } else {
            std::set<std::string> rated_keys;
            for (std::size_t i = 0; i < rated.size(); ++i) {
                const auto& r = rated[i];
                const auto where = "ratings[" + std::to_string(i) + "]";
                if (!r.is_object() || !r.contains("item_key") || !r["item_key"].is_string() ||
                    !r.contains("rating") || !r["rating"].is_number_integer()) {
                    problems.push_back(where + ": needs item_key and an integer rating");
                    continue;
                }
                const auto key = r["item_key"].get<std::string>();
                const auto value = r["rating"].get<long long>();
                auto found = by_key.find(key);
                if (found == by_key.end()) {
                    problems.push_back(where + ": item " + key + " is not shown in this stage");
                    continue;
                }
                if (value < 1 || value > 5) {
                    problems.push_back(where + ": rating for item " + key + " out of range 1..5: " +
                                       std::to_string(value));
                    continue;
                }
                if (!rated_keys.insert(key).second) {
                    problems.push_back(where + ": duplicate rating for item " + key);
                    continue;
                }
                ratings.push_back({{"item_id", found->second->id}, {"rating", value}});
            }
            for (const auto& [key, item] : by_key)
                if (!rated_keys.count(key)) problems.push_back("missing rating: item " + key);
        }
        if (!problems.empty())
            throw ValidationError("submission rejected: " + std::to_string(problems.size()) + " problem(s)",
                                  std::move(problems));

        std::lock_guard log(log_mutex_);
        json event = {{"seq", next_seq_},         {"type", "stage_submitted"}, {"session_id", session_id},
                      {"text_id", text_id},       {"stage", to_string(stage)}, {"answers", answers},
                      {"ratings", ratings},       {"at", now_utc()}};
        append(event);
        ++next_seq_;
        apply_submission(l.session, event);
        due = ++since_snapshot_ >= config_.snapshot_every;
        next = it->second.stage;
    }
    if (due) snapshot();
    return {{"session_id", session_id}, {"text_id", text_id}, {"accepted", true}, {"next_stage", to_string(next)}};
}

void AnnotationService::snapshot() {
    if (config_.store_dir.empty()) return;
    std::lock_guard snap_lock(snapshot_mutex_);
    json sessions = json::array();
    std::uint64_t last = 0;
    {
        std::shared_lock lock(sessions_mutex_);
        std::vector<std::shared_lock<std::shared_mutex>> held;
        for (const auto& [id, l] : sessions_) held.emplace_back(l->mutex);
        std::lock_guard log(log_mutex_);
        last = next_seq_ - 1;
        since_snapshot_ = 0;
        for (const auto& [id, l] : sessions_) sessions.push_back(session_to_json(l->session));
    }
    json doc = {{"last_seq", last}, {"sessions", sessions}};
    write_file_atomic(config_.store_dir / "snapshot.json", doc.dump() + "\n");
}

ExportResult AnnotationService::export_records() const {
    if (!corrupt_entries_.empty())
        throw Error(ErrorCode::export_error, "corrupted store entry " + corrupt_entries_.front());
    ExportResult out;
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, l] : sessions_) {
        std::shared_lock session_lock(l->mutex);
        const auto& s = l->session;
        const auto& layout = layouts_.at(s.annotator_id);
        for (const auto& [tid, progress] : s.texts) {
            for (const auto* sub : {progress.guessing ? &*progress.guessing : nullptr,
                                    progress.comprehension ? &*progress.comprehension : nullptr}) {
                if (!sub) continue;
                const auto entry = "corrupted store entry " + std::to_string(sub->entry);
                const auto condition = sub->stage == Stage::guessing ? Condition::without_text : Condition::with_text;
                for (const auto& a : sub->answers) {
                    const auto* item = corpus_.find_item(a.item_id);
                    auto perm = layout.option_order.find(a.item_id);
                    if (!item || item->text_id != tid || perm == layout.option_order.end() ||
                        a.position >= perm->second.size())
                        throw Error(ErrorCode::export_error, entry + ": bad answer for item '" + a.item_id + "'");
                    ResponseRecord r;
                    r.item_id = a.item_id;
                    r.option_index = static_cast<int>(perm->second[a.position]);
                    r.evaluator_id = s.annotator_id;
                    r.evaluator_kind = EvaluatorKind::human;
                    r.condition = condition;
                    r.label = a.label;
                    out.records.push_back(std::move(r));
                }
                for (const auto& r : sub->ratings) {
                    const auto* item = corpus_.find_item(r.item_id);
                    if (!item || item->text_id != tid || r.value < 1 || r.value > 5)
                        throw Error(ErrorCode::export_error, entry + ": bad rating for item '" + r.item_id + "'");
                    out.ratings.push_back(r);
                }
            }
        }
    }
    sort_records(out.records);
    std::sort(out.ratings.begin(), out.ratings.end(), [](const Rating& a, const Rating& b) {
        return std::tie(a.annotator_id, a.item_id) < std::tie(b.annotator_id, b.item_id);
    });
    return out;
}

}  // namespace mcrc
