#pragma once

#include "mcrc/corpus.hpp"
#include "mcrc/error.hpp"
#include "mcrc/evaluation.hpp"
#include "mcrc/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace mcrc {

enum class Stage { guessing, comprehension, done };

const char* to_string(Stage stage);
Stage parse_stage(std::string_view text);

/// The five criteria shown next to the 1-5 quality scale.
const std::vector<std::string>& rating_criteria();

struct Assignment {
    std::string annotator_id;
    std::vector<std::string> text_order;
    std::map<std::string, Generator> guessing_generator;  // text id -> generator
    std::string plan_id;
};

/// Latin-square rotation: annotator a guesses on text t with generator
/// G[(t + a) mod k], after shuffling G and the annotator order by seed.
std::vector<Assignment> create_assignments(const std::vector<std::string>& annotators, const Corpus& corpus,
                                           const std::vector<Generator>& generators, std::uint64_t seed);

/// Display permutations fixed for one annotator. perm[display position] = canonical option index.
struct SessionLayout {
    std::map<std::string, std::vector<std::size_t>> option_order;  // item id -> permutation
    std::map<std::string, std::vector<std::string>> item_order;    // text id -> all item ids, display order
    std::map<std::string, std::string> item_key;                   // item id -> opaque display key
    std::map<std::string, std::string> item_by_key;
};

SessionLayout make_layout(const Assignment& assignment, const Corpus& corpus, std::uint64_t seed);

struct OptionAnswer {
    std::string item_id;
    std::size_t position = 0;  // display position, as the annotator saw it
    bool label = false;
};

struct Submission {
    std::uint64_t entry = 0;  // sequence number of the log entry that stored it
    Stage stage = Stage::guessing;
    std::vector<OptionAnswer> answers;
    std::vector<Rating> ratings;
    std::string submitted_at;
};

struct TextProgress {
    Stage stage = Stage::guessing;
    std::optional<Submission> guessing;
    std::optional<Submission> comprehension;
};

struct Session {
    std::string session_id;
    std::string annotator_id;
    std::string token_hash;
    std::string created_at;
    std::map<std::string, TextProgress> texts;
};

struct ServiceConfig {
    std::vector<std::string> annotators;
    std::uint64_t seed = 0;
    /// Generators in rotation; empty means every generator in the corpus.
    std::vector<Generator> generators;
    /// Empty keeps everything in memory.
    std::filesystem::path store_dir;
    /// A snapshot is written after this many log entries.
    std::size_t snapshot_every = 50;
    std::string cors_origin = "http://localhost:5173";
    /// When set, GET /api/export requires it in X-Admin-Token.
    std::optional<std::string> admin_token;
};

struct ExportResult {
    std::vector<ResponseRecord> records;
    std::vector<Rating> ratings;
};

struct CreatedSession {
    std::string session_id;
    std::string token;
    nlohmann::json info;
};

/// Runs the two-stage protocol. Every mutation is appended to
/// store_dir/events.jsonl before it becomes visible; store_dir/snapshot.json
/// is rewritten periodically and replay starts from it.
class AnnotationService {
public:
    AnnotationService(Corpus corpus, ServiceConfig config);
    ~AnnotationService();

    const std::vector<Assignment>& assignments() const { return assignments_; }
    const Corpus& corpus() const { return corpus_; }
    const ServiceConfig& config() const { return config_; }

    CreatedSession create_session(const std::string& annotator_id);
    /// Throws unauthorized unless the token belongs to the session.
    void authorize(const std::string& session_id, const std::string& token) const;

    nlohmann::json status(const std::string& session_id) const;
    /// Payload for the current stage. A requested stage ahead of the
    /// current one is a stage-order error.
    nlohmann::json payload(const std::string& session_id, const std::string& text_id,
                           std::optional<Stage> requested = std::nullopt) const;
    nlohmann::json submit(const std::string& session_id, const std::string& text_id, const nlohmann::json& body);

    ExportResult export_records() const;

    /// Forces a snapshot now.
    void snapshot();

private:
    struct Live;

    void open_store();
    void apply(const nlohmann::json& event);
    void append(const nlohmann::json& event);
    const Assignment& assignment_for(const std::string& annotator_id) const;
    Live& live(const std::string& session_id) const;

    Corpus corpus_;
    ServiceConfig config_;
    std::vector<Assignment> assignments_;
    std::map<std::string, SessionLayout> layouts_;  // annotator id -> layout

    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::unique_ptr<Live>> sessions_;
    std::map<std::string, std::string> session_by_annotator_;

    std::mutex log_mutex_;
    std::mutex snapshot_mutex_;
    std::uint64_t next_seq_ = 1;
    std::size_t since_snapshot_ = 0;
    std::vector<std::string> corrupt_entries_;
};

/// Maps error codes to HTTP statuses used by the service.
int http_status(ErrorCode code);

/// Serves the service over HTTP until stop() is called.
class AnnotationServer {
public:
    explicit AnnotationServer(AnnotationService& service);
    ~AnnotationServer();

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mcrc
