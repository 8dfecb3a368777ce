#pragma once

#include "zsl/error.hpp"
#include "zsl/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace zsl {

struct ServiceConfig {
    std::string bind_address = "127.0.0.1";
    int port = 8080;                 ///< 0 picks a free port
    std::optional<double> threshold; ///< overrides the model's threshold
    std::chrono::seconds retrain_interval{0}; ///< 0: manual retraining only
    std::filesystem::path state_dir = "zsl-state"; ///< journals and model registry
    bool behind_tls_proxy = false;   ///< required for non-loopback binds
    std::string bearer_token;        ///< empty: no authentication
    bool balance_base = true;        ///< undersample the base corpus when retraining
    int jobs = 1;

    static ServiceConfig from_json(const Json& j);
    /// ZSL_BIND, ZSL_PORT, ZSL_THRESHOLD, ZSL_RETRAIN_INTERVAL, ZSL_STATE_DIR, ZSL_TOKEN.
    void apply_environment();
    /// Throws ConfigError for a plaintext non-loopback bind without the proxy flag.
    void validate() const;
};

/// Client-visible failure with an HTTP status.
class ServiceError : public Error {
public:
    ServiceError(int status, const std::string& what, std::string path = {})
        : Error(what), status_(status), path_(std::move(path)) {}
    int status() const noexcept { return status_; }
    const std::string& path() const noexcept { return path_; }

private:
    int status_;
    std::string path_;
};

struct PredictionRecord {
    std::string id;
    std::string received_at;
    Json input; ///< normalized, whitelisted payload
    double score = 0;
    bool flagged = false;
    std::uint64_t model_version = 0;

    Json to_json() const;
    static PredictionRecord from_json(const Json& j);
};

struct FeedbackRecord {
    std::string prediction_id;
    bool confirmed_label = false;
    std::string note;
    std::string received_at;

    Json to_json() const;
    static FeedbackRecord from_json(const Json& j);
};

/// Validates a /predict payload and returns the whitelisted form. Throws
/// ServiceError 422 for direct-identifier keys and 400 for schema violations.
Json normalize_predict_payload(const Json& payload);
/// Builds the child record the pipeline scores from a normalized payload.
ChildRecord child_from_payload(const Json& normalized);
/// The /predict payload for a child record; drops the id and relatives' ids.
Json predict_payload(const ChildRecord& child);

std::string utc_timestamp();

/// model-v{N}.json artifacts plus an ACTIVE pointer file.
class ModelRegistry {
public:
    explicit ModelRegistry(std::filesystem::path dir);

    /// Stamps the next unused version, persists the artifact, then swaps the active pointer.
    std::uint64_t register_model(PipelineModel model);
    std::shared_ptr<const PipelineModel> active() const;
    std::optional<std::uint64_t> active_version() const;
    std::uint64_t next_version() const;
    std::vector<std::uint64_t> versions() const;

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::shared_ptr<const PipelineModel> active_;
    std::uint64_t max_version_ = 0;
};

/// Append-only newline-delimited JSON.
class Journal {
public:
    explicit Journal(std::filesystem::path path);
    void append(const Json& entry);
    /// Every complete line; a torn final line is skipped.
    std::vector<Json> replay() const;

private:
    std::filesystem::path path_;
    std::mutex mutex_;
    std::ofstream out_;
};

/// Rows the retraining job starts from.
struct TrainingBase {
    std::shared_ptr<const Corpus> corpus;
    PipelineConfig config;
    std::vector<int> labels; ///< derived labels when empty
};

enum class RetrainStatus { trained, skipped, failed };

struct RetrainOutcome {
    RetrainStatus status = RetrainStatus::skipped;
    std::uint64_t version = 0; ///< new version, or the attempted one on failure
    std::string message;
};

/// Request handling without the transport; thread-safe.
class Service {
public:
    Service(ServiceConfig config, std::optional<TrainingBase> base);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    ModelRegistry& registry() { return registry_; }
    const ServiceConfig& config() const { return config_; }

    Json predict(const Json& payload);
    Json feedback(const Json& payload);
    Json health() const;

    /// Skips when a retrain is already running; a failure keeps the old model.
    RetrainOutcome retrain();
    /// Background retraining every config.retrain_interval; no-op when 0.
    void start_scheduler();
    void stop_scheduler();

    std::optional<PredictionRecord> prediction(const std::string& id) const;
    std::optional<FeedbackRecord> feedback_for(const std::string& id) const;
    std::size_t prediction_count() const;
    std::size_t retrain_attempts() const { return attempts_.load(); }

private:
    void recover();
    std::string new_id();
    double threshold_for(const PipelineModel& m) const;

    ServiceConfig config_;
    std::optional<TrainingBase> base_;
    std::optional<PreparedCorpus> base_prepared_;
    ModelRegistry registry_;
    Journal predictions_journal_;
    Journal feedback_journal_;

    mutable std::mutex store_mutex_;
    std::map<std::string, PredictionRecord> predictions_;
    std::map<std::string, FeedbackRecord> feedback_;
    std::uint64_t id_counter_ = 0;
    std::uint64_t id_salt_ = 0;

    std::mutex retrain_mutex_;
    std::atomic<std::size_t> attempts_{0};

    std::mutex scheduler_mutex_;
    std::condition_variable scheduler_cv_;
    bool scheduler_stop_ = false;
    std::thread scheduler_;
};

/// HTTP/1.1 front end: POST /predict, POST /feedback, GET /healthz.
class HttpServer {
public:
    HttpServer(Service& service, const ServiceConfig& config);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace zsl
