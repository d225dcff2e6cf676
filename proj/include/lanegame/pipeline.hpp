#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lanegame/evolution.hpp"
#include "lanegame/qre.hpp"
#include "lanegame/types.hpp"

namespace lanegame::pipeline {

constexpr std::string_view kVersion = "1.0.0";

// Bad flags or config keys; maps to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    std::filesystem::path out = "out";
    std::uint64_t seed = 0;

    // Inputs; empty means the default file inside `out`.
    std::filesystem::path tracks;
    std::filesystem::path map;
    std::filesystem::path events;          // unlabeled events for `cluster`
    std::filesystem::path labeled_events;  // labeled events for `fit`, `validate`, `games`

    int cluster_restarts = 10;
    int cluster_max_iterations = 300;

    double l1_weight = 0.1;
    int fit_max_iterations = 15000;

    int cv_splits = 0;
    double train_share = 0.8;

    evolution::SimConfig sim;
    bool sweep = false;  // full grid below instead of the single `sim` config
    std::vector<int> neighbor_sizes{1, 2, 3};
    std::vector<double> noise_ks{1.0, 2.0, 3.0};
    std::vector<double> mprs{0.2, 0.5, 0.8};
    std::vector<double> contact_freqs{0.0, 0.02, 0.04};
    int threads = 1;

    bool synth_scene = false;  // trajectories + map instead of labeled events
    int synth_events = 5000;
    double synth_beta_sigma = 0.4;
    int scene_events = 40;
    double scene_av_fraction = 0.3;

    // Throws UsageError for out-of-range values.
    void validate() const;
};

// Sectioned key/value file ([general], [extract], [cluster], [fit], [validate], [simulate], [synth]).
// Unknown keys raise UsageError so typos do not pass silently.
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

// Artifact names inside the output directory.
namespace files {
inline constexpr const char* kTracks = "tracks.csv";
inline constexpr const char* kMap = "map.csv";
inline constexpr const char* kEvents = "events.csv";
inline constexpr const char* kRejections = "rejections.csv";
inline constexpr const char* kExtractSummary = "extract_summary.json";
inline constexpr const char* kLabeled = "events_labeled.csv";
inline constexpr const char* kClusterReport = "cluster_report.json";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kNullModel = "null_model.json";
inline constexpr const char* kThetaStar = "theta_star.json";
inline constexpr const char* kValidation = "validation.json";
inline constexpr const char* kPayoffs = "payoffs.csv";
inline constexpr const char* kGames = "games.json";
inline constexpr const char* kSweepJson = "sweep.json";
inline constexpr const char* kSweepCsv = "sweep.csv";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace files

// Held for the lifetime of one command; a second concurrent invocation fails with DataError.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::filesystem::path lock_;
};

struct FileRecord {
    std::string path;  // relative to the output directory when inside it
    std::string sha256;
};

struct ManifestEntry {
    std::string stage;
    std::vector<FileRecord> inputs;
    std::vector<FileRecord> outputs;
    std::uint64_t seed = 0;
    std::string version{kVersion};
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& out);
// Replaces any earlier entry of the same stage, keeping pipeline order.
void record_stage(const std::filesystem::path& out, const ManifestEntry& entry);

struct ChainCheck {
    bool ok = true;
    std::vector<std::string> problems;
};

// Every input produced by an earlier stage must carry that stage's recorded output hash,
// and every recorded output must still hash to its recorded value.
ChainCheck verify_chain(const std::filesystem::path& out);

// Each stage reads its predecessors' artifacts from cfg.out and records itself in the manifest.
// Missing upstream artifacts raise DataError naming the command that produces them.
void run_synth(const PipelineConfig& cfg);
void run_extract(const PipelineConfig& cfg);
void run_cluster(const PipelineConfig& cfg);
void run_fit(const PipelineConfig& cfg);
void run_validate(const PipelineConfig& cfg);
void run_games(const PipelineConfig& cfg);
void run_simulate(const PipelineConfig& cfg);
nlohmann::json run_report(const PipelineConfig& cfg);

// Truth used by `synth`: beta ~ N(0, sigma^2), lambda ~ U[1, 2.5], standard-normal states.
qre::UtilityModel synthetic_truth(std::uint64_t seed, double beta_sigma);

}  // namespace lanegame::pipeline
