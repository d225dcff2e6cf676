#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lanegame/types.hpp"

namespace lanegame::trajectory {

using Point = Eigen::Vector2d;
using LaneId = std::int64_t;
using TrackId = std::int64_t;

constexpr double kSamplePeriod = 0.1;
constexpr double kTimeTolerance = 1e-6;
constexpr double kAssignThreshold = 3.5;     // m, farther than this from every lane => unassigned
constexpr double kMaxHeadingChange = 0.2;    // rad, turning maneuvers excluded
constexpr double kMaxMeanSpeed = 25.0;       // m/s
constexpr double kHalfWindow = 5.0;          // s around the crossing
constexpr int kHalfWindowSamples = 50;
constexpr int kWindowSamples = 2 * kHalfWindowSamples + 1;
constexpr int kHeadingAverageSamples = 10;   // 1 s at 10 Hz
constexpr double kMinFollowerSpeed = 0.1;    // m/s clamp in time-gap denominators

struct TrajectorySample {
    double time = 0.0;
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    double speed = 0.0;
    double accel = 0.0;
    double yaw_rate = 0.0;
};

struct VehicleTrack {
    TrackId id = 0;
    VehicleType type = VehicleType::HDV;
    std::vector<TrajectorySample> samples;

    // Throws DataError unless times are strictly increasing at 0.1 s spacing and speeds are non-negative.
    void validate() const;
    // Index of the sample at time t (within kTimeTolerance), if any.
    std::optional<std::size_t> index_at(double t) const;
};

struct Lane {
    LaneId id = 0;
    std::vector<Point> centerline;
    std::optional<LaneId> left;
    std::optional<LaneId> right;
    std::vector<LaneId> exits;
    bool interpolated = false;
};

// Nearest point on a polyline (exact segment projection).
struct Projection {
    double distance = 0.0;
    double arc_length = 0.0;   // along the polyline to the foot point
    double signed_offset = 0.0;  // positive to the left of the travel direction
    Point foot;
    Point tangent;  // unit
};

Projection project(std::span<const Point> polyline, const Point& p);

class LaneMap {
public:
    LaneMap() = default;
    explicit LaneMap(std::vector<Lane> lanes);

    const std::vector<Lane>& lanes() const { return lanes_; }
    bool empty() const { return lanes_.empty(); }
    const Lane& lane(LaneId id) const;
    const Lane* find(LaneId id) const;
    bool is_neighbor(LaneId from, LaneId to) const;

private:
    std::vector<Lane> lanes_;
    std::map<LaneId, std::size_t> index_;
};

using LaneAssignment = std::vector<std::optional<LaneId>>;

// Per-sample lane id; the first sample (and any sample after an unassigned one) searches
// every lane, later samples only the current lane, its exits and its left/right neighbors.
LaneAssignment assign_lanes(const VehicleTrack& track, const LaneMap& map);

// Crossing sample where the assigned lane switches to a left/right neighbor.
struct Crossing {
    std::size_t index = 0;
    double time = 0.0;
    LaneId from_lane = 0;
    LaneId to_lane = 0;
};

std::vector<Crossing> find_crossings(const LaneAssignment& assignment, const VehicleTrack& track,
                                     const LaneMap& map);

struct Rejection {
    TrackId track_id = 0;
    double time = 0.0;
    std::string reason;  // interpolated | window | heading | speed | no_lead | no_lag | boundary | during_short | before_short
};

struct Candidate {
    TrackId active_id = 0;
    TrackId lead_id = 0;
    TrackId passive_id = 0;
    Crossing crossing;
};

struct DetectionResult {
    std::vector<Candidate> candidates;
    std::vector<Rejection> rejections;
};

// Applies the interpolated-lane, window coverage, heading, speed and lead/lag filters.
DetectionResult detect_lane_changes(const std::map<TrackId, LaneAssignment>& assignments, const LaneMap& map,
                                    const std::map<TrackId, VehicleTrack>& tracks);

// Samples of the three vehicles on the common [crossing-5 s, crossing+5 s] grid.
struct EventWindow {
    std::vector<TrajectorySample> active;
    std::vector<TrajectorySample> lead;
    std::vector<TrajectorySample> passive;
    const Lane* target = nullptr;
    std::size_t crossing = kHalfWindowSamples;
};

struct Boundaries {
    std::size_t start = 0;  // window index
    std::size_t end = 0;
    double start_time = 0.0;
    double end_time = 0.0;
    bool fell_back_to_edge = false;
};

Boundaries locate_boundaries(std::span<const TrajectorySample> window, const Lane& target, std::size_t crossing);

struct Features {
    std::array<double, kActiveFeatures> active{};
    std::array<double, kPassiveFeatures> passive{};
    double lane_crossing_angle = 0.0;  // deg
};

// Throws DataError if the during-LC period has fewer than two samples.
Features compute_features(const EventWindow& window, const Boundaries& b);

using StateVector = std::array<double, kStateDim>;

// Throws DataError if the before-LC period has fewer than two samples.
StateVector compute_state(const EventWindow& window, const Boundaries& b);

// Mean of after-LC speeds minus mean of before-LC speeds.
double speed_gain(std::span<const TrajectorySample> samples, const Boundaries& b);

double lane_crossing_angle_deg(const TrajectorySample& s, const Point& lane_tangent);

struct LaneChangeEvent {
    std::int64_t event_id = 0;
    TrackId active_id = 0;
    TrackId lead_id = 0;
    TrackId passive_id = 0;
    double crossing_time = 0.0;
    double start_time = 0.0;
    double end_time = 0.0;
    bool boundary_fallback = false;
    VehicleType active_type = VehicleType::HDV;
    VehicleType passive_type = VehicleType::HDV;
    std::array<double, kActiveFeatures> active_features{};
    std::array<double, kPassiveFeatures> passive_features{};
    StateVector state{};
    double lane_crossing_angle = 0.0;
    std::optional<Strategy> active_label;
    std::optional<Strategy> passive_label;
    std::optional<Outcome> outcome;
};

struct ExtractionResult {
    std::vector<LaneChangeEvent> events;
    std::vector<Rejection> rejections;
};

ExtractionResult extract_events(const std::map<TrackId, VehicleTrack>& tracks, const LaneMap& map);

// z-scores with population standard deviation.
class StateScaler {
public:
    StateScaler() = default;
    StateScaler(std::array<double, kStateDim> means, std::array<double, kStateDim> stds);

    // Throws DataError naming the variable if one is constant, or if fewer than two states.
    static StateScaler fit(std::span<const StateVector> states);

    Eigen::Matrix<double, kAugmentedDim, 1> transform(const StateVector& raw) const;
    StateVector inverse(const Eigen::Matrix<double, kAugmentedDim, 1>& augmented) const;

    const std::array<double, kStateDim>& means() const { return means_; }
    const std::array<double, kStateDim>& stds() const { return stds_; }

private:
    std::array<double, kStateDim> means_{};
    std::array<double, kStateDim> stds_{};
};

std::string state_name(int i);

// CSV formats.
std::map<TrackId, VehicleTrack> read_tracks_csv(const std::filesystem::path& path);
LaneMap read_map_csv(const std::filesystem::path& path);
void write_tracks_csv(const std::filesystem::path& path, const std::map<TrackId, VehicleTrack>& tracks);
void write_map_csv(const std::filesystem::path& path, const LaneMap& map);
void write_events_csv(const std::filesystem::path& path, std::span<const LaneChangeEvent> events);
std::vector<LaneChangeEvent> read_events_csv(const std::filesystem::path& path);
void write_rejections_csv(const std::filesystem::path& path, std::span<const Rejection> rejections);

// Two parallel straight lanes with scripted lane changes; used by tests and `synth --scene`.
struct SceneConfig {
    int events = 40;
    double lane_width = 3.6;
    double av_fraction = 0.3;
    std::uint64_t seed = 1;
};

struct Scene {
    std::map<TrackId, VehicleTrack> tracks;
    LaneMap map;
};

Scene make_scene(const SceneConfig& cfg);

}  // namespace lanegame::trajectory
