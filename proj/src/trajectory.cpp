#include "lanegame/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "lanegame/io.hpp"
#include "lanegame/stats.hpp"

namespace lanegame::trajectory {

namespace {

double wrap_angle(double a) {
    return std::remainder(a, 2.0 * std::numbers::pi);
}

double circular_mean(std::span<const TrajectorySample> s) {
    double sx = 0.0;
    double sy = 0.0;
    for (const auto& v : s) {
        sx += std::cos(v.heading);
        sy += std::sin(v.heading);
    }
    return std::atan2(sy, sx);
}

Point position(const TrajectorySample& s) { return {s.x, s.y}; }

template <typename F>
std::vector<double> collect(std::span<const TrajectorySample> s, std::size_t first, std::size_t last, F f) {
    std::vector<double> out;
    out.reserve(last - first + 1);
    for (std::size_t i = first; i <= last; ++i) out.push_back(f(s[i]));
    return out;
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }
double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

}  // namespace

void VehicleTrack::validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!(s.speed >= 0.0)) {
            throw DataError("track " + std::to_string(id) + ": negative speed at t=" + format_real(s.time));
        }
        if (i == 0) continue;
        double dt = s.time - samples[i - 1].time;
        if (!(dt > 0.0)) {
            throw DataError("track " + std::to_string(id) + ": time not increasing at t=" + format_real(s.time));
        }
        if (std::abs(dt - kSamplePeriod) > kTimeTolerance) {
            throw DataError("track " + std::to_string(id) + ": sample spacing " + format_real(dt) + " s at t=" +
                            format_real(s.time) + " (expected 0.1 s)");
        }
    }
}

std::optional<std::size_t> VehicleTrack::index_at(double t) const {
    if (samples.empty()) return std::nullopt;
    double k = std::round((t - samples.front().time) / kSamplePeriod);
    if (k < 0 || k >= static_cast<double>(samples.size())) return std::nullopt;
    auto i = static_cast<std::size_t>(k);
    if (std::abs(samples[i].time - t) > kTimeTolerance) return std::nullopt;
    return i;
}

Projection project(std::span<const Point> polyline, const Point& p) {
    Projection best;
    best.distance = std::numeric_limits<double>::infinity();
    double along = 0.0;
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
        const Point& a = polyline[i];
        const Point& b = polyline[i + 1];
        Point ab = b - a;
        double len2 = ab.squaredNorm();
        double len = std::sqrt(len2);
        if (len2 == 0.0) continue;
        double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
        Point foot = a + t * ab;
        double dist = (p - foot).norm();
        if (dist < best.distance) {
            best.distance = dist;
            best.arc_length = along + t * len;
            best.foot = foot;
            best.tangent = ab / len;
            Point rel = p - foot;
            double cross = best.tangent.x() * rel.y() - best.tangent.y() * rel.x();
            best.signed_offset = cross >= 0.0 ? dist : -dist;
        }
        along += len;
    }
    if (!std::isfinite(best.distance)) throw DataError("map format: degenerate lane polyline");
    return best;
}

LaneMap::LaneMap(std::vector<Lane> lanes) : lanes_(std::move(lanes)) {
    for (std::size_t i = 0; i < lanes_.size(); ++i) {
        const auto& l = lanes_[i];
        if (l.centerline.size() < 2) {
            throw DataError("map format: lane " + std::to_string(l.id) + " has fewer than 2 points");
        }
        if (!index_.emplace(l.id, i).second) {
            throw DataError("map format: duplicate lane id " + std::to_string(l.id));
        }
    }
    for (const auto& l : lanes_) {
        auto check = [&](std::optional<LaneId> other, bool left) {
            if (!other) return;
            const Lane* o = find(*other);
            if (!o) throw DataError("map format: lane " + std::to_string(l.id) + " references unknown lane " +
                                    std::to_string(*other));
            auto back = left ? o->right : o->left;
            if (back && *back != l.id) {
                throw DataError("map format: asymmetric adjacency between lanes " + std::to_string(l.id) + " and " +
                                std::to_string(*other));
            }
        };
        check(l.left, true);
        check(l.right, false);
        for (auto e : l.exits) {
            if (!find(e)) throw DataError("map format: lane " + std::to_string(l.id) + " exits to unknown lane " +
                                          std::to_string(e));
        }
    }
}

const Lane* LaneMap::find(LaneId id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &lanes_[it->second];
}

const Lane& LaneMap::lane(LaneId id) const {
    const Lane* l = find(id);
    if (!l) throw DataError("unknown lane id " + std::to_string(id));
    return *l;
}

bool LaneMap::is_neighbor(LaneId from, LaneId to) const {
    const Lane& l = lane(from);
    return (l.left && *l.left == to) || (l.right && *l.right == to);
}

LaneAssignment assign_lanes(const VehicleTrack& track, const LaneMap& map) {
    if (map.empty()) throw DataError("map format: no lanes");
    LaneAssignment out(track.samples.size());
    std::optional<LaneId> current;
    std::vector<const Lane*> candidates;
    for (std::size_t i = 0; i < track.samples.size(); ++i) {
        candidates.clear();
        if (current) {
            const Lane& cur = map.lane(*current);
            candidates.push_back(&cur);
            for (auto e : cur.exits) candidates.push_back(&map.lane(e));
            if (cur.left) candidates.push_back(&map.lane(*cur.left));
            if (cur.right) candidates.push_back(&map.lane(*cur.right));
        } else {
            for (const auto& l : map.lanes()) candidates.push_back(&l);
        }
        Point p = position(track.samples[i]);
        double best = std::numeric_limits<double>::infinity();
        const Lane* chosen = nullptr;
        // strict '<' keeps the current lane on exact ties
        for (const Lane* l : candidates) {
            double d = project(l->centerline, p).distance;
            if (d < best) {
                best = d;
                chosen = l;
            }
        }
        current = (chosen && best <= kAssignThreshold) ? std::optional<LaneId>(chosen->id) : std::nullopt;
        out[i] = current;
    }
    return out;
}

std::vector<Crossing> find_crossings(const LaneAssignment& assignment, const VehicleTrack& track,
                                     const LaneMap& map) {
    std::vector<Crossing> out;
    for (std::size_t i = 1; i < assignment.size(); ++i) {
        const auto& prev = assignment[i - 1];
        const auto& cur = assignment[i];
        if (!prev || !cur || *prev == *cur) continue;
        if (!map.is_neighbor(*prev, *cur)) continue;
        out.push_back({i, track.samples[i].time, *prev, *cur});
    }
    return out;
}

DetectionResult detect_lane_changes(const std::map<TrackId, LaneAssignment>& assignments, const LaneMap& map,
                                    const std::map<TrackId, VehicleTrack>& tracks) {
    DetectionResult result;
    for (const auto& [id, track] : tracks) {
        auto ait = assignments.find(id);
        if (ait == assignments.end()) continue;
        for (const auto& c : find_crossings(ait->second, track, map)) {
            auto reject = [&](const char* reason) { result.rejections.push_back({id, c.time, reason}); };
            const Lane& from = map.lane(c.from_lane);
            const Lane& to = map.lane(c.to_lane);
            if (from.interpolated || to.interpolated) {
                reject("interpolated");
                continue;
            }
            if (c.index < static_cast<std::size_t>(kHalfWindowSamples) ||
                c.index + kHalfWindowSamples >= track.samples.size()) {
                reject("window");
                continue;
            }
            std::span<const TrajectorySample> window(track.samples.data() + c.index - kHalfWindowSamples,
                                                     kWindowSamples);
            double h0 = circular_mean(window.first(kHeadingAverageSamples));
            double h1 = circular_mean(window.last(kHeadingAverageSamples));
            if (!(std::abs(wrap_angle(h1 - h0)) < kMaxHeadingChange)) {
                reject("heading");
                continue;
            }
            double mean_speed = 0.0;
            for (const auto& s : window) mean_speed += s.speed;
            mean_speed /= static_cast<double>(window.size());
            if (!(mean_speed < kMaxMeanSpeed)) {
                reject("speed");
                continue;
            }

            double own_arc = project(to.centerline, position(track.samples[c.index])).arc_length;
            std::optional<TrackId> lead;
            std::optional<TrackId> lag;
            double lead_gap = std::numeric_limits<double>::infinity();
            double lag_gap = std::numeric_limits<double>::infinity();
            for (const auto& [oid, other] : tracks) {
                if (oid == id) continue;
                auto oi = other.index_at(c.time);
                if (!oi) continue;
                auto oa = assignments.find(oid);
                if (oa == assignments.end() || !oa->second[*oi] || *oa->second[*oi] != c.to_lane) continue;
                double delta = project(to.centerline, position(other.samples[*oi])).arc_length - own_arc;
                if (delta > 0.0 && delta < lead_gap) {
                    lead_gap = delta;
                    lead = oid;
                } else if (delta < 0.0 && -delta < lag_gap) {
                    lag_gap = -delta;
                    lag = oid;
                }
            }
            if (!lead) {
                reject("no_lead");
                continue;
            }
            if (!lag) {
                reject("no_lag");
                continue;
            }
            auto covers = [&](TrackId tid) {
                const auto& t = tracks.at(tid);
                return t.index_at(c.time - kHalfWindow).has_value() && t.index_at(c.time + kHalfWindow).has_value();
            };
            if (!covers(*lead) || !covers(*lag)) {
                reject("window");
                continue;
            }
            result.candidates.push_back({id, *lead, *lag, c});
        }
    }
    return result;
}

Boundaries locate_boundaries(std::span<const TrajectorySample> window, const Lane& target, std::size_t crossing) {
    if (crossing >= window.size()) throw DataError("crossing index outside window");
    std::vector<double> d(window.size());
    for (std::size_t i = 0; i < window.size(); ++i) d[i] = project(target.centerline, position(window[i])).distance;

    Boundaries b;
    std::size_t j = crossing;
    while (j > 0 && d[j - 1] > d[j]) --j;
    b.start = j;
    j = crossing;
    while (j + 1 < window.size() && d[j + 1] < d[j]) ++j;
    b.end = j;
    b.fell_back_to_edge = (b.start == 0) || (b.end + 1 == window.size());
    b.start_time = window[b.start].time;
    b.end_time = window[b.end].time;
    return b;
}

// Periods: before = [0, start], during = [start, end], after = [end, last]; boundary samples are shared.
double speed_gain(std::span<const TrajectorySample> s, const Boundaries& b) {
    auto before = collect(s, 0, b.start, [](const auto& v) { return v.speed; });
    auto after = collect(s, b.end, s.size() - 1, [](const auto& v) { return v.speed; });
    return stats::mean(after) - stats::mean(before);
}

double lane_crossing_angle_deg(const TrajectorySample& s, const Point& lane_tangent) {
    Point v{std::cos(s.heading), std::sin(s.heading)};
    double cross = lane_tangent.x() * v.y() - lane_tangent.y() * v.x();
    double dot = lane_tangent.dot(v);
    return std::atan2(std::abs(cross), dot) * 180.0 / std::numbers::pi;
}

Features compute_features(const EventWindow& w, const Boundaries& b) {
    if (!w.target) throw DataError("event window without target lane");
    if (b.end < b.start + 1) throw DataError("during-LC period has fewer than 2 samples");
    std::span<const TrajectorySample> active(w.active);
    std::span<const TrajectorySample> passive(w.passive);
    const auto& lane = w.target->centerline;

    // lane-relative heading and lateral speed over the whole window
    std::vector<double> rel_heading(active.size());
    std::vector<double> lat_speed(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
        auto proj = project(lane, position(active[i]));
        double lane_heading = std::atan2(proj.tangent.y(), proj.tangent.x());
        rel_heading[i] = wrap_angle(active[i].heading - lane_heading);
        lat_speed[i] = active[i].speed * std::sin(rel_heading[i]);
    }
    std::vector<double> lat_accel(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) {
        std::size_t lo = i == 0 ? 0 : i - 1;
        std::size_t hi = std::min(i + 1, active.size() - 1);
        lat_accel[i] = (lat_speed[hi] - lat_speed[lo]) / (active[hi].time - active[lo].time);
    }

    Features f;
    auto speed = [](const auto& v) { return v.speed; };
    auto accel = [](const auto& v) { return v.accel; };
    auto yaw = [](const auto& v) { return v.yaw_rate; };
    double max_heading = 0.0;
    double max_lat_speed = 0.0;
    double max_lat_accel = 0.0;
    for (std::size_t i = b.start; i <= b.end; ++i) {
        max_heading = std::max(max_heading, std::abs(rel_heading[i]));
        max_lat_speed = std::max(max_lat_speed, std::abs(lat_speed[i]));
        max_lat_accel = std::max(max_lat_accel, std::abs(lat_accel[i]));
    }
    f.active[0] = b.end_time - b.start_time;
    f.active[1] = stats::population_std(collect(active, b.start, b.end, speed));
    f.active[2] = speed_gain(active, b);
    f.active[3] = max_heading;
    auto cross_proj = project(lane, position(active[w.crossing]));
    f.lane_crossing_angle = lane_crossing_angle_deg(active[w.crossing], cross_proj.tangent);
    f.active[4] = f.lane_crossing_angle;
    f.active[5] = stats::population_std(collect(active, b.start, b.end, yaw));
    f.active[6] = max_lat_speed;
    f.active[7] = max_lat_accel;
    f.active[8] = stats::population_std(collect(active, b.start, b.end, accel));
    f.active[9] = max_of(collect(active, b.start, b.end, accel));

    f.passive[0] = speed_gain(passive, b);
    f.passive[1] = max_of(collect(passive, b.start, b.end, accel));
    f.passive[2] = min_of(collect(passive, b.start, b.end, accel));
    f.passive[3] = stats::population_std(collect(passive, b.start, b.end, speed));
    return f;
}

StateVector compute_state(const EventWindow& w, const Boundaries& b) {
    if (!w.target) throw DataError("event window without target lane");
    if (b.start < 1) throw DataError("before-LC period has fewer than 2 samples");
    const auto& lane = w.target->centerline;
    std::size_t n = b.start + 1;
    std::vector<double> a_speed, a_accel, l_speed, l_accel, p_speed, p_accel, lead_gap, lag_gap, l_rel, p_rel;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = w.active[i];
        const auto& l = w.lead[i];
        const auto& p = w.passive[i];
        a_speed.push_back(a.speed);
        a_accel.push_back(a.accel);
        l_speed.push_back(l.speed);
        l_accel.push_back(l.accel);
        p_speed.push_back(p.speed);
        p_accel.push_back(p.accel);
        double sa = project(lane, position(a)).arc_length;
        double sl = project(lane, position(l)).arc_length;
        double sp = project(lane, position(p)).arc_length;
        lead_gap.push_back((sl - sa) / std::max(a.speed, kMinFollowerSpeed));
        lag_gap.push_back((sa - sp) / std::max(p.speed, kMinFollowerSpeed));
        l_rel.push_back(l.speed - a.speed);
        p_rel.push_back(p.speed - a.speed);
    }
    return {stats::mean(a_speed),  stats::population_std(a_speed), stats::mean(a_accel),
            stats::mean(lead_gap), stats::mean(l_rel),             stats::population_std(l_speed),
            stats::mean(l_accel),  stats::mean(lag_gap),           stats::mean(p_rel),
            stats::population_std(p_speed), stats::mean(p_accel)};
}

ExtractionResult extract_events(const std::map<TrackId, VehicleTrack>& tracks, const LaneMap& map) {
    std::map<TrackId, LaneAssignment> assignments;
    for (const auto& [id, t] : tracks) {
        t.validate();
        assignments.emplace(id, assign_lanes(t, map));
    }
    auto detected = detect_lane_changes(assignments, map, tracks);
    ExtractionResult out;
    out.rejections = std::move(detected.rejections);
    for (const auto& c : detected.candidates) {
        const auto& active = tracks.at(c.active_id);
        const auto& lead = tracks.at(c.lead_id);
        const auto& passive = tracks.at(c.passive_id);
        auto slice = [&](const VehicleTrack& t) {
            std::size_t first = *t.index_at(c.crossing.time - kHalfWindow);
            return std::vector<TrajectorySample>(t.samples.begin() + static_cast<std::ptrdiff_t>(first),
                                                 t.samples.begin() + static_cast<std::ptrdiff_t>(first + kWindowSamples));
        };
        EventWindow w{slice(active), slice(lead), slice(passive), &map.lane(c.crossing.to_lane), kHalfWindowSamples};
        auto b = locate_boundaries(w.active, *w.target, w.crossing);
        if (!(b.start < w.crossing && w.crossing < b.end)) {
            out.rejections.push_back({c.active_id, c.crossing.time, "boundary"});
            continue;
        }
        LaneChangeEvent e;
        try {
            auto f = compute_features(w, b);
            e.active_features = f.active;
            e.passive_features = f.passive;
            e.lane_crossing_angle = f.lane_crossing_angle;
        } catch (const DataError&) {
            out.rejections.push_back({c.active_id, c.crossing.time, "during_short"});
            continue;
        }
        try {
            e.state = compute_state(w, b);
        } catch (const DataError&) {
            out.rejections.push_back({c.active_id, c.crossing.time, "before_short"});
            continue;
        }
        e.event_id = static_cast<std::int64_t>(out.events.size());
        e.active_id = c.active_id;
        e.lead_id = c.lead_id;
        e.passive_id = c.passive_id;
        e.crossing_time = c.crossing.time;
        e.start_time = b.start_time;
        e.end_time = b.end_time;
        e.boundary_fallback = b.fell_back_to_edge;
        e.active_type = active.type;
        e.passive_type = passive.type;
        out.events.push_back(e);
    }
    return out;
}

StateScaler::StateScaler(std::array<double, kStateDim> means, std::array<double, kStateDim> stds)
    : means_(means), stds_(stds) {
    for (int j = 0; j < kStateDim; ++j) {
        if (!(stds_[j] > 0.0) || !std::isfinite(stds_[j]) || !std::isfinite(means_[j])) {
            throw DataError("invalid standardization for " + state_name(j));
        }
    }
}

StateScaler StateScaler::fit(std::span<const StateVector> states) {
    if (states.size() < 2) throw DataError("standardization needs at least 2 events");
    std::array<double, kStateDim> means{};
    std::array<double, kStateDim> stds{};
    for (int j = 0; j < kStateDim; ++j) {
        std::vector<double> col;
        col.reserve(states.size());
        for (const auto& s : states) col.push_back(s[j]);
        means[j] = stats::mean(col);
        stds[j] = stats::population_std(col);
        if (!(stds[j] > 1e-12 * (1.0 + std::abs(means[j])))) {
            throw DataError("state variable " + state_name(j) + " has zero variance");
        }
    }
    return StateScaler(means, stds);
}

Eigen::Matrix<double, kAugmentedDim, 1> StateScaler::transform(const StateVector& raw) const {
    Eigen::Matrix<double, kAugmentedDim, 1> out;
    out[0] = 1.0;
    for (int j = 0; j < kStateDim; ++j) out[j + 1] = (raw[j] - means_[j]) / stds_[j];
    return out;
}

StateVector StateScaler::inverse(const Eigen::Matrix<double, kAugmentedDim, 1>& augmented) const {
    StateVector out{};
    for (int j = 0; j < kStateDim; ++j) out[j] = augmented[j + 1] * stds_[j] + means_[j];
    return out;
}

std::string state_name(int i) { return "s" + std::to_string(i + 1); }

}  // namespace lanegame::trajectory
