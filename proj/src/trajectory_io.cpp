#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lanegame/io.hpp"
#include "lanegame/trajectory.hpp"

namespace lanegame::trajectory {

namespace {

std::optional<std::int64_t> optional_id(const CsvReader& r, std::string_view col) {
    if (r.field(col).empty()) return std::nullopt;
    return r.integer(col);
}

bool parse_flag(const CsvReader& r, std::string_view col) {
    const auto& f = r.field(col);
    if (f == "1" || f == "true" || f == "True") return true;
    if (f == "0" || f == "false" || f == "False" || f.empty()) return false;
    r.fail("column '" + std::string(col) + "': expected 0/1, got '" + f + "'");
}

const std::vector<std::string> kEventColumns = [] {
    std::vector<std::string> c{"event_id",    "active_id",  "lead_id",           "passive_id",   "crossing_time",
                               "start_time",  "end_time",   "boundary_fallback", "active_type",  "passive_type",
                               "lane_crossing_angle"};
    for (int i = 1; i <= kActiveFeatures; ++i) c.push_back("xa" + std::to_string(i));
    for (int i = 1; i <= kPassiveFeatures; ++i) c.push_back("xp" + std::to_string(i));
    for (int i = 0; i < kStateDim; ++i) c.push_back(state_name(i));
    return c;
}();

}  // namespace

std::map<TrackId, VehicleTrack> read_tracks_csv(const std::filesystem::path& path) {
    CsvReader r(path);
    r.require_columns({"track_id", "time", "x", "y", "heading", "speed", "accel", "yaw_rate", "vtype"});
    std::map<TrackId, VehicleTrack> tracks;
    while (r.next()) {
        TrackId id = r.integer("track_id");
        VehicleType type;
        try {
            type = parse_vehicle_type(r.field("vtype"));
        } catch (const DataError& e) {
            r.fail(e.what());
        }
        auto [it, inserted] = tracks.try_emplace(id);
        auto& t = it->second;
        if (inserted) {
            t.id = id;
            t.type = type;
        } else if (t.type != type) {
            r.fail("track " + std::to_string(id) + " changes vehicle type");
        }
        TrajectorySample s{r.real("time"),  r.real("x"),     r.real("y"),       r.real("heading"),
                           r.real("speed"), r.real("accel"), r.real("yaw_rate")};
        if (!t.samples.empty() && !(s.time > t.samples.back().time)) {
            r.fail("track " + std::to_string(id) + ": time not strictly increasing");
        }
        t.samples.push_back(s);
    }
    for (const auto& [id, t] : tracks) t.validate();
    return tracks;
}

LaneMap read_map_csv(const std::filesystem::path& path) {
    CsvReader r(path);
    r.require_columns({"lane_id", "seq", "x", "y", "left_id", "right_id", "exit_ids", "interpolated"});
    struct Pending {
        Lane lane;
        std::vector<std::pair<std::int64_t, Point>> points;
    };
    std::map<LaneId, Pending> lanes;
    while (r.next()) {
        LaneId id = r.integer("lane_id");
        std::vector<LaneId> exits;
        for (const auto& e : split(r.field("exit_ids"), ';')) {
            if (e.empty()) continue;
            try {
                exits.push_back(std::stoll(e));
            } catch (const std::exception&) {
                r.fail("bad exit id '" + e + "'");
            }
        }
        auto left = optional_id(r, "left_id");
        auto right = optional_id(r, "right_id");
        bool interp = parse_flag(r, "interpolated");
        auto [it, inserted] = lanes.try_emplace(id);
        auto& p = it->second;
        if (inserted) {
            p.lane.id = id;
            p.lane.left = left;
            p.lane.right = right;
            p.lane.exits = exits;
            p.lane.interpolated = interp;
        } else if (p.lane.left != left || p.lane.right != right || p.lane.exits != exits ||
                   p.lane.interpolated != interp) {
            r.fail("lane " + std::to_string(id) + ": inconsistent attributes across rows");
        }
        p.points.emplace_back(r.integer("seq"), Point{r.real("x"), r.real("y")});
    }
    std::vector<Lane> out;
    for (auto& [id, p] : lanes) {
        std::stable_sort(p.points.begin(), p.points.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [seq, pt] : p.points) p.lane.centerline.push_back(pt);
        out.push_back(std::move(p.lane));
    }
    return LaneMap(std::move(out));
}

void write_tracks_csv(const std::filesystem::path& path, const std::map<TrackId, VehicleTrack>& tracks) {
    std::ostringstream os;
    os << "track_id,time,x,y,heading,speed,accel,yaw_rate,vtype\n";
    for (const auto& [id, t] : tracks) {
        for (const auto& s : t.samples) {
            os << id << ',' << format_real(s.time) << ',' << format_real(s.x) << ',' << format_real(s.y) << ','
               << format_real(s.heading) << ',' << format_real(s.speed) << ',' << format_real(s.accel) << ','
               << format_real(s.yaw_rate) << ',' << to_string(t.type) << '\n';
        }
    }
    write_text_file(path, os.str());
}

void write_map_csv(const std::filesystem::path& path, const LaneMap& map) {
    std::ostringstream os;
    os << "lane_id,seq,x,y,left_id,right_id,exit_ids,interpolated\n";
    for (const auto& l : map.lanes()) {
        std::string exits;
        for (std::size_t i = 0; i < l.exits.size(); ++i) exits += (i ? ";" : "") + std::to_string(l.exits[i]);
        for (std::size_t i = 0; i < l.centerline.size(); ++i) {
            os << l.id << ',' << i << ',' << format_real(l.centerline[i].x()) << ','
               << format_real(l.centerline[i].y()) << ',' << (l.left ? std::to_string(*l.left) : "") << ','
               << (l.right ? std::to_string(*l.right) : "") << ',' << exits << ',' << (l.interpolated ? 1 : 0)
               << '\n';
        }
    }
    write_text_file(path, os.str());
}

void write_events_csv(const std::filesystem::path& path, std::span<const LaneChangeEvent> events) {
    bool labeled = std::any_of(events.begin(), events.end(), [](const auto& e) { return e.outcome.has_value(); });
    std::ostringstream os;
    for (std::size_t i = 0; i < kEventColumns.size(); ++i) os << (i ? "," : "") << kEventColumns[i];
    if (labeled) os << ",active_label,passive_label,outcome";
    os << '\n';
    auto real = [](double v) { return std::isnan(v) ? std::string() : format_real(v); };
    for (const auto& e : events) {
        os << e.event_id << ',' << e.active_id << ',' << e.lead_id << ',' << e.passive_id << ','
           << format_real(e.crossing_time) << ',' << format_real(e.start_time) << ',' << format_real(e.end_time)
           << ',' << (e.boundary_fallback ? 1 : 0) << ',' << to_string(e.active_type) << ','
           << to_string(e.passive_type) << ',' << real(e.lane_crossing_angle);
        for (double v : e.active_features) os << ',' << real(v);
        for (double v : e.passive_features) os << ',' << real(v);
        for (double v : e.state) os << ',' << format_real(v);
        if (labeled) {
            os << ',' << (e.active_label ? to_string(*e.active_label) : "") << ','
               << (e.passive_label ? to_string(*e.passive_label) : "") << ','
               << (e.outcome ? to_string(*e.outcome) : "");
        }
        os << '\n';
    }
    write_text_file(path, os.str());
}

std::vector<LaneChangeEvent> read_events_csv(const std::filesystem::path& path) {
    CsvReader r(path);
    r.require_columns(kEventColumns);
    bool labeled = r.has_column("outcome");
    std::vector<LaneChangeEvent> out;
    while (r.next()) {
        LaneChangeEvent e;
        try {
            e.event_id = r.integer("event_id");
            e.active_id = r.integer("active_id");
            e.lead_id = r.integer("lead_id");
            e.passive_id = r.integer("passive_id");
            e.crossing_time = r.real("crossing_time");
            e.start_time = r.real("start_time");
            e.end_time = r.real("end_time");
            e.boundary_fallback = parse_flag(r, "boundary_fallback");
            e.active_type = parse_vehicle_type(r.field("active_type"));
            e.passive_type = parse_vehicle_type(r.field("passive_type"));
            e.lane_crossing_angle = r.real_or_nan("lane_crossing_angle");
            for (int i = 0; i < kActiveFeatures; ++i) e.active_features[i] = r.real_or_nan("xa" + std::to_string(i + 1));
            for (int i = 0; i < kPassiveFeatures; ++i) e.passive_features[i] = r.real_or_nan("xp" + std::to_string(i + 1));
            for (int i = 0; i < kStateDim; ++i) e.state[i] = r.real(state_name(i));
            if (labeled && !r.field("outcome").empty()) {
                e.outcome = parse_outcome(r.field("outcome"));
                e.active_label = active_choice(*e.outcome);
                e.passive_label = passive_choice(*e.outcome);
            }
        } catch (const DataError& err) {
            if (std::string_view(err.what()).find(path.string()) == 0) throw;
            r.fail(err.what());
        }
        out.push_back(e);
    }
    return out;
}

void write_rejections_csv(const std::filesystem::path& path, std::span<const Rejection> rejections) {
    std::ostringstream os;
    os << "track_id,time,reason\n";
    for (const auto& r : rejections) os << r.track_id << ',' << format_real(r.time) << ',' << r.reason << '\n';
    write_text_file(path, os.str());
}

Scene make_scene(const SceneConfig& cfg) {
    Scene scene;
    const double w = cfg.lane_width;
    std::vector<Lane> lanes(2);
    for (int k = 0; k < 2; ++k) {
        lanes[k].id = k + 1;
        for (double x = -500.0; x <= 3000.0; x += 100.0) lanes[k].centerline.emplace_back(x, k * w);
    }
    lanes[0].left = 2;
    lanes[1].right = 1;
    scene.map = LaneMap(std::move(lanes));

    std::mt19937_64 rng(cfg.seed);
    auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };

    constexpr int kSamples = 201;
    for (int k = 0; k < cfg.events; ++k) {
        const long long base_step = 300LL * k;
        const double v0 = uni(8.0, 16.0);
        const bool active_coop = coin(0.5);
        const bool passive_coop = coin(0.5);
        const double lc_start = 6.0 + uni(0.0, 1.0);
        const double lc_dur = active_coop ? uni(4.0, 6.0) : uni(2.5, 4.0);

        struct Profile {
            double x0, v0, a_base, a_lc, lane_y;
        };
        Profile active{0.0, v0, uni(-0.3, 0.3), active_coop ? uni(-0.3, 0.1) : uni(0.2, 0.6), 0.0};
        Profile lead{uni(25.0, 40.0), v0 + uni(0.0, 3.0), uni(-0.1, 0.3), uni(-0.1, 0.3), w};
        Profile lag{-uni(18.0, 35.0), v0 + uni(-2.0, 0.5), uni(-0.2, 0.2),
                    passive_coop ? -uni(0.5, 2.0) : uni(0.2, 0.8), w};

        auto build = [&](TrackId id, VehicleType type, const Profile& p, bool changes_lane) {
            VehicleTrack t;
            t.id = id;
            t.type = type;
            double x = p.x0;
            double v = p.v0;
            std::vector<double> heading(kSamples);
            for (int i = 0; i < kSamples; ++i) {
                double tl = i * kSamplePeriod;
                double a = (tl >= lc_start - 1.0 && tl <= lc_start + lc_dur) ? p.a_lc : p.a_base;
                if (v <= 0.5 && a < 0.0) a = 0.0;
                double y = p.lane_y;
                double vy = 0.0;
                if (changes_lane) {
                    double u = std::clamp((tl - lc_start) / lc_dur, 0.0, 1.0);
                    y = w * (1.0 - std::cos(std::numbers::pi * u)) / 2.0;
                    if (u > 0.0 && u < 1.0) vy = w * std::numbers::pi / (2.0 * lc_dur) * std::sin(std::numbers::pi * u);
                }
                TrajectorySample s;
                s.time = static_cast<double>(base_step + i) * kSamplePeriod;
                s.x = x;
                s.y = y;
                s.heading = std::atan2(vy, v);
                s.speed = std::hypot(v, vy);
                s.accel = a;
                heading[i] = s.heading;
                t.samples.push_back(s);
                x += v * kSamplePeriod + 0.5 * a * kSamplePeriod * kSamplePeriod;
                v = std::max(0.0, v + a * kSamplePeriod);
            }
            for (int i = 0; i < kSamples; ++i) {
                int lo = std::max(0, i - 1);
                int hi = std::min(kSamples - 1, i + 1);
                t.samples[i].yaw_rate = (heading[hi] - heading[lo]) / ((hi - lo) * kSamplePeriod);
            }
            return t;
        };

        VehicleType active_type = coin(cfg.av_fraction) ? VehicleType::AV : VehicleType::HDV;
        VehicleType passive_type = coin(cfg.av_fraction) ? VehicleType::AV : VehicleType::HDV;
        if (active_type == VehicleType::AV) passive_type = VehicleType::HDV;
        VehicleType lead_type = coin(cfg.av_fraction) ? VehicleType::AV : VehicleType::HDV;

        TrackId id0 = 10 * k + 1;
        scene.tracks.emplace(id0, build(id0, active_type, active, true));
        scene.tracks.emplace(id0 + 1, build(id0 + 1, lead_type, lead, false));
        scene.tracks.emplace(id0 + 2, build(id0 + 2, passive_type, lag, false));
    }
    return scene;
}

}  // namespace lanegame::trajectory
