#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>

#include "lanegame/trajectory.hpp"

namespace fixtures {

using namespace lanegame;
using namespace lanegame::trajectory;

// Two straight lanes along +x: lane 1 at y = 0 (right), lane 2 at y = width (left).
inline LaneMap two_lane_map(double width = 3.6, bool interpolated = false) {
    std::vector<Lane> lanes(2);
    for (int k = 0; k < 2; ++k) {
        lanes[k].id = k + 1;
        lanes[k].interpolated = interpolated;
        for (double x = -200.0; x <= 1000.0; x += 50.0) lanes[k].centerline.emplace_back(x, k * width);
    }
    lanes[0].left = 2;
    lanes[1].right = 1;
    return LaneMap(std::move(lanes));
}

struct Motion {
    std::function<double(double)> x;
    std::function<double(double)> y;
    std::function<double(double)> speed;
    std::function<double(double)> heading = [](double) { return 0.0; };
    std::function<double(double)> accel = [](double) { return 0.0; };
};

// Samples at t = i / 10 for i in [0, n).
inline VehicleTrack make_track(TrackId id, VehicleType type, const Motion& m, int n = 151) {
    VehicleTrack t;
    t.id = id;
    t.type = type;
    for (int i = 0; i < n; ++i) {
        double time = i / 10.0;
        t.samples.push_back({time, m.x(time), m.y(time), m.heading(time), m.speed(time), m.accel(time), 0.0});
    }
    return t;
}

// Dense point sampling of a polyline; independent of the segment projection.
inline double brute_force_distance(const std::vector<Point>& poly, const Point& p, double step = 0.005) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
        Point a = poly[i];
        Point b = poly[i + 1];
        int k = static_cast<int>(std::ceil((b - a).norm() / step));
        for (int j = 0; j <= k; ++j) {
            Point q = a + (b - a) * (static_cast<double>(j) / k);
            best = std::min(best, (q - p).norm());
        }
    }
    return best;
}

// Active changes from lane 1 to lane 2 with lateral position y(t); lead and lag travel in lane 2.
inline std::map<TrackId, VehicleTrack> lane_change_fixture(std::function<double(double)> y,
                                                           std::function<double(double)> heading,
                                                           double speed = 12.0, double width = 3.6) {
    std::map<TrackId, VehicleTrack> tracks;
    tracks[1] = make_track(1, VehicleType::HDV,
                           {[=](double t) { return speed * t; }, y, [=](double) { return speed; }, heading});
    tracks[2] = make_track(2, VehicleType::AV,
                           {[=](double t) { return 30.0 + speed * t; }, [=](double) { return width; },
                            [=](double) { return speed; }});
    tracks[3] = make_track(3, VehicleType::HDV,
                           {[=](double t) { return -25.0 + speed * t; }, [=](double) { return width; },
                            [=](double) { return speed; }});
    return tracks;
}

}  // namespace fixtures
