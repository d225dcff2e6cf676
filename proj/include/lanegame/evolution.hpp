#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

#include "lanegame/payoff.hpp"
#include "lanegame/types.hpp"

namespace lanegame::evolution {

struct Agent {
    Strategy strategy = Strategy::D;
    VehicleType vtype = VehicleType::HDV;

    bool operator==(const Agent&) const = default;
};

struct SimConfig {
    int width = 20;
    int height = 20;
    double mpr = 0.5;
    int neighbor_size = 2;  // Manhattan radius
    double noise_k = 2.0;
    double contact_freq = 0.0;  // shuffles per step
    int steps = 200;
    int reps = 20;
    double init_coop_av = 0.51;
    double init_coop_hdv = 0.42;
    std::uint64_t seed = 0;

    // Throws DataError on out-of-range fields.
    void validate() const;
    // 0 when never shuffling, else round(1 / contact_freq).
    int shuffle_period() const;
};

nlohmann::json to_json(const SimConfig& c);

struct Grid {
    int width = 0;
    int height = 0;
    std::vector<Agent> cells;  // row-major

    int index(int x, int y) const { return y * width + x; }
};

Grid init_grid(const SimConfig& cfg, std::mt19937_64& rng);

// Cells at toroidal Manhattan distance 1..radius, self excluded, each listed once.
std::vector<int> neighbors(int width, int height, int cell, int radius);
std::vector<std::vector<int>> neighbor_lists(int width, int height, int radius);

// Mean payoff of every agent over both roles against every neighbor.
std::vector<double> play_round(const Grid& grid, const std::vector<std::vector<int>>& nbrs,
                               const std::array<payoff::PayoffTable, payoff::kPairCount>& tables);

// Probability that X adopts Y's strategy. Throws DataError when k <= 0.
double fermi(double e_x, double e_y, double k);

struct Fractions {
    double all = 0.0;
    double av = 0.0;   // NaN without AVs
    double hdv = 0.0;  // NaN without HDVs
};

Fractions cooperation(const Grid& grid);

bool shuffle_due(int step, int period);
void shuffle_grid(Grid& grid, std::mt19937_64& rng);

// One synchronous imitation step against a state drawn uniformly from the pool.
void step(Grid& grid, const std::vector<std::vector<int>>& nbrs, std::span<const payoff::StateGames> pool,
          double noise_k, std::mt19937_64& rng);

struct RunSeries {
    std::uint64_t seed = 0;
    std::vector<Fractions> series;  // steps + 1 entries, initial first
};

// Single replication with cfg.seed.
RunSeries run(const SimConfig& cfg, std::span<const payoff::StateGames> pool);

struct Band {
    double mean = 0.0;
    double lo = 0.0;  // 95% t interval
    double hi = 0.0;
};

struct BoxStats {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

struct ConfigRecord {
    int config_id = 0;
    SimConfig config;
    std::vector<RunSeries> reps;
    std::vector<std::array<Band, 3>> bands;  // per step: all, av, hdv
    std::array<BoxStats, 3> final_box{};     // all, av, hdv over reps at the last step
};

// Grid over the four swept parameters; other fields copied from base. Order: neighbor, K, mpr, contact.
std::vector<SimConfig> sweep_grid(const SimConfig& base, std::span<const int> neighbor_sizes,
                                  std::span<const double> noise_ks, std::span<const double> mprs,
                                  std::span<const double> contact_freqs);

// Rep seeds are derived from master_seed, config index and rep index; threads only affects speed.
std::vector<ConfigRecord> run_sweep(std::span<const SimConfig> configs, std::span<const payoff::StateGames> pool,
                                    std::uint64_t master_seed, int threads = 1);

BoxStats box_stats(std::vector<double> values);
Band t_band(std::span<const double> values);

nlohmann::json to_json(const ConfigRecord& r);
void write_sweep_csv(const std::filesystem::path& path, std::span<const ConfigRecord> records);
void write_sweep_json(const std::filesystem::path& path, std::span<const ConfigRecord> records);

}  // namespace lanegame::evolution
