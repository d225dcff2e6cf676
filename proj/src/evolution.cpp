#include "lanegame/evolution.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "lanegame/io.hpp"
#include "lanegame/stats.hpp"

namespace lanegame::evolution {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

std::string csv_real(double v) { return std::isfinite(v) ? format_real(v) : std::string(); }

}  // namespace

void SimConfig::validate() const {
    if (width < 1 || height < 1) throw DataError(fmt::format("grid must be at least 1x1, got {}x{}", width, height));
    if (!in_unit(mpr)) throw DataError(fmt::format("mpr must lie in [0, 1], got {}", mpr));
    if (neighbor_size < 1) throw DataError(fmt::format("neighbor size must be >= 1, got {}", neighbor_size));
    if (!(noise_k > 0.0) || !std::isfinite(noise_k)) {
        throw DataError(fmt::format("noise parameter K must be > 0, got {}", noise_k));
    }
    if (!in_unit(contact_freq)) throw DataError(fmt::format("contact frequency must lie in [0, 1], got {}", contact_freq));
    if (steps < 0) throw DataError(fmt::format("steps must be >= 0, got {}", steps));
    if (reps < 1) throw DataError(fmt::format("reps must be >= 1, got {}", reps));
    if (!in_unit(init_coop_av) || !in_unit(init_coop_hdv)) throw DataError("initial cooperation shares must lie in [0, 1]");
}

int SimConfig::shuffle_period() const {
    if (contact_freq <= 0.0) return 0;
    return std::max(1, static_cast<int>(std::lround(1.0 / contact_freq)));
}

nlohmann::json to_json(const SimConfig& c) {
    return {{"width", c.width},
            {"height", c.height},
            {"mpr", c.mpr},
            {"neighbor_size", c.neighbor_size},
            {"noise_k", c.noise_k},
            {"contact_freq", c.contact_freq},
            {"steps", c.steps},
            {"reps", c.reps},
            {"init_coop", {{"AV", c.init_coop_av}, {"HDV", c.init_coop_hdv}}},
            {"seed", c.seed}};
}

Grid init_grid(const SimConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    Grid g;
    g.width = cfg.width;
    g.height = cfg.height;
    int n = cfg.width * cfg.height;
    int n_av = static_cast<int>(std::lround(cfg.mpr * n));
    g.cells.assign(n, Agent{});
    for (int i = 0; i < n_av; ++i) g.cells[i].vtype = VehicleType::AV;
    std::shuffle(g.cells.begin(), g.cells.end(), rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& a : g.cells) {
        double p = a.vtype == VehicleType::AV ? cfg.init_coop_av : cfg.init_coop_hdv;
        a.strategy = u(rng) < p ? Strategy::C : Strategy::D;
    }
    return g;
}

std::vector<int> neighbors(int width, int height, int cell, int radius) {
    if (radius < 1) throw DataError(fmt::format("neighbor radius must be >= 1, got {}", radius));
    int x0 = cell % width;
    int y0 = cell / width;
    std::set<int> found;
    for (int dy = -radius; dy <= radius; ++dy) {
        int span = radius - std::abs(dy);
        for (int dx = -span; dx <= span; ++dx) {
            if (dx == 0 && dy == 0) continue;
            int x = ((x0 + dx) % width + width) % width;
            int y = ((y0 + dy) % height + height) % height;
            int c = y * width + x;
            if (c != cell) found.insert(c);  // small tori wrap onto self or repeat cells
        }
    }
    return {found.begin(), found.end()};
}

std::vector<std::vector<int>> neighbor_lists(int width, int height, int radius) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(width) * height);
    for (int c = 0; c < width * height; ++c) out[c] = neighbors(width, height, c, radius);
    return out;
}

std::vector<double> play_round(const Grid& grid, const std::vector<std::vector<int>>& nbrs,
                               const std::array<payoff::PayoffTable, payoff::kPairCount>& tables) {
    std::vector<double> e(grid.cells.size(), 0.0);
    for (std::size_t x = 0; x < grid.cells.size(); ++x) {
        const auto& me = grid.cells[x];
        if (nbrs[x].empty()) continue;
        double sum = 0.0;
        for (int y : nbrs[x]) {
            const auto& other = grid.cells[y];
            // once as the lane changer, once as the lag vehicle
            sum += tables[payoff::pair_code(me.vtype, other.vtype)].get(make_outcome(me.strategy, other.strategy),
                                                                        Role::Active);
            sum += tables[payoff::pair_code(other.vtype, me.vtype)].get(make_outcome(other.strategy, me.strategy),
                                                                        Role::Passive);
        }
        e[x] = sum / (2.0 * static_cast<double>(nbrs[x].size()));
    }
    return e;
}

double fermi(double e_x, double e_y, double k) {
    if (!(k > 0.0)) throw DataError(fmt::format("noise parameter K must be > 0, got {}", k));
    return 1.0 / (1.0 + std::exp(-(e_y - e_x) / k));
}

Fractions cooperation(const Grid& grid) {
    std::array<int, 2> coop{}, count{};
    for (const auto& a : grid.cells) {
        int t = static_cast<int>(a.vtype);
        ++count[t];
        if (a.strategy == Strategy::C) ++coop[t];
    }
    auto share = [](int c, int n) { return n ? static_cast<double>(c) / n : kNaN; };
    Fractions f;
    f.all = share(coop[0] + coop[1], count[0] + count[1]);
    f.av = share(coop[0], count[0]);
    f.hdv = share(coop[1], count[1]);
    return f;
}

bool shuffle_due(int step, int period) { return period > 0 && step > 0 && step % period == 0; }

void shuffle_grid(Grid& grid, std::mt19937_64& rng) { std::shuffle(grid.cells.begin(), grid.cells.end(), rng); }

void step(Grid& grid, const std::vector<std::vector<int>>& nbrs, std::span<const payoff::StateGames> pool,
          double noise_k, std::mt19937_64& rng) {
    if (pool.empty()) throw DataError("state pool is empty");
    std::uniform_int_distribution<std::size_t> pick_state(0, pool.size() - 1);
    const auto& games = pool[pick_state(rng)];
    auto e = play_round(grid, nbrs, games.tables);
    const auto before = grid.cells;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> same;
    for (std::size_t x = 0; x < before.size(); ++x) {
        same.clear();
        for (int y : nbrs[x]) {
            if (before[y].vtype == before[x].vtype) same.push_back(y);
        }
        if (same.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick(0, same.size() - 1);
        int y = same[pick(rng)];
        if (u(rng) < fermi(e[x], e[y], noise_k)) grid.cells[x].strategy = before[y].strategy;
    }
}

RunSeries run(const SimConfig& cfg, std::span<const payoff::StateGames> pool) {
    cfg.validate();
    if (pool.empty() && cfg.steps > 0) throw DataError("state pool is empty");
    std::mt19937_64 rng(cfg.seed);
    RunSeries r;
    r.seed = cfg.seed;
    Grid g = init_grid(cfg, rng);
    auto nbrs = neighbor_lists(cfg.width, cfg.height, cfg.neighbor_size);
    int period = cfg.shuffle_period();
    r.series.reserve(cfg.steps + 1);
    r.series.push_back(cooperation(g));
    for (int s = 1; s <= cfg.steps; ++s) {
        if (shuffle_due(s, period)) shuffle_grid(g, rng);
        step(g, nbrs, pool, cfg.noise_k, rng);
        r.series.push_back(cooperation(g));
    }
    return r;
}

std::vector<SimConfig> sweep_grid(const SimConfig& base, std::span<const int> neighbor_sizes,
                                  std::span<const double> noise_ks, std::span<const double> mprs,
                                  std::span<const double> contact_freqs) {
    std::vector<SimConfig> out;
    for (int n : neighbor_sizes) {
        for (double k : noise_ks) {
            for (double m : mprs) {
                for (double f : contact_freqs) {
                    SimConfig c = base;
                    c.neighbor_size = n;
                    c.noise_k = k;
                    c.mpr = m;
                    c.contact_freq = f;
                    c.validate();
                    out.push_back(c);
                }
            }
        }
    }
    return out;
}

BoxStats box_stats(std::vector<double> values) {
    std::erase_if(values, [](double v) { return !std::isfinite(v); });
    if (values.empty()) return {kNaN, kNaN, kNaN, kNaN, kNaN};
    std::sort(values.begin(), values.end());
    // linear interpolation between order statistics
    auto q = [&values](double p) {
        double pos = p * static_cast<double>(values.size() - 1);
        auto lo = static_cast<std::size_t>(std::floor(pos));
        std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {values.front(), q(0.25), q(0.5), q(0.75), values.back()};
}

Band t_band(std::span<const double> values) {
    std::vector<double> v;
    for (double x : values) {
        if (std::isfinite(x)) v.push_back(x);
    }
    if (v.empty()) return {kNaN, kNaN, kNaN};
    double m = stats::mean(v);
    if (v.size() < 2) return {m, m, m};
    double half = stats::t_critical(0.05, static_cast<double>(v.size() - 1)) * stats::sample_std(v) /
                  std::sqrt(static_cast<double>(v.size()));
    return {m, m - half, m + half};
}

std::vector<ConfigRecord> run_sweep(std::span<const SimConfig> configs, std::span<const payoff::StateGames> pool,
                                    std::uint64_t master_seed, int threads) {
    std::vector<ConfigRecord> records(configs.size());
    struct Job {
        std::size_t config;
        int rep;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        configs[c].validate();
        records[c].config_id = static_cast<int>(c);
        records[c].config = configs[c];
        records[c].config.seed = derive_seed(master_seed, fmt::format("sim/config{}", c));
        records[c].reps.resize(configs[c].reps);
        for (int r = 0; r < configs[c].reps; ++r) jobs.push_back({c, r});
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            auto [c, r] = jobs[j];
            SimConfig cfg = configs[c];
            cfg.seed = derive_seed(records[c].config.seed, fmt::format("rep{}", r));
            records[c].reps[r] = run(cfg, pool);
        }
    };
    int n_threads = std::max(1, threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool_threads;
        for (int t = 0; t < n_threads; ++t) pool_threads.emplace_back(worker);
    }

    for (auto& rec : records) {
        int steps = rec.config.steps;
        rec.bands.resize(steps + 1);
        std::vector<double> all(rec.reps.size()), av(rec.reps.size()), hdv(rec.reps.size());
        for (int s = 0; s <= steps; ++s) {
            for (std::size_t r = 0; r < rec.reps.size(); ++r) {
                all[r] = rec.reps[r].series[s].all;
                av[r] = rec.reps[r].series[s].av;
                hdv[r] = rec.reps[r].series[s].hdv;
            }
            rec.bands[s] = {t_band(all), t_band(av), t_band(hdv)};
        }
        rec.final_box = {box_stats(all), box_stats(av), box_stats(hdv)};
    }
    return records;
}

nlohmann::json to_json(const ConfigRecord& r) {
    nlohmann::json j;
    j["config_id"] = r.config_id;
    j["config"] = to_json(r.config);
    auto box = [](const BoxStats& b) {
        return nlohmann::json{{"min", b.min}, {"q1", b.q1}, {"median", b.median}, {"q3", b.q3}, {"max", b.max}};
    };
    j["final"] = {{"all", box(r.final_box[0])}, {"av", box(r.final_box[1])}, {"hdv", box(r.final_box[2])}};
    const char* names[] = {"all", "av", "hdv"};
    for (int k = 0; k < 3; ++k) {
        nlohmann::json mean = nlohmann::json::array(), lo = nlohmann::json::array(), hi = nlohmann::json::array();
        for (const auto& b : r.bands) {
            mean.push_back(b[k].mean);
            lo.push_back(b[k].lo);
            hi.push_back(b[k].hi);
        }
        j["bands"][names[k]] = {{"mean", mean}, {"lo", lo}, {"hi", hi}};
    }
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rep : r.reps) {
        const auto& f = rep.series.back();
        reps.push_back({{"seed", rep.seed}, {"final", {{"all", f.all}, {"av", f.av}, {"hdv", f.hdv}}}});
    }
    j["reps"] = reps;
    return j;
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const ConfigRecord> records) {
    std::ostringstream out;
    out << "config_id,rep,step,coop_all,coop_av,coop_hdv\n";
    for (const auto& rec : records) {
        for (std::size_t r = 0; r < rec.reps.size(); ++r) {
            const auto& series = rec.reps[r].series;
            for (std::size_t s = 0; s < series.size(); ++s) {
                out << rec.config_id << ',' << r << ',' << s << ',' << csv_real(series[s].all) << ','
                    << csv_real(series[s].av) << ',' << csv_real(series[s].hdv) << '\n';
            }
        }
    }
    write_text_file(path, out.str());
}

void write_sweep_json(const std::filesystem::path& path, std::span<const ConfigRecord> records) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : records) j.push_back(to_json(r));
    write_text_file(path, j.dump(1) + "\n");
}

}  // namespace lanegame::evolution
