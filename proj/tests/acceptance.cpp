// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/QR>
#include <fmt/format.h>

#include "fixtures.hpp"
#include "golden.hpp"
#include "lanegame/clustering.hpp"
#include "lanegame/evolution.hpp"
#include "lanegame/payoff.hpp"
#include "lanegame/pipeline.hpp"
#include "lanegame/qre.hpp"
#include "lanegame/stats.hpp"

using namespace lanegame;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, std::string what) {
        if (!ok) pass = false;
        notes.push_back(fmt::format("{} {}", ok ? "ok  " : "FAIL", what));
    }
    void info(std::string what) { notes.push_back("     " + what); }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// QRE recovery on 50,000 synthetic events.
Verdict qre_recovery() {
    Verdict v;
    const double lambda_star[6] = {1.8228, 1.5426, 1.2267, 2.1848, 2.3476, 1.8667};
    qre::SyntheticConfig cfg;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> z(0.0, 0.4);
    for (int i = 0; i < qre::kBetaCount; ++i) cfg.theta_star.theta[i] = z(rng);
    for (int i = 0; i < qre::kLambdaCount; ++i) cfg.theta_star.theta[qre::kBetaCount + i] = lambda_star[i];
    cfg.n = 50000;
    cfg.seed = 7;
    const auto& truth = cfg.theta_star.theta;

    auto t0 = std::chrono::steady_clock::now();
    auto events = qre::generate_synthetic(cfg);
    std::vector<trajectory::StateVector> states;
    for (const auto& e : events) states.push_back(e.state);
    auto scaler = trajectory::StateScaler::fit(states);
    auto obs = qre::make_observations(events, scaler);
    qre::UtilityModel m;
    try {
        m = qre::fit(obs, scaler);
    } catch (const qre::FitError& e) {
        v.info(fmt::format("optimizer stopped early: {}", e.what()));
        m = e.best;
    }
    double secs = seconds_since(t0);
    v.require(secs < 600.0, fmt::format("runtime {:.1f} s (limit 600 s)", secs));

    double worst_lambda = 0.0;
    for (int i = 0; i < qre::kLambdaCount; ++i) {
        double rel = std::abs(m.theta[qre::kBetaCount + i] - lambda_star[i]) / lambda_star[i];
        worst_lambda = std::max(worst_lambda, rel);
    }
    v.require(worst_lambda < 0.10, fmt::format("worst lambda relative error {:.3f} (limit 0.10)", worst_lambda));

    int blocks = 0;
    double worst_cos = 1.0;
    for (int b = 0; b < qre::kBetaCount / 12; ++b) {
        Eigen::VectorXd t = truth.segment(b * 12, 12);
        Eigen::VectorXd f = m.theta.segment(b * 12, 12);
        if (t.norm() <= 1.0) continue;
        ++blocks;
        worst_cos = std::min(worst_cos, t.dot(f) / (t.norm() * f.norm() + 1e-300));
    }
    v.require(worst_cos > 0.95, fmt::format("worst beta cosine {:.3f} over {} blocks with norm > 1 (limit 0.95)",
                                            worst_cos, blocks));

    // What the likelihood does pin down: lambda times the utility differences each player compares.
    double worst_identified = 0.0;
    for (int r = 0; r < 2; ++r) {
        for (int t = 0; t < 3; ++t) {
            int base = (r * 3 + t) * 36;
            double ls = truth[qre::kBetaCount + r * 3 + t];
            double lf = m.theta[qre::kBetaCount + r * 3 + t];
            Eigen::VectorXd cc = truth.segment(base, 12), cd = truth.segment(base + 12, 12),
                            dc = truth.segment(base + 24, 12);
            Eigen::VectorXd fcc = m.theta.segment(base, 12), fcd = m.theta.segment(base + 12, 12),
                            fdc = m.theta.segment(base + 24, 12);
            Eigen::VectorXd s1 = ls * (r == 0 ? cd : dc), f1 = lf * (r == 0 ? fcd : fdc);
            Eigen::VectorXd s2 = ls * (r == 0 ? cc - dc : cc - cd), f2 = lf * (r == 0 ? fcc - fdc : fcc - fcd);
            worst_identified = std::max({worst_identified, (s1 - f1).norm() / s1.norm(), (s2 - f2).norm() / s2.norm()});
        }
    }
    v.info(fmt::format("identified contrasts (lambda * utility differences): worst relative error {:.3f}",
                       worst_identified));
    v.info(fmt::format("log-likelihood fit {:.1f}, at truth {:.1f}", qre::log_likelihood(m, obs),
                       qre::log_likelihood(cfg.theta_star, obs)));
    return v;
}

// Independent recomputation of the logit update map.
std::pair<double, double> update_map(const qre::Game& g, double pa, double pp) {
    double dua = pp * g.active.cc + (1 - pp) * g.active.cd - pp * g.active.dc;
    double dup = pa * g.passive.cc + (1 - pa) * g.passive.dc - pa * g.passive.cd;
    return {1.0 / (1.0 + std::exp(-g.lambda_active * dua)), 1.0 / (1.0 + std::exp(-g.lambda_passive * dup))};
}

Verdict fixed_point_contract() {
    Verdict v;
    std::mt19937_64 rng(404);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> lam(qre::kLambdaMin, qre::kLambdaMax);
    std::uniform_int_distribution<int> type(0, 2);
    const InteractionType types[3] = {InteractionType::AVvsHDV, InteractionType::HDVvsAV, InteractionType::HDVvsHDV};
    double worst = 0.0;
    int failures = 0;
    for (int i = 0; i < 10000; ++i) {
        qre::UtilityModel m;
        for (int k = 0; k < qre::kBetaCount; ++k) m.theta[k] = z(rng);
        for (int k = qre::kBetaCount; k < qre::kParamCount; ++k) m.theta[k] = lam(rng);
        qre::Augmented s;
        s[0] = 1.0;
        for (int k = 1; k < kAugmentedDim; ++k) s[k] = 2.0 * z(rng);
        auto g = qre::game_for(m, s, types[type(rng)], types[type(rng)]);
        try {
            auto r = qre::solve_fixed_point(g);
            auto [na, np] = update_map(g, r.p_active, r.p_passive);
            worst = std::max({worst, std::abs(na - r.p_active), std::abs(np - r.p_passive)});
        } catch (const NumericError&) {
            ++failures;
        }
    }
    v.require(failures == 0 && worst < 1e-10,
              fmt::format("10,000 random draws: max residual {:.2e}, solver failures {}", worst, failures));

    double worst_reduction = 0.0;
    for (int i = 0; i < 1000; ++i) {
        qre::Game g;
        double ucc = 3.0 * z(rng);
        g.active = {ucc, ucc, 0.0};
        g.passive = {z(rng), z(rng), z(rng)};
        g.lambda_active = lam(rng);
        g.lambda_passive = lam(rng);
        auto r = qre::solve_fixed_point(g);
        double expect = 1.0 / (1.0 + std::exp(-g.lambda_active * ucc));
        worst_reduction = std::max(worst_reduction, std::abs(r.p_active - expect));
    }
    v.require(worst_reduction < 1e-10,
              fmt::format("U_CC = U_CD, U_DC = 0 reduces to sigma(lambda U_CC): max error {:.2e}", worst_reduction));
    return v;
}

Verdict paper_arithmetic() {
    Verdict v;
    auto r = qre::validate(-7521.2, -10542.4);
    v.require(std::abs(r.lrt_stat - 6042.4) < 1e-9, fmt::format("LRT {:.1f}", r.lrt_stat));
    v.require(r.df == 204, fmt::format("df {}", r.df));
    v.require(std::abs(r.mcfadden - 0.2866) < 0.0005, fmt::format("McFadden {:.4f}", r.mcfadden));
    v.require(std::round(r.mcfadden * 1000) / 1000 == 0.287, "pseudo-R2 rounds to 0.287");
    return v;
}

// Sort-based ordering oracle for the classifier.
payoff::GameClass oracle_class(const payoff::CanonicalPayoffs& c) {
    const double eps = payoff::kClassifyEps;
    bool sd = c.R - c.P > eps && c.R - c.S > eps && 2 * c.R - c.T - c.S > eps && (c.T - c.R > eps || c.P - c.S > eps);
    if (!sd) return payoff::GameClass::NonSocialDilemma;
    std::array<std::pair<double, char>, 4> vals{{{c.R, 'R'}, {c.S, 'S'}, {c.T, 'T'}, {c.P, 'P'}}};
    std::sort(vals.begin(), vals.end(), [](auto& a, auto& b) { return a.first > b.first; });
    std::string order;
    for (int i = 0; i < 4; ++i) {
        if (i + 1 < 4 && !(vals[i].first > vals[i + 1].first + eps)) return payoff::GameClass::OtherSocialDilemma;
        order += vals[i].second;
    }
    if (order == "TRPS") return payoff::GameClass::PrisonersDilemma;
    if (order == "RTPS") return payoff::GameClass::StagHunt;
    if (order == "TRSP") return payoff::GameClass::ChickenGame;
    return payoff::GameClass::OtherSocialDilemma;
}

Verdict payoff_goldens() {
    Verdict v;
    auto m = golden::table6_model();
    trajectory::StateVector s{};
    double worst = 0.0;
    for (const auto& pub : golden::kTable6) {
        auto t = payoff::build_table(s, m, pub.active, pub.passive, true);
        for (int o = 0; o < 4; ++o)
            for (int r = 0; r < 2; ++r) worst = std::max(worst, std::abs(t.entries[o][r] - pub.cells[o][r]));
    }
    v.require(worst < 1e-12, fmt::format("four published tables reproduced, max deviation {:.1e}", worst));

    auto hdv = payoff::build_table(s, m, VehicleType::HDV, VehicleType::HDV);
    bool verdicts = true;
    for (Role r : {Role::Active, Role::Passive}) {
        auto c = payoff::canonical(hdv, r);
        // hand predicates: mutual cooperation must beat mutual defection, etc.
        bool sd = c.R > c.P && c.R > c.S && 2 * c.R > c.T + c.S && (c.T > c.R || c.P > c.S);
        auto cls = payoff::classify(c);
        verdicts = verdicts && (cls != payoff::GameClass::NonSocialDilemma) == sd;
        v.info(fmt::format("HDV-HDV {}: R {:.3f} S {:.3f} T {:.3f} P 0 -> {}", to_string(r), c.R, c.S, c.T,
                           payoff::to_string(cls)));
    }
    v.require(verdicts, "HDV-HDV verdicts match direct predicate evaluation");

    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_int_distribution<int> small(-2, 2);
    int disagreements = 0;
    for (int i = 0; i < 1'000'000; ++i) {
        payoff::CanonicalPayoffs c;
        bool ties = i % 4 == 0;
        c.R = ties ? small(rng) : n(rng);
        c.T = ties ? small(rng) : n(rng);
        c.S = ties ? small(rng) : n(rng);
        if (payoff::classify(c) != oracle_class(c)) ++disagreements;
    }
    v.require(disagreements == 0, fmt::format("10^6 random quadruples: {} disagreements", disagreements));
    return v;
}

Verdict imputation_identity() {
    Verdict v;
    std::mt19937_64 rng(1000);
    std::normal_distribution<double> n(0.0, 1.0);
    qre::UtilityModel m;
    for (int i = 0; i < qre::kBetaCount; ++i) m.theta[i] = n(rng);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        trajectory::StateVector s{};
        for (auto& x : s) x = 3.0 * n(rng);
        auto d = payoff::impute_av_av(s, m);
        auto active = payoff::build_table(s, m, VehicleType::AV, VehicleType::HDV);
        auto passive = payoff::build_table(s, m, VehicleType::HDV, VehicleType::AV);
        for (int o = 0; o < 4; ++o) {
            mismatches += d.entries[o][0] != active.entries[o][0];
            mismatches += d.entries[o][1] != passive.entries[o][1];
        }
    }
    v.require(mismatches == 0, fmt::format("1,000 states: {} inexact AV entries", mismatches));
    return v;
}

payoff::StateGames uniform_games(double R, double S, double T) {
    payoff::CanonicalPayoffs a;
    a.R = R;
    a.S = S;
    a.T = T;
    auto b = a;
    b.role = Role::Passive;
    payoff::StateGames g;
    for (int p = 0; p < payoff::kPairCount; ++p)
        g.tables[p] = payoff::table_from_canonical(a, b, payoff::pair_active(p), payoff::pair_passive(p));
    return g;
}

std::vector<payoff::StateGames> random_pool(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<payoff::StateGames> pool;
    for (int i = 0; i < n; ++i) {
        payoff::StateGames g;
        g.state_id = i;
        for (int p = 0; p < payoff::kPairCount; ++p) {
            g.tables[p].active_type = payoff::pair_active(p);
            g.tables[p].passive_type = payoff::pair_passive(p);
            for (int o = 0; o < 3; ++o) g.tables[p].entries[o] = {z(rng), z(rng)};
        }
        pool.push_back(g);
    }
    return pool;
}

Verdict evolution_sanity() {
    Verdict v;
    evolution::SimConfig c;
    c.noise_k = 1.0;
    std::vector<evolution::SimConfig> one{c};
    std::vector<payoff::StateGames> harmony_pool{uniform_games(2.0, 1.0, -1.0)};
    std::vector<payoff::StateGames> defect_pool{uniform_games(-1.0, -2.0, 2.0)};
    auto harmony = evolution::run_sweep(one, harmony_pool, 0);
    auto defect = evolution::run_sweep(one, defect_pool, 0);
    int full = 0, none = 0;
    for (int r = 0; r < c.reps; ++r) {
        full += harmony[0].reps[r].series.back().all == 1.0;
        none += defect[0].reps[r].series.back().all == 0.0;
    }
    v.require(full >= 19, fmt::format("harmony pool: {}/20 reps end at cooperation 1.0", full));
    v.require(none >= 19, fmt::format("dominant-defection pool: {}/20 reps end at cooperation 0.0", none));

    std::mt19937_64 rng(10);
    auto pool = random_pool(rng, 200);
    evolution::SimConfig shuffled;
    shuffled.contact_freq = 0.04;
    auto grid = evolution::init_grid(shuffled, rng);
    auto nbrs = evolution::neighbor_lists(shuffled.width, shuffled.height, shuffled.neighbor_size);
    auto avs = [](const evolution::Grid& g) {
        return std::count_if(g.cells.begin(), g.cells.end(), [](auto& a) { return a.vtype == VehicleType::AV; });
    };
    const auto initial = avs(grid);
    bool conserved = true;
    for (int s = 1; s <= 200; ++s) {
        if (evolution::shuffle_due(s, shuffled.shuffle_period())) evolution::shuffle_grid(grid, rng);
        evolution::step(grid, nbrs, pool, shuffled.noise_k, rng);
        conserved = conserved && avs(grid) == initial;
    }
    v.require(conserved, fmt::format("AV count {} conserved over 200 steps with shuffling", initial));

    for (auto& a : grid.cells) a.strategy = Strategy::C;
    for (int s = 0; s < 200; ++s) evolution::step(grid, nbrs, pool, 2.0, rng);
    v.require(evolution::cooperation(grid).all == 1.0, "all-cooperator grid absorbing over 200 steps");

    const std::vector<int> ns{1, 2, 3};
    const std::vector<double> ks{1.0, 2.0, 3.0}, mprs{0.2, 0.5, 0.8}, freqs{0.0, 0.02, 0.04};
    auto configs = evolution::sweep_grid(evolution::SimConfig{}, ns, ks, mprs, freqs);
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    auto t0 = std::chrono::steady_clock::now();
    auto records = evolution::run_sweep(configs, pool, 2024, threads);
    double secs = seconds_since(t0);
    v.require(records.size() == 81 && secs < 300.0,
              fmt::format("{} configs x 20 reps x 200 steps on 20x20 in {:.1f} s with {} thread(s) (limit 300 s)",
                          records.size(), secs, threads));
    return v;
}

Verdict statistics_oracles() {
    Verdict v;
    const int n = 400;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z;
    Eigen::MatrixXd raw(n, 12);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 12; ++j) raw(i, j) = z(rng);
    raw.rowwise() -= raw.colwise().mean();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, 12);
    Eigen::MatrixXd x = q.leftCols(11);
    // orthonormal centered columns, so column 1 has R^2 = 0.81 against the rest
    x.col(1) = 0.9 * q.col(0) + std::sqrt(1 - 0.81) * q.col(11);
    auto vifs = qre::vif(x);
    double expect = 1.0 / (1.0 - 0.81);
    v.require(std::abs(vifs[2] - expect) < 1e-3,
              fmt::format("VIF at rho 0.9: {:.6f} vs 1/(1-R^2) = {:.6f}", vifs[2], expect));

    std::vector<double> vals{1.0, 2.0, 4.0, 7.0, 3.0, 5.5, 6.0, 8.0, 9.5};
    std::vector<int> groups{0, 0, 0, 0, 1, 1, 1, 1, 1};
    clustering::Matrix m(9, 1);
    for (int i = 0; i < 9; ++i) m(i, 0) = vals[static_cast<std::size_t>(i)];
    double grand = 0.0, m0 = 0.0, m1 = 0.0;
    for (int i = 0; i < 9; ++i) grand += vals[i] / 9.0;
    for (int i = 0; i < 4; ++i) m0 += vals[i] / 4.0;
    for (int i = 4; i < 9; ++i) m1 += vals[i] / 5.0;
    double ssw = 0.0, sst = 0.0;
    for (int i = 0; i < 9; ++i) {
        double g = i < 4 ? m0 : m1;
        ssw += (vals[i] - g) * (vals[i] - g);
        sst += (vals[i] - grand) * (vals[i] - grand);
    }
    auto manova = clustering::manova_two_group(m, groups);
    v.require(std::abs(manova.wilks_lambda - ssw / sst) < 1e-9,
              fmt::format("Wilks lambda {:.12f} vs SSW/SST {:.12f}", manova.wilks_lambda, ssw / sst));

    // tp 3, fp 1, fn 2
    auto metrics = qre::metrics_from_counts(3, 1, 2);
    v.require(metrics.precision == 0.75 && metrics.recall == 0.6 && metrics.f1 == 2 * 0.75 * 0.6 / (0.75 + 0.6),
              "precision 3/4, recall 3/5, F1 2PR/(P+R) exact");
    return v;
}

auto ramp_y(double t0, double t1, double width = 3.6) {
    return [=](double t) { return width * std::clamp((t - t0) / (t1 - t0), 0.0, 1.0); };
}

Verdict extraction_fixtures() {
    using namespace fixtures;
    Verdict v;
    auto map = two_lane_map();
    auto res = extract_events(lane_change_fixture(ramp_y(5.5, 9.0), [](double) { return 0.0; }), map);
    // lateral position reaches the boundary (y = 1.8) at t = 7.25
    bool found = res.events.size() == 1;
    double crossing = found ? res.events[0].crossing_time : NAN;
    v.require(found && std::abs(crossing - 7.25) <= 0.1 + 1e-12,
              fmt::format("crossing detected at {:.2f} s, true 7.25 s", crossing));

    auto turn = extract_events(lane_change_fixture(ramp_y(5.5, 9.0), [](double t) { return t > 9.0 ? 0.3 : 0.0; }),
                               map);
    v.require(turn.events.empty() && turn.rejections.size() == 1 && turn.rejections[0].reason == "heading",
              "0.3 rad heading change rejected by the 0.2 rad filter");
    auto fast = extract_events(lane_change_fixture(ramp_y(5.5, 9.0), [](double) { return 0.0; }, 26.0), map);
    v.require(fast.events.empty() && fast.rejections.size() == 1 && fast.rejections[0].reason == "speed",
              "26 m/s lane change rejected by the 25 m/s filter");

    Lane target;
    target.id = 2;
    target.centerline = {{-100, 0}, {1000, 0}};
    auto d = [](double t) {
        if (t <= 3.0) return 2.0 + 0.5 * t;
        if (t <= 6.0) return 3.5 - 1.1 * (t - 3.0);
        return 0.2 + 0.2 * (t - 6.0);
    };
    auto w = make_track(0, VehicleType::HDV, {[](double t) { return 10 * t; }, d, [](double) { return 10.0; }}, 101)
                 .samples;
    auto b = locate_boundaries(w, target, 46);
    v.require(std::abs(b.start_time - 3.0) < 1e-9 && std::abs(b.end_time - 6.0) < 1e-9,
              fmt::format("piecewise-linear d(t): boundaries {:.6f} s and {:.6f} s, true 3 and 6", b.start_time,
                          b.end_time));
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict determinism() {
    using namespace pipeline;
    Verdict v;
    auto root = fs::temp_directory_path() / "lanegame_acceptance";
    fs::remove_all(root);
    auto run = [&](const fs::path& dir, bool scene) {
        PipelineConfig cfg;
        cfg.out = dir;
        cfg.seed = 20240;
        cfg.synth_scene = scene;
        cfg.synth_events = 3000;
        cfg.cv_splits = scene ? 0 : 2;
        cfg.sim.reps = 4;
        cfg.sim.steps = 50;
        fs::create_directories(dir);
        run_synth(cfg);
        if (scene) {
            run_extract(cfg);
            run_cluster(cfg);
        }
        run_fit(cfg);
        run_validate(cfg);
        run_games(cfg);
        run_simulate(cfg);
        run_report(cfg);
    };
    for (bool scene : {true, false}) {
        auto a = root / (scene ? "scene_a" : "events_a");
        auto b = root / (scene ? "scene_b" : "events_b");
        run(a, scene);
        run(b, scene);
        int files = 0, differ = 0;
        for (const auto& e : fs::directory_iterator(a)) {
            ++files;
            auto name = e.path().filename();
            if (!fs::exists(b / name) || slurp(a / name) != slurp(b / name)) {
                ++differ;
                v.info(fmt::format("differs: {}", name.string()));
            }
        }
        v.require(differ == 0 && files > 0,
                  fmt::format("{} chain: {} artifacts, {} differ between reruns", scene ? "trajectory" : "synthetic",
                              files, differ));
    }
    fs::remove_all(root);
    return v;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"QRE parameter recovery", qre_recovery},
        {"fixed-point contract", fixed_point_contract},
        {"likelihood-ratio arithmetic", paper_arithmetic},
        {"payoff tables and classification", payoff_goldens},
        {"AV-AV imputation identity", imputation_identity},
        {"evolution sanity and sweep runtime", evolution_sanity},
        {"statistics oracles", statistics_oracles},
        {"extraction fixtures", extraction_fixtures},
        {"pipeline determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.require(false, fmt::format("threw: {}", e.what()));
        }
        failed += !v.pass;
        fmt::print("{} criterion {}: {}\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first);
        for (const auto& note : v.notes) fmt::print("    {}\n", note);
        std::fflush(stdout);
    }
    fmt::print("{}/{} criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
