#include <algorithm>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"

#include "golden.hpp"
#include "lanegame/io.hpp"
#include "lanegame/payoff.hpp"

using namespace lanegame;
using namespace lanegame::payoff;

namespace {

trajectory::StateVector random_state(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 3.0);
    trajectory::StateVector s{};
    for (auto& v : s) v = n(rng);
    return s;
}

qre::UtilityModel random_model(std::mt19937_64& rng) {
    qre::UtilityModel m;
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < qre::kBetaCount; ++i) m.theta[i] = n(rng);
    std::array<double, kStateDim> means{}, stds{};
    for (int j = 0; j < kStateDim; ++j) {
        means[j] = n(rng);
        stds[j] = 0.5 + std::abs(n(rng));
    }
    m.scaler = trajectory::StateScaler(means, stds);
    return m;
}

// Brute force: sort the labelled values and read off the ordering, requiring clear gaps.
std::string strict_order(const CanonicalPayoffs& c, double eps) {
    std::array<std::pair<double, char>, 4> v{{{c.R, 'R'}, {c.S, 'S'}, {c.T, 'T'}, {c.P, 'P'}}};
    std::sort(v.begin(), v.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (int i = 0; i + 1 < 4; ++i) {
        if (!(v[i].first > v[i + 1].first + eps)) return "";
    }
    return {v[0].second, v[1].second, v[2].second, v[3].second};
}

GameClass oracle_class(const CanonicalPayoffs& c, double eps = kClassifyEps) {
    bool greed = c.T - c.R > eps;
    bool fear = c.P - c.S > eps;
    bool sd = c.R - c.P > eps && c.R - c.S > eps && 2 * c.R - c.T - c.S > eps && (greed || fear);
    if (!sd) return GameClass::NonSocialDilemma;
    auto o = strict_order(c, eps);
    if (o == "TRPS") return GameClass::PrisonersDilemma;
    if (o == "RTPS") return GameClass::StagHunt;
    if (o == "TRSP") return GameClass::ChickenGame;
    return GameClass::OtherSocialDilemma;
}

CanonicalPayoffs rtsp(double R, double T, double S) {
    CanonicalPayoffs c;
    c.R = R;
    c.T = T;
    c.S = S;
    return c;
}

}  // namespace

TEST_CASE("pair codes and names round trip") {
    for (int p = 0; p < kPairCount; ++p) {
        CHECK(parse_pair(pair_name(p)) == p);
        CHECK(pair_code(pair_active(p), pair_passive(p)) == p);
    }
    CHECK(pair_name(pair_code(VehicleType::HDV, VehicleType::AV)) == "HDV-AV");
    CHECK_THROWS_AS(parse_pair("AV-XX"), DataError);
    for (int c = 0; c < kClassCount; ++c) {
        auto g = static_cast<GameClass>(c);
        CHECK(parse_game_class(to_string(g)) == g);
        CHECK(parse_game_class(short_name(g)) == g);
    }
}

TEST_CASE("zero model gives all-zero tables") {
    qre::UtilityModel m;
    m.theta.head(qre::kBetaCount).setZero();
    std::mt19937_64 rng(3);
    auto t = build_table(random_state(rng), m, VehicleType::HDV, VehicleType::AV);
    for (const auto& cell : t.entries) {
        CHECK(cell[0] == 0.0);
        CHECK(cell[1] == 0.0);
    }
}

TEST_CASE("published S1 tables reproduced by the golden model") {
    auto m = golden::table6_model();
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        auto s = random_state(rng);  // intercept-only, so any state
        for (const auto& pub : golden::kTable6) {
            auto t = build_table(s, m, pub.active, pub.passive, true, 1);
            CHECK(t.imputed == (pub.active == VehicleType::AV && pub.passive == VehicleType::AV));
            for (int o = 0; o < 4; ++o) {
                CHECK(t.entries[o][0] == doctest::Approx(pub.cells[o][0]).epsilon(1e-12));
                CHECK(t.entries[o][1] == doctest::Approx(pub.cells[o][1]).epsilon(1e-12));
            }
            CHECK(t.entries[3][0] == 0.0);
            CHECK(t.entries[3][1] == 0.0);
        }
    }
}

TEST_CASE("AV-AV needs imputation enabled") {
    auto m = golden::table6_model();
    trajectory::StateVector s{};
    CHECK_THROWS_AS(build_table(s, m, VehicleType::AV, VehicleType::AV), DataError);
    auto t = impute_av_av(s, m, 7);
    CHECK(t.imputed);
    CHECK(t.state_id == 7);
}

TEST_CASE("imputed AV-AV table is assembled from the AV-HDV active and HDV-AV passive columns") {
    auto m = golden::table6_model();
    trajectory::StateVector s{};
    auto b = build_table(s, m, VehicleType::HDV, VehicleType::AV);
    auto c = build_table(s, m, VehicleType::AV, VehicleType::HDV);
    auto d = impute_av_av(s, m);
    for (int o = 0; o < 4; ++o) {
        CHECK(d.entries[o][0] == c.entries[o][0]);
        CHECK(d.entries[o][1] == b.entries[o][1]);
    }
}

TEST_CASE("imputation identity holds exactly for random states and models") {
    std::mt19937_64 rng(2024);
    qre::UtilityModel m;
    for (int rep = 0; rep < 1000; ++rep) {
        if (rep % 100 == 0) m = random_model(rng);
        auto s = random_state(rng);
        auto d = impute_av_av(s, m);
        auto av_active = build_table(s, m, VehicleType::AV, VehicleType::HDV);
        auto av_passive = build_table(s, m, VehicleType::HDV, VehicleType::AV);
        for (int o = 0; o < 4; ++o) {
            REQUIRE(d.entries[o][0] == av_active.entries[o][0]);
            REQUIRE(d.entries[o][1] == av_passive.entries[o][1]);
        }
    }
}

TEST_CASE("table uses the state through the model's scaler") {
    std::mt19937_64 rng(5);
    auto m = random_model(rng);
    auto s = random_state(rng);
    auto t = build_table(s, m, VehicleType::HDV, VehicleType::HDV);
    // hand dot product
    double z[kAugmentedDim];
    z[0] = 1.0;
    for (int j = 0; j < kStateDim; ++j) z[j + 1] = (s[j] - m.scaler.means()[j]) / m.scaler.stds()[j];
    double u = 0.0;
    for (int k = 0; k < kAugmentedDim; ++k) {
        u += m.theta[qre::beta_index(Role::Passive, InteractionType::HDVvsHDV, Outcome::DC, k)] * z[k];
    }
    CHECK(t.get(Outcome::DC, Role::Passive) == doctest::Approx(u).epsilon(1e-12));
}

TEST_CASE("canonical mapping per role") {
    auto m = golden::table6_model();
    auto t = build_table(trajectory::StateVector{}, m, VehicleType::HDV, VehicleType::HDV);
    auto a = canonical(t, Role::Active);
    CHECK(a.R == doctest::Approx(-0.030));
    CHECK(a.T == doctest::Approx(-0.433));
    CHECK(a.S == doctest::Approx(-0.140));
    CHECK(a.P == 0.0);
    auto p = canonical(t, Role::Passive);
    CHECK(p.R == doctest::Approx(-1.963));
    CHECK(p.T == doctest::Approx(-1.939));
    CHECK(p.S == doctest::Approx(2.077));
    CHECK(p.P == 0.0);
    CHECK(a.greed() == doctest::Approx(-0.433 + 0.030));
    CHECK(p.fear() == doctest::Approx(-2.077));

    PayoffTable flat;
    for (int o = 0; o < 3; ++o) flat.entries[o] = {1.5, 1.5};
    auto f = canonical(flat, Role::Passive);
    CHECK(f.R == f.T);
    CHECK(f.T == f.S);

    auto back = table_from_canonical(a, p, VehicleType::HDV, VehicleType::HDV);
    for (int o = 0; o < 4; ++o) {
        CHECK(back.entries[o][0] == t.entries[o][0]);
        CHECK(back.entries[o][1] == t.entries[o][1]);
    }
}

TEST_CASE("canonical orderings classify as expected") {
    CHECK(classify(rtsp(3, 5, -1)) == GameClass::PrisonersDilemma);
    CHECK(classify(rtsp(5, 3, -1)) == GameClass::StagHunt);
    CHECK(classify(rtsp(3, 5, 0.5)) == GameClass::ChickenGame);
    // harmony game: no greed, no fear
    CHECK(classify(rtsp(3, 1, 2)) == GameClass::NonSocialDilemma);
    // PD ordering but 2R < T + S
    CHECK(classify(rtsp(3, 7, -0.5)) == GameClass::NonSocialDilemma);
    // ties resolve conservatively: R = T is no stag hunt
    CHECK(classify(rtsp(3, 3, -1)) == GameClass::OtherSocialDilemma);
    CHECK(classify(rtsp(3, 3 - 1e-10, -1)) == GameClass::OtherSocialDilemma);
    CHECK(classify(rtsp(3, 3, 0)) == GameClass::NonSocialDilemma);
    CHECK(classify(rtsp(3, 5, 0)) == GameClass::OtherSocialDilemma);
}

TEST_CASE("published S1 active and passive payoffs are not social dilemmas") {
    auto m = golden::table6_model();
    auto t = build_table(trajectory::StateVector{}, m, VehicleType::HDV, VehicleType::HDV);
    auto a = canonical(t, Role::Active);
    CHECK_FALSE(a.R > a.P);
    CHECK(classify(a) == GameClass::NonSocialDilemma);
    CHECK(classify(canonical(t, Role::Passive)) == GameClass::NonSocialDilemma);
}

TEST_CASE("classifier agrees with brute-force ordering on random quadruples") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_int_distribution<int> small(-2, 2);
    int disagreements = 0;
    std::array<int, kClassCount> seen{};
    for (int i = 0; i < 1'000'000; ++i) {
        CanonicalPayoffs c;
        if (i % 4 == 0) {
            c = rtsp(small(rng), small(rng), small(rng));  // exercise ties
        } else {
            c = rtsp(n(rng), n(rng), n(rng));
        }
        auto g = classify(c);
        ++seen[static_cast<int>(g)];
        if (g != oracle_class(c)) ++disagreements;
        if (g == GameClass::PrisonersDilemma || g == GameClass::StagHunt || g == GameClass::ChickenGame) {
            if (!(c.R > c.P && c.R > c.S && 2 * c.R > c.T + c.S && (c.T > c.R || c.P > c.S))) ++disagreements;
        }
    }
    CHECK(disagreements == 0);
    for (int k = 0; k < kClassCount; ++k) CHECK(seen[k] > 0);
}

TEST_CASE("classification is invariant under positive scaling") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.01, 100.0);
    for (int i = 0; i < 100'000; ++i) {
        auto c = rtsp(n(rng), n(rng), n(rng));
        double k = scale(rng);
        auto d = rtsp(k * c.R, k * c.T, k * c.S);
        // margins well above eps at both scales
        double gap = 1e-6;
        auto clear = [gap](const CanonicalPayoffs& x) {
            double v[] = {x.R, x.S, x.T, x.P, 2 * x.R - x.T - x.S};
            for (int a = 0; a < 4; ++a)
                for (int b = a + 1; b < 4; ++b)
                    if (std::abs(v[a] - v[b]) < gap) return false;
            return std::abs(v[4]) > gap;
        };
        if (!clear(c) || !clear(d)) continue;
        REQUIRE(classify(c) == classify(d));
    }
}

TEST_CASE("tabulate matches direct enumeration on engineered states") {
    // Payoffs vary linearly with the first state variable so classes change across states.
    qre::UtilityModel m;
    m.theta.head(qre::kBetaCount).setZero();
    std::mt19937_64 rng(17);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int r = 0; r < 2; ++r) {
        for (int t = 0; t < 3; ++t) {
            for (int o = 0; o < 3; ++o) {
                m.theta[qre::beta_index(Role(r), InteractionType(t), Outcome(o), 0)] = n(rng);
                m.theta[qre::beta_index(Role(r), InteractionType(t), Outcome(o), 1)] = n(rng);
            }
        }
    }
    std::vector<trajectory::LaneChangeEvent> events;
    std::uniform_int_distribution<int> pick(1, 3);
    std::array<std::array<std::array<long, kClassCount>, kClassCount>, kPairCount> expect{};
    for (int i = 0; i < 3000; ++i) {
        trajectory::LaneChangeEvent e;
        e.event_id = i;
        int p = pick(rng);
        e.active_type = pair_active(p);
        e.passive_type = pair_passive(p);
        e.state[0] = 3.0 * n(rng);
        events.push_back(e);
        // hand evaluation: utilities = b0 + b1 * s0 with the identity scaler
        auto u = [&](Role r, InteractionType t, Outcome o) {
            return m.theta[qre::beta_index(r, t, o, 0)] + m.theta[qre::beta_index(r, t, o, 1)] * e.state[0];
        };
        auto ta = interaction_type(e.active_type, e.passive_type);
        auto tp = interaction_type(e.passive_type, e.active_type);
        auto ca = rtsp(u(Role::Active, ta, Outcome::CC), u(Role::Active, ta, Outcome::DC),
                       u(Role::Active, ta, Outcome::CD));
        auto cp = rtsp(u(Role::Passive, tp, Outcome::CC), u(Role::Passive, tp, Outcome::CD),
                       u(Role::Passive, tp, Outcome::DC));
        ++expect[p][static_cast<int>(oracle_class(ca))][static_cast<int>(oracle_class(cp))];
    }
    auto tab = tabulate(events, m);
    int nonzero_cells = 0;
    for (int p = 0; p < kPairCount; ++p) {
        std::int64_t sum = 0;
        for (int a = 0; a < kClassCount; ++a) {
            for (int b = 0; b < kClassCount; ++b) {
                CHECK(tab.counts[p][a][b] == expect[p][a][b]);
                if (tab.counts[p][a][b] > 0) ++nonzero_cells;
                sum += tab.counts[p][a][b];
            }
        }
        CHECK(sum == tab.events[p]);
        std::int64_t rows = 0, cols = 0;
        for (int c = 0; c < kClassCount; ++c) {
            rows += tab.row_total(p, GameClass(c));
            cols += tab.column_total(p, GameClass(c));
        }
        CHECK(rows == tab.events[p]);
        CHECK(cols == tab.events[p]);
    }
    CHECK(tab.total() == 3000);
    CHECK(nonzero_cells > 3);

    auto j = to_json(tab);
    CHECK(j["total_events"] == 3000);
    CHECK(j["pairs"].size() == 4);
}

TEST_CASE("all non-dilemma states fill a single cell") {
    auto m = golden::table6_model();
    std::vector<trajectory::LaneChangeEvent> events(50);
    for (std::size_t i = 0; i < events.size(); ++i) events[i].event_id = static_cast<std::int64_t>(i);
    auto tab = tabulate(events, m);
    int hh = pair_code(VehicleType::HDV, VehicleType::HDV);
    int non = static_cast<int>(GameClass::NonSocialDilemma);
    CHECK(tab.counts[hh][non][non] == 50);
    CHECK(tab.dilemmas(Role::Active) == 0);
}

TEST_CASE("payoff CSV round trip rebuilds all four tables") {
    std::mt19937_64 rng(23);
    auto m = random_model(rng);
    std::vector<trajectory::LaneChangeEvent> events(6);
    for (std::size_t i = 0; i < events.size(); ++i) {
        events[i].event_id = static_cast<std::int64_t>(10 + i);
        events[i].state = random_state(rng);
        events[i].active_type = i % 2 ? VehicleType::AV : VehicleType::HDV;
    }
    auto rows = payoff_rows(events, m);
    CHECK(rows.size() == events.size() * 8);
    auto dir = std::filesystem::temp_directory_path() / "lanegame_payoff_test";
    std::filesystem::create_directories(dir);
    write_payoff_csv(dir / "payoffs.csv", rows);
    auto games = read_payoff_csv(dir / "payoffs.csv");
    REQUIRE(games.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(games[i].state_id == events[i].event_id);
        for (int p = 0; p < kPairCount; ++p) {
            auto t = build_table(events[i].state, m, pair_active(p), pair_passive(p), true);
            for (int o = 0; o < 4; ++o) {
                CHECK(games[i].tables[p].entries[o][0] == t.entries[o][0]);
                CHECK(games[i].tables[p].entries[o][1] == t.entries[o][1]);
            }
        }
    }
    int observed = 0;
    for (const auto& r : rows) observed += r.observed;
    CHECK(observed == 12);

    // a missing pair is rejected
    std::vector<PayoffRow> partial(rows.begin(), rows.end() - 1);
    CHECK_THROWS_AS(games_from_rows(partial), DataError);
    std::filesystem::remove_all(dir);
}
