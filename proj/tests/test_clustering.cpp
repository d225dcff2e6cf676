#include <random>

#include "doctest.h"
#include "lanegame/clustering.hpp"

using namespace lanegame;
using namespace lanegame::clustering;

namespace {

// Two blobs centred at 0 and 10 along every axis, unit spread.
Matrix blobs(int per, int dim, std::uint64_t seed, std::vector<int>& truth) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix x(2 * per, dim);
    truth.clear();
    for (int i = 0; i < 2 * per; ++i) {
        int g = i < per ? 0 : 1;
        truth.push_back(g);
        for (int j = 0; j < dim; ++j) x(i, j) = 10.0 * g + z(rng);
    }
    return x;
}

// Any two-cluster assignment equals truth up to a relabeling.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    bool direct = true;
    bool flipped = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        direct = direct && a[i] == b[i];
        flipped = flipped && a[i] == 1 - b[i];
    }
    return direct || flipped;
}

ClusterModel manual_model(std::vector<int> assignment) {
    ClusterModel m;
    m.k = 2;
    m.assignment = std::move(assignment);
    return m;
}

}  // namespace

TEST_CASE("well separated blobs are split exactly") {
    std::vector<int> truth;
    Matrix x = blobs(60, 3, 11, truth);
    KMeansOptions o;
    o.seed = 5;
    auto m = kmeans_fit(x, o);
    CHECK(same_partition(m.assignment, truth));
    CHECK(m.centroids.rows() == 2);
}

TEST_CASE("identical points are rejected") {
    Matrix x = Matrix::Constant(20, 3, 1.5);
    CHECK_THROWS_AS(kmeans_fit(x, KMeansOptions{}), DataError);
    Matrix one(1, 2);
    one << 1.0, 2.0;
    CHECK_THROWS_AS(kmeans_fit(one, KMeansOptions{}), DataError);
}

TEST_CASE("fixed seed gives identical assignment") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    Matrix x(200, 4);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = z(rng);
    KMeansOptions o;
    o.seed = 42;
    auto a = kmeans_fit(x, o);
    auto b = kmeans_fit(x, o);
    CHECK(a.assignment == b.assignment);
    CHECK(a.inertia == b.inertia);
}

TEST_CASE("inertia never increases across Lloyd iterations") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 20; ++trial) {
        Matrix x(150, 3);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = z(rng) + (i % 3 == 0 ? 2.0 : 0.0);
        KMeansOptions o;
        o.seed = static_cast<std::uint64_t>(trial);
        o.restarts = 1;
        auto m = kmeans_fit(x, o);
        for (std::size_t i = 1; i < m.inertia_history.size(); ++i) {
            CHECK(m.inertia_history[i] <= m.inertia_history[i - 1] * (1.0 + 1e-12));
        }
        CHECK(m.inertia <= m.inertia_history.back() * (1.0 + 1e-12));
    }
}

TEST_CASE("standardized columns have zero mean and unit spread") {
    Matrix raw(4, 2);
    raw << 1, 5, 3, 5, 5, 5, 7, 5;
    Matrix s = standardize_columns(raw);
    CHECK(s.col(0).mean() == doctest::Approx(0.0));
    CHECK(std::sqrt(s.col(0).squaredNorm() / 4.0) == doctest::Approx(1.0));
    CHECK(s.col(1).isZero());
}

TEST_CASE("active label: longer lane change is cooperative") {
    Matrix raw = Matrix::Zero(4, kActiveFeatures);
    raw(0, 0) = 3.5;
    raw(1, 0) = 3.61;
    raw(2, 0) = 4.5;
    raw(3, 0) = 4.66;  // means 3.555 and 4.580
    auto m = label_clusters(manual_model({0, 0, 1, 1}), raw, Role::Active);
    CHECK(m.label_map[1] == Strategy::C);
    CHECK(m.label_map[0] == Strategy::D);
    CHECK(m.label_of(3) == Strategy::C);
}

TEST_CASE("passive label: smaller speed gain is cooperative") {
    Matrix raw = Matrix::Zero(2, kPassiveFeatures);
    raw(0, 0) = 1.5234;
    raw(1, 0) = -5.0103;
    auto m = label_clusters(manual_model({0, 1}), raw, Role::Passive);
    CHECK(m.label_map[1] == Strategy::C);
    CHECK(m.label_map[0] == Strategy::D);
}

TEST_CASE("label ties fall back to max acceleration, then fail") {
    Matrix raw = Matrix::Zero(2, kActiveFeatures);
    raw(0, 0) = raw(1, 0) = 4.0;
    raw(0, 9) = 2.0;
    raw(1, 9) = 1.0;
    auto m = label_clusters(manual_model({0, 1}), raw, Role::Active);
    CHECK(m.label_map[1] == Strategy::C);
    raw(1, 9) = 2.0;
    CHECK_THROWS_AS(label_clusters(manual_model({0, 1}), raw, Role::Active), DataError);
}

TEST_CASE("labels survive cluster index permutation and rescaling") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> z;
    Matrix raw(100, kActiveFeatures);
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
        for (Eigen::Index j = 0; j < raw.cols(); ++j) raw(i, j) = z(rng) + (i < 40 ? 3.0 : 0.0);
    KMeansOptions o;
    o.seed = 1;
    auto fitted = kmeans_fit(standardize_columns(raw), o);
    auto a = label_clusters(fitted, raw, Role::Active);

    auto swapped = fitted;
    for (auto& c : swapped.assignment) c = 1 - c;
    auto b = label_clusters(swapped, raw, Role::Active);

    auto c = label_clusters(fitted, raw * 2.5, Role::Active);
    for (std::size_t i = 0; i < fitted.assignment.size(); ++i) {
        CHECK(a.label_of(i) == b.label_of(i));
        CHECK(a.label_of(i) == c.label_of(i));
    }
}

TEST_CASE("outcome letters follow active then passive") {
    CHECK(outcome_of(Strategy::C, Strategy::D) == Outcome::CD);
    CHECK(outcome_of(Strategy::D, Strategy::C) == Outcome::DC);
    CHECK(outcome_of(Strategy::C, Strategy::C) == Outcome::CC);
    CHECK(outcome_of(Strategy::D, Strategy::D) == Outcome::DD);
}

TEST_CASE("outcome tabulation matches a direct count") {
    std::mt19937_64 rng(23);
    std::vector<trajectory::LaneChangeEvent> events(500);
    std::map<std::tuple<int, int, int>, std::int64_t> oracle;
    for (auto& e : events) {
        e.active_type = rng() % 2 ? VehicleType::AV : VehicleType::HDV;
        e.passive_type = rng() % 2 ? VehicleType::AV : VehicleType::HDV;
        Strategy a = rng() % 2 ? Strategy::C : Strategy::D;
        Strategy p = rng() % 3 ? Strategy::C : Strategy::D;
        e.outcome = outcome_of(a, p);
        ++oracle[{static_cast<int>(*e.outcome), e.active_type == VehicleType::AV ? 0 : 1,
                  e.passive_type == VehicleType::AV ? 0 : 1}];
    }
    events.emplace_back();  // unlabeled event is skipped
    auto t = tabulate_outcomes(events);
    CHECK(t.total() == 500);
    for (int o = 0; o < 4; ++o)
        for (int a = 0; a < 2; ++a)
            for (int p = 0; p < 2; ++p) CHECK(t.counts[o][2 * a + p] == oracle[{o, a, p}]);
}

TEST_CASE("manova: equal means give lambda one") {
    Matrix x(8, 2);
    x << 1, 2, -1, -2, 2, -1, -2, 1, 1, 2, -1, -2, 2, -1, -2, 1;
    std::vector<int> g{0, 0, 0, 0, 1, 1, 1, 1};
    auto r = manova_two_group(x, g);
    CHECK(r.wilks_lambda == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.f_value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.df_num == 2);
    CHECK(r.df_den == 5);
}

TEST_CASE("manova: one feature reduces to SSW / SST") {
    std::vector<double> v{1.0, 2.0, 4.0, 7.0, 3.0, 5.5, 6.0, 8.0, 9.5};
    std::vector<int> g{0, 0, 0, 0, 1, 1, 1, 1, 1};
    Matrix x(9, 1);
    for (int i = 0; i < 9; ++i) x(i, 0) = v[static_cast<std::size_t>(i)];
    // hand univariate ANOVA
    double grand = 0.0;
    for (double d : v) grand += d;
    grand /= 9.0;
    double m0 = (1.0 + 2.0 + 4.0 + 7.0) / 4.0;
    double m1 = (3.0 + 5.5 + 6.0 + 8.0 + 9.5) / 5.0;
    double ssw = 0.0;
    double sst = 0.0;
    for (int i = 0; i < 9; ++i) {
        double m = g[static_cast<std::size_t>(i)] == 0 ? m0 : m1;
        ssw += (v[static_cast<std::size_t>(i)] - m) * (v[static_cast<std::size_t>(i)] - m);
        sst += (v[static_cast<std::size_t>(i)] - grand) * (v[static_cast<std::size_t>(i)] - grand);
    }
    auto r = manova_two_group(x, g);
    CHECK(std::abs(r.wilks_lambda - ssw / sst) < 1e-9);
    double f_anova = ((sst - ssw) / 1.0) / (ssw / 7.0);
    CHECK(r.f_value == doctest::Approx(f_anova).epsilon(1e-9));
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value < 1.0);
}

TEST_CASE("manova: scale invariance and monotone separation") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> z;
    Matrix noise(60, 3);
    for (Eigen::Index i = 0; i < noise.rows(); ++i)
        for (Eigen::Index j = 0; j < noise.cols(); ++j) noise(i, j) = z(rng);
    std::vector<int> g(60);
    for (int i = 0; i < 60; ++i) g[static_cast<std::size_t>(i)] = i < 25 ? 0 : 1;

    double prev = 2.0;
    for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        Matrix x = noise;
        for (int i = 0; i < 25; ++i) x.row(i).array() += shift;
        auto r = manova_two_group(x, g);
        CHECK(r.wilks_lambda > 0.0);
        CHECK(r.wilks_lambda <= 1.0);
        CHECK(r.wilks_lambda < prev);
        prev = r.wilks_lambda;
        auto scaled = manova_two_group(x * 3.0, g);
        CHECK(scaled.wilks_lambda == doctest::Approx(r.wilks_lambda).epsilon(1e-12));
    }
}

TEST_CASE("manova: singular scatter and small groups are rejected") {
    Matrix x(10, 2);
    for (int i = 0; i < 10; ++i) {
        x(i, 0) = i;
        x(i, 1) = 2.0 * i;  // collinear
    }
    std::vector<int> g{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    CHECK_THROWS_AS(manova_two_group(x, g), DataError);
    std::vector<int> small{0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
    x.col(1) = Eigen::VectorXd::LinSpaced(10, 0.0, 1.0).array().square();
    CHECK_THROWS_AS(manova_two_group(x, small), DataError);
}
