#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lanegame/trajectory.hpp"
#include "lanegame/types.hpp"

namespace lanegame::clustering {

using Matrix = Eigen::MatrixXd;  // rows = observations

struct ClusterModel {
    int k = 2;
    Matrix centroids;                     // k x p, standardized units
    std::vector<int> assignment;          // per row
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> inertia_history;  // one entry per Lloyd iteration of the kept restart
    std::array<Strategy, 2> label_map{Strategy::C, Strategy::D};
    bool labeled = false;
    Role role = Role::Active;

    Strategy label_of(std::size_t row) const { return label_map[static_cast<std::size_t>(assignment[row])]; }
};

struct KMeansOptions {
    int k = 2;
    int restarts = 10;
    int max_iterations = 300;
    double tolerance = 1e-8;  // max centroid shift
    std::uint64_t seed = 0;
};

// Lloyd iterations from k-means++ seeds, best inertia over restarts.
// Throws DataError when fewer than k distinct points exist or every restart ends with an empty cluster.
ClusterModel kmeans_fit(const Matrix& points, const KMeansOptions& opts);

// z-score each column (population std); constant columns are left centered.
Matrix standardize_columns(const Matrix& raw);

// Active: larger mean lane-changing time (column 0) is cooperative.
// Passive: smaller mean speed gain (column 0) is cooperative.
// Ties go to the cluster with the smaller mean max-acceleration (active column 9, passive column 1).
ClusterModel label_clusters(ClusterModel model, const Matrix& raw_features, Role role);

inline Outcome outcome_of(Strategy active_label, Strategy passive_label) {
    return make_outcome(active_label, passive_label);
}

// Outcome counts by (active type, passive type); pair index = 2 * active + passive with AV = 0.
struct OutcomeTable {
    std::array<std::array<std::int64_t, 4>, 4> counts{};  // [outcome][pair]
    std::int64_t total() const;
};

OutcomeTable tabulate_outcomes(std::span<const trajectory::LaneChangeEvent> events);

struct ManovaResult {
    double wilks_lambda = 1.0;
    double f_value = 0.0;
    double p_value = 1.0;
    int df_num = 0;
    int df_den = 0;
};

// Exact two-group transform of Wilks' lambda. Throws DataError if the within-group matrix is singular.
ManovaResult manova_two_group(const Matrix& points, std::span<const int> groups);

Matrix active_feature_matrix(std::span<const trajectory::LaneChangeEvent> events);
Matrix passive_feature_matrix(std::span<const trajectory::LaneChangeEvent> events);

}  // namespace lanegame::clustering
