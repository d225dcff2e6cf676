#include "lanegame/clustering.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>

#include "lanegame/stats.hpp"

namespace lanegame::clustering {

namespace {

int count_distinct(const Matrix& x, int cap) {
    std::vector<Eigen::Index> reps;
    for (Eigen::Index i = 0; i < x.rows() && static_cast<int>(reps.size()) < cap; ++i) {
        bool seen = false;
        for (auto r : reps) {
            if (x.row(i) == x.row(r)) {
                seen = true;
                break;
            }
        }
        if (!seen) reps.push_back(i);
    }
    return static_cast<int>(reps.size());
}

struct Run {
    Matrix centroids;
    std::vector<int> assignment;
    double inertia = std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::vector<double> history;
    bool ok = false;
};

bool seed_plus_plus(const Matrix& x, int k, std::mt19937_64& rng, Matrix& centroids) {
    const auto n = x.rows();
    centroids.resize(k, x.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centroids.row(0) = x.row(pick(rng));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - centroids.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
        double total = d2.sum();
        if (!(total > 0.0)) return false;
        double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        Eigen::Index chosen = n - 1;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            acc += d2[i];
            if (u < acc) {
                chosen = i;
                break;
            }
        }
        centroids.row(c) = x.row(chosen);
        for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - centroids.row(c)).squaredNorm());
    }
    return true;
}

Run lloyd(const Matrix& x, Matrix centroids, const KMeansOptions& opts) {
    const auto n = x.rows();
    const int k = static_cast<int>(centroids.rows());
    Run run;
    run.assignment.assign(static_cast<std::size_t>(n), 0);
    for (int it = 1; it <= opts.max_iterations; ++it) {
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double d = (x.row(i) - centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            run.assignment[static_cast<std::size_t>(i)] = best;
            inertia += best_d;
        }
        run.history.push_back(inertia);
        Matrix next = Matrix::Zero(k, x.cols());
        std::vector<int> sizes(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            int c = run.assignment[static_cast<std::size_t>(i)];
            next.row(c) += x.row(i);
            ++sizes[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<std::size_t>(c)] == 0) return run;  // empty cluster: degenerate restart
            next.row(c) /= sizes[static_cast<std::size_t>(c)];
        }
        double shift = 0.0;
        for (int c = 0; c < k; ++c) shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
        centroids = std::move(next);
        run.iterations = it;
        if (shift < opts.tolerance) break;
    }
    // final inertia against the converged centroids
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        inertia += (x.row(i) - centroids.row(run.assignment[static_cast<std::size_t>(i)])).squaredNorm();
    }
    run.inertia = inertia;
    run.centroids = std::move(centroids);
    run.ok = true;
    return run;
}

double logdet_spd(const Matrix& m, bool& ok) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        ok = false;
        return 0.0;
    }
    Matrix l = llt.matrixL();
    // numerically rank-deficient: a pivot collapses relative to its diagonal entry
    double s = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        if (!(l(i, i) * l(i, i) > 1e-12 * m(i, i))) {
            ok = false;
            return 0.0;
        }
        s += std::log(l(i, i));
    }
    ok = true;
    return 2.0 * s;
}

}  // namespace

ClusterModel kmeans_fit(const Matrix& points, const KMeansOptions& opts) {
    if (opts.k < 1) throw DataError("k must be positive");
    if (points.rows() < opts.k || count_distinct(points, opts.k) < opts.k) {
        throw DataError("k-means needs at least " + std::to_string(opts.k) + " distinct points");
    }
    std::mt19937_64 rng(opts.seed);
    Run best;
    for (int r = 0; r < std::max(1, opts.restarts); ++r) {
        Matrix seeds;
        if (!seed_plus_plus(points, opts.k, rng, seeds)) continue;
        Run run = lloyd(points, std::move(seeds), opts);
        if (run.ok && run.inertia < best.inertia) best = std::move(run);
    }
    if (!best.ok) throw DataError("k-means: every restart produced an empty cluster");
    ClusterModel m;
    m.k = opts.k;
    m.centroids = std::move(best.centroids);
    m.assignment = std::move(best.assignment);
    m.inertia = best.inertia;
    m.iterations = best.iterations;
    m.inertia_history = std::move(best.history);
    return m;
}

Matrix standardize_columns(const Matrix& raw) {
    Matrix out = raw;
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
        std::vector<double> col(raw.col(j).data(), raw.col(j).data() + raw.rows());
        double m = stats::mean(col);
        double s = stats::population_std(col);
        out.col(j).array() -= m;
        if (s > 0.0) out.col(j) /= s;
    }
    return out;
}

ClusterModel label_clusters(ClusterModel model, const Matrix& raw, Role role) {
    if (model.k != 2) throw DataError("labeling needs exactly two clusters");
    if (static_cast<std::size_t>(raw.rows()) != model.assignment.size()) {
        throw DataError("feature rows do not match the cluster assignment");
    }
    const Eigen::Index primary = 0;
    const Eigen::Index tiebreak = role == Role::Active ? 9 : 1;
    std::array<double, 2> m_primary{0.0, 0.0};
    std::array<double, 2> m_tie{0.0, 0.0};
    std::array<int, 2> n{0, 0};
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        auto c = static_cast<std::size_t>(model.assignment[static_cast<std::size_t>(i)]);
        m_primary[c] += raw(i, primary);
        m_tie[c] += raw(i, tiebreak);
        ++n[c];
    }
    if (n[0] == 0 || n[1] == 0) throw DataError("labeling needs two non-empty clusters");
    for (int c = 0; c < 2; ++c) {
        m_primary[c] /= n[c];
        m_tie[c] /= n[c];
    }
    int coop = -1;
    if (m_primary[0] != m_primary[1]) {
        bool first_larger = m_primary[0] > m_primary[1];
        coop = (role == Role::Active) == first_larger ? 0 : 1;
    } else if (m_tie[0] != m_tie[1]) {
        coop = m_tie[0] < m_tie[1] ? 0 : 1;
    } else {
        throw DataError("clusters tie on both labeling criteria; label manually");
    }
    model.label_map[static_cast<std::size_t>(coop)] = Strategy::C;
    model.label_map[static_cast<std::size_t>(1 - coop)] = Strategy::D;
    model.labeled = true;
    model.role = role;
    return model;
}

std::int64_t OutcomeTable::total() const {
    std::int64_t t = 0;
    for (const auto& row : counts)
        for (auto v : row) t += v;
    return t;
}

OutcomeTable tabulate_outcomes(std::span<const trajectory::LaneChangeEvent> events) {
    OutcomeTable t;
    for (const auto& e : events) {
        if (!e.outcome) continue;
        int pair = 2 * static_cast<int>(e.active_type) + static_cast<int>(e.passive_type);
        ++t.counts[static_cast<std::size_t>(*e.outcome)][static_cast<std::size_t>(pair)];
    }
    return t;
}

ManovaResult manova_two_group(const Matrix& x, std::span<const int> groups) {
    const auto n = x.rows();
    const auto p = x.cols();
    if (static_cast<std::size_t>(n) != groups.size()) throw DataError("group labels do not match rows");
    std::array<Eigen::RowVectorXd, 2> sums{Eigen::RowVectorXd::Zero(p), Eigen::RowVectorXd::Zero(p)};
    std::array<Eigen::Index, 2> counts{0, 0};
    for (Eigen::Index i = 0; i < n; ++i) {
        int g = groups[static_cast<std::size_t>(i)];
        if (g != 0 && g != 1) throw DataError("MANOVA groups must be 0 or 1");
        sums[static_cast<std::size_t>(g)] += x.row(i);
        ++counts[static_cast<std::size_t>(g)];
    }
    for (auto c : counts) {
        if (c <= p) throw DataError("each MANOVA group needs more observations than features");
    }
    Eigen::RowVectorXd grand = (sums[0] + sums[1]) / static_cast<double>(n);
    std::array<Eigen::RowVectorXd, 2> means{sums[0] / static_cast<double>(counts[0]),
                                            sums[1] / static_cast<double>(counts[1])};
    Matrix within = Matrix::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd d = x.row(i) - means[static_cast<std::size_t>(groups[static_cast<std::size_t>(i)])];
        within.noalias() += d.transpose() * d;
    }
    Matrix between = Matrix::Zero(p, p);
    for (int g = 0; g < 2; ++g) {
        Eigen::RowVectorXd d = means[static_cast<std::size_t>(g)] - grand;
        between.noalias() += static_cast<double>(counts[static_cast<std::size_t>(g)]) * d.transpose() * d;
    }
    bool ok_w = false;
    bool ok_t = false;
    double ld_w = logdet_spd(within, ok_w);
    double ld_t = logdet_spd(within + between, ok_t);
    if (!ok_w || !ok_t) throw DataError("within-group scatter matrix is singular; remove collinear features");
    ManovaResult r;
    r.wilks_lambda = std::min(1.0, std::exp(ld_w - ld_t));
    r.df_num = static_cast<int>(p);
    r.df_den = static_cast<int>(n - p - 1);
    r.f_value = (static_cast<double>(r.df_den) / static_cast<double>(r.df_num)) * (1.0 - r.wilks_lambda) /
                r.wilks_lambda;
    r.p_value = stats::f_sf(r.f_value, r.df_num, r.df_den);
    return r;
}

Matrix active_feature_matrix(std::span<const trajectory::LaneChangeEvent> events) {
    Matrix m(static_cast<Eigen::Index>(events.size()), kActiveFeatures);
    for (std::size_t i = 0; i < events.size(); ++i)
        for (int j = 0; j < kActiveFeatures; ++j) m(static_cast<Eigen::Index>(i), j) = events[i].active_features[j];
    return m;
}

Matrix passive_feature_matrix(std::span<const trajectory::LaneChangeEvent> events) {
    Matrix m(static_cast<Eigen::Index>(events.size()), kPassiveFeatures);
    for (std::size_t i = 0; i < events.size(); ++i)
        for (int j = 0; j < kPassiveFeatures; ++j) m(static_cast<Eigen::Index>(i), j) = events[i].passive_features[j];
    return m;
}

}  // namespace lanegame::clustering
