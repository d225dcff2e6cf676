#include "lanegame/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace lanegame::optim {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    return x.cwiseMax(lower).cwiseMin(upper);
}

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper) {
    // same measure as L-BFGS-B: |P(x - g) - x|
    return (project(x - g, lower, upper) - x).lpNorm<Eigen::Infinity>();
}

namespace {

struct Pair {
    Eigen::VectorXd s;
    Eigen::VectorXd y;
    double rho;
};

// Variables pinned at a bound with the gradient pushing outward.
Eigen::ArrayXd free_mask(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                         const Eigen::VectorXd& upper) {
    Eigen::ArrayXd m = Eigen::ArrayXd::Ones(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if ((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)) m[i] = 0.0;
    }
    return m;
}

Eigen::VectorXd two_loop(const std::deque<Pair>& mem, const Eigen::VectorXd& g, const Eigen::ArrayXd& mask) {
    Eigen::VectorXd q = (g.array() * mask).matrix();
    std::vector<double> alpha(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
        alpha[k] = mem[k].rho * mem[k].s.dot(q);
        q -= alpha[k] * (mem[k].y.array() * mask).matrix();
    }
    if (!mem.empty()) {
        const auto& last = mem.back();
        q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
        double beta = mem[k].rho * mem[k].y.dot(q);
        q += (alpha[k] - beta) * (mem[k].s.array() * mask).matrix();
    }
    return -(q.array() * mask).matrix();
}

}  // namespace

BoxResult minimize_box(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const BoxOptions& opts) {
    BoxResult r;
    Eigen::VectorXd x = project(x0, lower, upper);
    Eigen::VectorXd g(x.size());
    double fx = f(x, g);
    r.evaluations = 1;
    if (!std::isfinite(fx)) {
        r.x = x;
        r.f = fx;
        r.gradient = g;
        r.message = "objective is not finite at the starting point";
        return r;
    }
    std::deque<Pair> mem;
    bool fresh = true;
    bool restarted = false;
    std::deque<double> recent{fx};
    Eigen::VectorXd best_x = x;
    Eigen::VectorXd best_g = g;
    double best_f = fx;
    int since_best = 0;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        double pg = projected_gradient_norm(x, g, lower, upper);
        if (pg <= opts.pgtol) {
            r.converged = true;
            r.message = "projected gradient below tolerance";
            break;
        }
        Eigen::ArrayXd mask = free_mask(x, g, lower, upper);
        Eigen::VectorXd d = two_loop(mem, g, mask);
        if (!(d.dot(g) < 0.0)) {
            mem.clear();
            d = -(g.array() * mask).matrix();
            fresh = true;
        }
        double f_ref = *std::max_element(recent.begin(), recent.end());
        double step = 1.0;
        if (fresh) step = std::min(1.0, 1.0 / std::max(d.lpNorm<Eigen::Infinity>(), 1e-300));

        Eigen::VectorXd xn;
        Eigen::VectorXd gn(x.size());
        double fn = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            xn = project(x + step * d, lower, upper);
            fn = f(xn, gn);
            ++r.evaluations;
            if (std::isfinite(fn) && fn <= f_ref + 1e-4 * g.dot(xn - x)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (!fresh) {
                // stale curvature; retry once along the projected gradient
                mem.clear();
                fresh = true;
                --it;
                continue;
            }
            r.converged = true;
            r.message = "line search stalled at machine precision";
            break;
        }
        Eigen::VectorXd s = xn - x;
        Eigen::VectorXd y = gn - g;
        double sy = s.dot(y);
        if (sy > 1e-10 * y.squaredNorm()) {
            mem.push_back({s, y, 1.0 / sy});
            if (static_cast<int>(mem.size()) > opts.memory) mem.pop_front();
        }
        double drop = fx - fn;
        recent.push_back(fn);
        if (static_cast<int>(recent.size()) > std::max(1, opts.nonmonotone_window)) recent.pop_front();
        if (fn < best_f) {
            since_best = best_f - fn > opts.ftol * std::max(std::abs(best_f), 1.0) ? 0 : since_best + 1;
            best_f = fn;
            best_x = xn;
            best_g = gn;
        } else {
            ++since_best;
        }
        x = std::move(xn);
        g = gn;
        fx = fn;
        fresh = mem.empty();
        r.iterations = it;
        bool stalled = opts.nonmonotone_window > 1 ? since_best >= opts.nonmonotone_window
                                                   : drop <= opts.ftol * std::max({std::abs(fx), std::abs(fx + drop), 1.0});
        if (stalled) {
            // a stale quasi-Newton model can crawl along a kink; retry once from a clean memory
            if (!mem.empty() && !restarted) {
                mem.clear();
                fresh = true;
                restarted = true;
                continue;
            }
            r.converged = true;
            r.message = "relative reduction below tolerance";
            break;
        }
        restarted = false;
        if (it == opts.max_iterations) r.message = "iteration limit reached";
    }
    if (best_f < fx) {
        x = best_x;
        g = best_g;
        fx = best_f;
    }
    r.x = std::move(x);
    r.f = fx;
    r.gradient = std::move(g);
    r.projected_gradient_norm = projected_gradient_norm(r.x, r.gradient, lower, upper);
    return r;
}

}  // namespace lanegame::optim
