#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

namespace lanegame::optim {

// Returns f(x) and writes the gradient into g.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& g)>;

struct BoxOptions {
    int memory = 10;
    int max_iterations = 15000;
    double ftol = 2.220446049250313e-9;  // relative decrease
    double pgtol = 1e-5;                 // projected gradient, inf-norm
    int max_backtracks = 40;
    // > 1: Armijo against the worst of the last N accepted values, which lets the search step across
    // small jumps; stops after N iterations without a relative gain above ftol. Best point is returned.
    int nonmonotone_window = 1;
};

struct BoxResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd gradient;
    double projected_gradient_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
};

// Projected L-BFGS for min f(x) s.t. lower <= x <= upper.
// Never throws on slow progress; callers inspect converged/message.
BoxResult minimize_box(const Objective& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const BoxOptions& opts = {});

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper);

}  // namespace lanegame::optim
