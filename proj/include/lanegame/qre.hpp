#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "lanegame/optim.hpp"
#include "lanegame/trajectory.hpp"
#include "lanegame/types.hpp"

namespace lanegame::qre {

constexpr int kBetaCount = 2 * kFittedTypes * 3 * kAugmentedDim;  // 216
constexpr int kLambdaCount = 2 * kFittedTypes;                     // 6
constexpr int kParamCount = kBetaCount + kLambdaCount;             // 222
constexpr int kNullParamCount = 2 * kFittedTypes * 3;              // 18
constexpr double kBetaBound = 20.0;
constexpr double kLambdaMin = 0.01;
constexpr double kLambdaMax = 10.0;
constexpr double kProbClip = 1e-12;
constexpr double kSmoothing = 1e-8;
constexpr int kModelSchemaVersion = 1;

using Augmented = Eigen::Matrix<double, kAugmentedDim, 1>;

// Flat parameter layout: beta[((role * 3 + type) * 3 + outcome) * 12 + slot], then lambda[role * 3 + type].
// outcome runs over CC, CD, DC; DD is the zero baseline.
int beta_index(Role role, InteractionType type, Outcome outcome, int slot);
int lambda_index(Role role, InteractionType type);

struct Diagnostics {
    bool converged = false;
    int iterations = 0;
    int evaluations = 0;
    double objective = 0.0;       // penalized log-likelihood
    double log_likelihood = 0.0;  // raw
    double gradient_norm = 0.0;   // projected, inf-norm
    std::string message;
};

// Means 0, stds 1.
trajectory::StateScaler identity_scaler();

struct UtilityModel {
    Eigen::VectorXd theta = initial_theta();
    double l1_weight = 0.1;
    trajectory::StateScaler scaler = identity_scaler();
    bool null_model = false;
    Diagnostics diagnostics;

    static Eigen::VectorXd initial_theta();  // beta = 0, lambda = 1

    double beta(Role r, InteractionType t, Outcome o, int slot) const { return theta[beta_index(r, t, o, slot)]; }
    Augmented beta_slice(Role r, InteractionType t, Outcome o) const;
    double lambda(Role r, InteractionType t) const { return theta[lambda_index(r, t)]; }
    void set_beta_slice(Role r, InteractionType t, Outcome o, const Augmented& b);
    void set_lambda(Role r, InteractionType t, double v) { theta[lambda_index(r, t)] = v; }

    // Throws DataError when a parameter is out of bounds or not finite.
    void check_bounds() const;
};

nlohmann::json to_json(const UtilityModel& m);
UtilityModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const UtilityModel& m);
UtilityModel load_model(const std::filesystem::path& path);

// One estimation row: standardized augmented state, each role's interaction type, observed choices.
struct Observation {
    Augmented s;
    InteractionType type_active = InteractionType::HDVvsHDV;
    InteractionType type_passive = InteractionType::HDVvsHDV;
    int a = 0;  // active cooperated
    int b = 0;  // passive cooperated
    int pair = 0;  // 2 * active vehicle type + passive vehicle type, AV = 0
};

// Throws DataError for AV-AV pairs, which are never fitted.
std::pair<InteractionType, InteractionType> role_types(VehicleType active, VehicleType passive);

// Events must carry an outcome. Scaler supplies the standardization.
std::vector<Observation> make_observations(std::span<const trajectory::LaneChangeEvent> events,
                                           const trajectory::StateScaler& scaler);

double utility(std::span<const double> beta, std::span<const double> s_tilde);

struct OutcomeUtilities {
    double cc = 0.0;
    double cd = 0.0;
    double dc = 0.0;
};

OutcomeUtilities outcome_utilities(const UtilityModel& m, Role role, InteractionType type, const Augmented& s);

// (U^C, U^D) for a role given the other role's cooperation probability.
std::pair<double, double> expected_utilities(const OutcomeUtilities& u, Role role, double p_other);

struct FixedPointResult {
    double p_active = 0.5;
    double p_passive = 0.5;
    double residual = 0.0;
    int iterations = 0;
    bool bracketed = false;  // damped iteration stalled; solved as a 1-D root instead
};

struct Game {
    OutcomeUtilities active;
    OutcomeUtilities passive;
    double lambda_active = 1.0;
    double lambda_passive = 1.0;
};

Game game_for(const UtilityModel& m, const Augmented& s, InteractionType type_active, InteractionType type_passive);

// Throws NumericError carrying the last residual when neither solver reaches 1e-10.
FixedPointResult solve_fixed_point(const Game& g);
FixedPointResult solve_fixed_point(const UtilityModel& m, const Observation& o);

double log_likelihood(const UtilityModel& m, std::span<const Observation> obs);

// Penalized objective J = LL - l1 * sum sqrt(beta^2 + eps) and its analytic gradient.
double penalized_objective(const Eigen::VectorXd& theta, std::span<const Observation> obs, double l1_weight,
                           Eigen::VectorXd* gradient);

// Equilibrium selection makes the likelihood jump where an event has several equilibria,
// so fits default to a non-monotone line search.
inline optim::BoxOptions default_fit_optimizer() {
    optim::BoxOptions o;
    o.nonmonotone_window = 10;
    return o;
}

struct FitOptions {
    double l1_weight = 0.1;
    optim::BoxOptions optimizer = default_fit_optimizer();
};

// Raised when the optimizer stops without converging; carries the best parameters reached.
class FitError : public NumericError {
public:
    FitError(const std::string& what, UtilityModel best) : NumericError(what), best(std::move(best)) {}
    UtilityModel best;
};

// Requires all three fitted interaction pairs in the data.
UtilityModel fit(std::span<const Observation> obs, const trajectory::StateScaler& scaler, const FitOptions& opts = {});
UtilityModel fit_null(std::span<const Observation> obs, const trajectory::StateScaler& scaler,
                      const FitOptions& opts = {});

struct Validation {
    double ll_full = 0.0;
    double ll_null = 0.0;
    double lrt_stat = 0.0;
    int df = kParamCount - kNullParamCount;
    double p_value = 1.0;
    double mcfadden = 0.0;
    bool full_below_null = false;
};

Validation validate(double ll_full, double ll_null, int df = kParamCount - kNullParamCount);
Validation validate(const UtilityModel& full, const UtilityModel& null, std::span<const Observation> obs);

// Index 0 is the intercept (1.0); entries 1..11 are the state variables. +inf when perfectly collinear.
std::array<double, kAugmentedDim> vif(const Eigen::MatrixXd& states);

struct ClassMetrics {
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::int64_t support = 0;
};

ClassMetrics metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);

struct Score {
    std::array<std::array<std::int64_t, 4>, 4> confusion{};  // [truth][predicted]
    std::array<ClassMetrics, 4> per_outcome;
    std::optional<double> macro_precision;
    std::optional<double> macro_recall;
    std::optional<double> macro_f1;
    std::array<double, 2> expected_cooperation{};  // per role
    std::array<double, 2> expected_stdev{};
    std::array<std::int64_t, 2> observed_cooperation{};
    std::int64_t n = 0;
};

Score score_predictions(std::span<const Outcome> truth, std::span<const Outcome> predicted,
                        std::span<const double> p_active, std::span<const double> p_passive);
Score predict_and_score(const UtilityModel& m, std::span<const Observation> obs);

struct SyntheticConfig {
    UtilityModel theta_star;  // scaler supplies the state distribution's means and stds
    Eigen::MatrixXd correlation = Eigen::MatrixXd::Identity(kStateDim, kStateDim);
    std::array<double, kFittedTypes> type_shares{1.0 / 3, 1.0 / 3, 1.0 / 3};  // AV_vs_HDV, HDV_vs_AV, HDV_vs_HDV active
    std::size_t n = 1000;
    std::uint64_t seed = 0;
};

// Events carry raw states, vehicle types and sampled outcomes; features are left NaN.
std::vector<trajectory::LaneChangeEvent> generate_synthetic(const SyntheticConfig& cfg);

struct CrossValidation {
    std::vector<Score> splits;
    std::vector<double> test_log_likelihood;
};

// Stratified by interaction pair; each split refits the scaler and the full model on its train part.
CrossValidation cross_validate(std::span<const trajectory::LaneChangeEvent> events, const FitOptions& opts,
                               int splits, double train_share, std::uint64_t seed);

}  // namespace lanegame::qre
