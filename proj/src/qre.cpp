#include "lanegame/qre.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "lanegame/io.hpp"
#include "lanegame/stats.hpp"

namespace lanegame::qre {

namespace {

constexpr double kFixedPointTol = 1e-10;
constexpr int kFixedPointCap = 500;
constexpr double kDamping = 0.5;

constexpr std::array<Outcome, 3> kFittedOutcomes{Outcome::CC, Outcome::CD, Outcome::DC};
constexpr std::array<InteractionType, 3> kFittedTypeList{InteractionType::AVvsHDV, InteractionType::HDVvsAV,
                                                         InteractionType::HDVvsHDV};

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

int fitted_type(InteractionType t) {
    if (t == InteractionType::AVvsAV) throw DataError("AV_vs_AV utilities are not estimated");
    return static_cast<int>(t);
}

double clip(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

// Slope of the expected-utility difference in the other role's probability.
double coupling(const OutcomeUtilities& u, Role r) {
    return r == Role::Active ? u.cc - u.cd - u.dc : u.cc - u.dc - u.cd;
}

double delta_u(const OutcomeUtilities& u, Role r, double p_other) {
    auto [uc, ud] = expected_utilities(u, r, p_other);
    return uc - ud;
}

}  // namespace

int beta_index(Role role, InteractionType type, Outcome outcome, int slot) {
    if (outcome == Outcome::DD) throw DataError("DD utilities are fixed at zero");
    return ((static_cast<int>(role) * 3 + fitted_type(type)) * 3 + static_cast<int>(outcome)) * kAugmentedDim + slot;
}

int lambda_index(Role role, InteractionType type) {
    return kBetaCount + static_cast<int>(role) * 3 + fitted_type(type);
}

trajectory::StateScaler identity_scaler() {
    std::array<double, kStateDim> m{};
    std::array<double, kStateDim> s{};
    s.fill(1.0);
    return trajectory::StateScaler(m, s);
}

Eigen::VectorXd UtilityModel::initial_theta() {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(kParamCount);
    t.tail(kLambdaCount).setOnes();
    return t;
}

Augmented UtilityModel::beta_slice(Role r, InteractionType t, Outcome o) const {
    return theta.segment<kAugmentedDim>(beta_index(r, t, o, 0));
}

void UtilityModel::set_beta_slice(Role r, InteractionType t, Outcome o, const Augmented& b) {
    theta.segment<kAugmentedDim>(beta_index(r, t, o, 0)) = b;
}

void UtilityModel::check_bounds() const {
    if (theta.size() != kParamCount) {
        throw DataError(fmt::format("model has {} parameters, expected {}", theta.size(), kParamCount));
    }
    for (int i = 0; i < kParamCount; ++i) {
        double v = theta[i];
        bool is_beta = i < kBetaCount;
        double lo = is_beta ? -kBetaBound : kLambdaMin;
        double hi = is_beta ? kBetaBound : kLambdaMax;
        if (!std::isfinite(v) || v < lo || v > hi) {
            throw DataError(fmt::format("{} parameter {} = {} outside [{}, {}]", is_beta ? "beta" : "lambda",
                                        is_beta ? i : i - kBetaCount, v, lo, hi));
        }
    }
}

nlohmann::json to_json(const UtilityModel& m) {
    nlohmann::json j;
    j["schema_version"] = kModelSchemaVersion;
    j["layout"] = "beta[role][interaction_type][outcome] = 12 coefficients (intercept, s1..s11); DD fixed at 0";
    j["l1_weight"] = m.l1_weight;
    j["null_model"] = m.null_model;
    j["standardization"] = {{"means", m.scaler.means()}, {"stds", m.scaler.stds()}};
    nlohmann::json beta;
    nlohmann::json lambda;
    for (Role r : {Role::Active, Role::Passive}) {
        auto rn = std::string(to_string(r));
        for (auto t : kFittedTypeList) {
            auto tn = std::string(to_string(t));
            for (auto o : kFittedOutcomes) {
                auto b = m.beta_slice(r, t, o);
                beta[rn][tn][std::string(to_string(o))] = std::vector<double>(b.data(), b.data() + b.size());
            }
            lambda[rn][tn] = m.lambda(r, t);
        }
    }
    j["beta"] = beta;
    j["lambda"] = lambda;
    const auto& d = m.diagnostics;
    j["diagnostics"] = {{"converged", d.converged},          {"iterations", d.iterations},
                        {"evaluations", d.evaluations},      {"objective", d.objective},
                        {"log_likelihood", d.log_likelihood}, {"gradient_norm", d.gradient_norm},
                        {"message", d.message}};
    return j;
}

UtilityModel model_from_json(const nlohmann::json& j) {
    try {
        int version = j.at("schema_version").get<int>();
        if (version != kModelSchemaVersion) {
            throw DataError(fmt::format("model schema version {} is not supported (expected {})", version,
                                        kModelSchemaVersion));
        }
        UtilityModel m;
        m.l1_weight = j.at("l1_weight").get<double>();
        m.null_model = j.value("null_model", false);
        auto means = j.at("standardization").at("means").get<std::array<double, kStateDim>>();
        auto stds = j.at("standardization").at("stds").get<std::array<double, kStateDim>>();
        m.scaler = trajectory::StateScaler(means, stds);
        for (Role r : {Role::Active, Role::Passive}) {
            auto rn = std::string(to_string(r));
            for (auto t : kFittedTypeList) {
                auto tn = std::string(to_string(t));
                for (auto o : kFittedOutcomes) {
                    auto v = j.at("beta").at(rn).at(tn).at(std::string(to_string(o))).get<std::vector<double>>();
                    if (v.size() != kAugmentedDim) throw DataError("beta slice must have 12 coefficients");
                    m.set_beta_slice(r, t, o, Eigen::Map<const Augmented>(v.data()));
                }
                m.set_lambda(r, t, j.at("lambda").at(rn).at(tn).get<double>());
            }
        }
        if (j.contains("diagnostics")) {
            const auto& d = j["diagnostics"];
            m.diagnostics.converged = d.value("converged", false);
            m.diagnostics.iterations = d.value("iterations", 0);
            m.diagnostics.evaluations = d.value("evaluations", 0);
            m.diagnostics.objective = d.value("objective", 0.0);
            m.diagnostics.log_likelihood = d.value("log_likelihood", 0.0);
            m.diagnostics.gradient_norm = d.value("gradient_norm", 0.0);
            m.diagnostics.message = d.value("message", "");
        }
        m.check_bounds();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model JSON: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const UtilityModel& m) {
    write_text_file(path, to_json(m).dump(2) + "\n");
}

UtilityModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

std::pair<InteractionType, InteractionType> role_types(VehicleType active, VehicleType passive) {
    if (active == VehicleType::AV && passive == VehicleType::AV) {
        throw DataError("AV-AV interactions cannot be used for estimation");
    }
    return {interaction_type(active, passive), interaction_type(passive, active)};
}

std::vector<Observation> make_observations(std::span<const trajectory::LaneChangeEvent> events,
                                           const trajectory::StateScaler& scaler) {
    std::vector<Observation> out;
    out.reserve(events.size());
    for (const auto& e : events) {
        if (!e.outcome) throw DataError(fmt::format("event {} has no outcome label", e.event_id));
        Observation o;
        o.s = scaler.transform(e.state);
        std::tie(o.type_active, o.type_passive) = role_types(e.active_type, e.passive_type);
        o.a = active_choice(*e.outcome) == Strategy::C ? 1 : 0;
        o.b = passive_choice(*e.outcome) == Strategy::C ? 1 : 0;
        o.pair = 2 * static_cast<int>(e.active_type) + static_cast<int>(e.passive_type);
        out.push_back(o);
    }
    return out;
}

double utility(std::span<const double> beta, std::span<const double> s_tilde) {
    if (beta.size() != kAugmentedDim || s_tilde.size() != kAugmentedDim) {
        throw DataError(fmt::format("utility needs two length-12 vectors, got {} and {}", beta.size(),
                                    s_tilde.size()));
    }
    double u = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) u += beta[i] * s_tilde[i];
    return u;
}

OutcomeUtilities outcome_utilities(const UtilityModel& m, Role role, InteractionType type, const Augmented& s) {
    return {m.beta_slice(role, type, Outcome::CC).dot(s), m.beta_slice(role, type, Outcome::CD).dot(s),
            m.beta_slice(role, type, Outcome::DC).dot(s)};
}

std::pair<double, double> expected_utilities(const OutcomeUtilities& u, Role role, double p_other) {
    if (role == Role::Active) {
        // the passive vehicle's choice picks CC/CD when cooperating, DC/DD when defecting
        return {p_other * u.cc + (1.0 - p_other) * u.cd, p_other * u.dc};
    }
    return {p_other * u.cc + (1.0 - p_other) * u.dc, p_other * u.cd};
}

Game game_for(const UtilityModel& m, const Augmented& s, InteractionType type_active, InteractionType type_passive) {
    return {outcome_utilities(m, Role::Active, type_active, s), outcome_utilities(m, Role::Passive, type_passive, s),
            m.lambda(Role::Active, type_active), m.lambda(Role::Passive, type_passive)};
}

FixedPointResult solve_fixed_point(const Game& g) {
    auto fa = [&](double pp) { return sigmoid(g.lambda_active * delta_u(g.active, Role::Active, pp)); };
    auto fp = [&](double pa) { return sigmoid(g.lambda_passive * delta_u(g.passive, Role::Passive, pa)); };
    auto residual_at = [&](double pa, double pp) { return std::max(std::abs(pa - fa(pp)), std::abs(pp - fp(pa))); };

    FixedPointResult r;
    double pa = 0.5;
    double pp = 0.5;
    double residual = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= kFixedPointCap; ++it) {
        double na = fa(pp);
        double np = fp(pa);
        residual = std::max(std::abs(pa - na), std::abs(pp - np));
        if (residual < kFixedPointTol) {
            // one undamped application is usually closer still
            double polished = residual_at(na, np);
            bool take = polished <= residual;
            r.p_active = take ? na : pa;
            r.p_passive = take ? np : pp;
            r.residual = take ? polished : residual;
            r.iterations = it;
            return r;
        }
        pa = (1.0 - kDamping) * pa + kDamping * na;
        pp = (1.0 - kDamping) * pp + kDamping * np;
    }

    // Each composite map x - f(g(x)) is <= 0 at 0 and >= 0 at 1, so a root is always bracketed.
    // Grow a bracket around the last damped iterate first so that, with several equilibria,
    // the one the iteration was heading for is kept. Solve in each role's probability.
    auto root = [](auto h, double start) {
        double lo = 0.0;
        double hi = 1.0;
        for (double w = 1e-6; w < 1.0; w *= 4.0) {
            double a = std::max(0.0, start - w);
            double b = std::min(1.0, start + w);
            if ((h(a) <= 0.0) != (h(b) <= 0.0) || h(a) == 0.0 || h(b) == 0.0) {
                lo = a;
                hi = b;
                break;
            }
        }
        double h_lo = h(lo);
        double h_hi = h(hi);
        if (h_lo == 0.0) return lo;
        if (h_hi == 0.0) return hi;
        std::uintmax_t max_iter = 300;
        auto b = boost::math::tools::toms748_solve(h, lo, hi, h_lo, h_hi,
                                                   boost::math::tools::eps_tolerance<double>(), max_iter);
        return std::abs(h(b.first)) <= std::abs(h(b.second)) ? b.first : b.second;
    };
    double xa = root([&](double x) { return x - fa(fp(x)); }, pa);
    double xp = root([&](double x) { return x - fp(fa(x)); }, pp);
    std::array<std::pair<double, double>, 4> candidates{
        std::pair{xa, fp(xa)}, std::pair{fa(fp(xa)), fp(xa)}, std::pair{fa(xp), xp}, std::pair{fa(xp), fp(fa(xp))}};
    double best = std::numeric_limits<double>::infinity();
    for (auto [ca, cp] : candidates) {
        double res = residual_at(ca, cp);
        if (res < best) {
            best = res;
            r.p_active = ca;
            r.p_passive = cp;
        }
    }
    if (!(best < kFixedPointTol)) {
        throw NumericError(fmt::format("fixed point did not converge: residual {:.3e} after {} damped iterations and "
                                       "a bracketed solve",
                                       std::min(residual, best), kFixedPointCap));
    }
    r.residual = best;
    r.iterations = kFixedPointCap;
    r.bracketed = true;
    return r;
}

FixedPointResult solve_fixed_point(const UtilityModel& m, const Observation& o) {
    return solve_fixed_point(game_for(m, o.s, o.type_active, o.type_passive));
}

double log_likelihood(const UtilityModel& m, std::span<const Observation> obs) {
    double ll = 0.0;
    for (const auto& o : obs) {
        auto fp = solve_fixed_point(m, o);
        double pa = clip(fp.p_active);
        double pp = clip(fp.p_passive);
        ll += o.a ? std::log(pa) : std::log(1.0 - pa);
        ll += o.b ? std::log(pp) : std::log(1.0 - pp);
    }
    return ll;
}

double penalized_objective(const Eigen::VectorXd& theta, std::span<const Observation> obs, double l1_weight,
                           Eigen::VectorXd* gradient) {
    UtilityModel m;
    m.theta = theta;
    if (gradient) gradient->setZero(kParamCount);
    double ll = 0.0;
    for (const auto& o : obs) {
        Game g = game_for(m, o.s, o.type_active, o.type_passive);
        auto fp = solve_fixed_point(g);
        double pa = fp.p_active;
        double pp = fp.p_passive;
        double ca_p = clip(pa);
        double cp_p = clip(pp);
        ll += o.a ? std::log(ca_p) : std::log(1.0 - ca_p);
        ll += o.b ? std::log(cp_p) : std::log(1.0 - cp_p);
        if (!gradient) continue;

        // dLL/dp, zero where the clip is active
        double ca = ca_p == pa ? (o.a ? 1.0 / pa : -1.0 / (1.0 - pa)) : 0.0;
        double cp = cp_p == pp ? (o.b ? 1.0 / pp : -1.0 / (1.0 - pp)) : 0.0;
        if (ca == 0.0 && cp == 0.0) continue;

        double qa = pa * (1.0 - pa);
        double qp = pp * (1.0 - pp);
        double ja = qa * g.lambda_active * coupling(g.active, Role::Active);
        double jp = qp * g.lambda_passive * coupling(g.passive, Role::Passive);
        double det = 1.0 - ja * jp;
        // implicit differentiation of p = G(p, theta) through the 2x2 coupling
        double wa = (ca + cp * jp) / det;
        double wp = (ca * ja + cp) / det;

        auto& gr = *gradient;
        double ka = wa * qa * g.lambda_active;
        gr.segment<kAugmentedDim>(beta_index(Role::Active, o.type_active, Outcome::CC, 0)) += ka * pp * o.s;
        gr.segment<kAugmentedDim>(beta_index(Role::Active, o.type_active, Outcome::CD, 0)) += ka * (1.0 - pp) * o.s;
        gr.segment<kAugmentedDim>(beta_index(Role::Active, o.type_active, Outcome::DC, 0)) -= ka * pp * o.s;
        gr[lambda_index(Role::Active, o.type_active)] += wa * qa * delta_u(g.active, Role::Active, pp);

        double kp = wp * qp * g.lambda_passive;
        gr.segment<kAugmentedDim>(beta_index(Role::Passive, o.type_passive, Outcome::CC, 0)) += kp * pa * o.s;
        gr.segment<kAugmentedDim>(beta_index(Role::Passive, o.type_passive, Outcome::DC, 0)) += kp * (1.0 - pa) * o.s;
        gr.segment<kAugmentedDim>(beta_index(Role::Passive, o.type_passive, Outcome::CD, 0)) -= kp * pa * o.s;
        gr[lambda_index(Role::Passive, o.type_passive)] += wp * qp * delta_u(g.passive, Role::Passive, pa);
    }
    double penalty = 0.0;
    if (l1_weight != 0.0) {
        auto beta = theta.head(kBetaCount).array();
        Eigen::ArrayXd root = (beta.square() + kSmoothing).sqrt();
        penalty = l1_weight * root.sum();
        if (gradient) gradient->head(kBetaCount).array() -= l1_weight * beta / root;
    }
    return ll - penalty;
}

namespace {

void require_all_pairs(std::span<const Observation> obs) {
    std::array<bool, 4> seen{};
    for (const auto& o : obs) seen[static_cast<std::size_t>(o.pair)] = true;
    // pair index: 1 = AV->HDV, 2 = HDV->AV, 3 = HDV->HDV
    for (int p : {1, 2, 3}) {
        if (!seen[static_cast<std::size_t>(p)]) {
            const char* names[] = {"AV-AV", "AV-HDV", "HDV-AV", "HDV-HDV"};
            throw DataError(fmt::format("no {} (active-passive) events; every fitted interaction type is required",
                                        names[p]));
        }
    }
}

Diagnostics diagnostics_from(const optim::BoxResult& r, double ll) {
    Diagnostics d;
    d.converged = r.converged;
    d.iterations = r.iterations;
    d.evaluations = r.evaluations;
    d.objective = -r.f;
    d.log_likelihood = ll;
    d.gradient_norm = r.projected_gradient_norm;
    d.message = r.message;
    return d;
}

}  // namespace

UtilityModel fit(std::span<const Observation> obs, const trajectory::StateScaler& scaler, const FitOptions& opts) {
    if (obs.empty()) throw DataError("no observations to fit");
    require_all_pairs(obs);
    // beta = plus - minus with both parts in [0, 20]; the L1 term becomes linear in (plus, minus),
    // which the box solver handles without the kink the smoothed penalty has near zero
    constexpr int n = 2 * kBetaCount + kLambdaCount;
    Eigen::VectorXd lower = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd upper = Eigen::VectorXd::Constant(n, kBetaBound);
    lower.tail(kLambdaCount).setConstant(kLambdaMin);
    upper.tail(kLambdaCount).setConstant(kLambdaMax);
    auto to_theta = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd theta(kParamCount);
        theta.head(kBetaCount) = x.head(kBetaCount) - x.segment(kBetaCount, kBetaCount);
        theta.tail(kLambdaCount) = x.tail(kLambdaCount);
        return theta;
    };

    Eigen::VectorXd grad(kParamCount);
    optim::Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        double ll = 0.0;
        try {
            ll = penalized_objective(to_theta(x), obs, 0.0, &grad);
        } catch (const NumericError&) {
            // unsolvable trial point; the line search backs off
            g.setZero(n);
            return std::numeric_limits<double>::infinity();
        }
        g.resize(n);
        g.head(kBetaCount) = -grad.head(kBetaCount).array() + opts.l1_weight;
        g.segment(kBetaCount, kBetaCount) = grad.head(kBetaCount).array() + opts.l1_weight;
        g.tail(kLambdaCount) = -grad.tail(kLambdaCount);
        return -ll + opts.l1_weight * x.head(2 * kBetaCount).sum();
    };
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    x0.tail(kLambdaCount).setOnes();
    auto r = optim::minimize_box(f, x0, lower, upper, opts.optimizer);

    UtilityModel m;
    m.theta = to_theta(r.x);
    m.l1_weight = opts.l1_weight;
    m.scaler = scaler;
    m.diagnostics = diagnostics_from(r, log_likelihood(m, obs));
    m.diagnostics.objective = penalized_objective(m.theta, obs, opts.l1_weight, nullptr);
    if (!r.converged) {
        throw FitError(fmt::format("optimizer stopped without converging ({}); projected gradient norm {:.3e}",
                                   r.message, r.projected_gradient_norm),
                       m);
    }
    return m;
}

UtilityModel fit_null(std::span<const Observation> obs, const trajectory::StateScaler& scaler,
                      const FitOptions& opts) {
    if (obs.empty()) throw DataError("no observations to fit");
    std::vector<int> free;
    for (Role r : {Role::Active, Role::Passive})
        for (auto t : kFittedTypeList)
            for (auto o : kFittedOutcomes) free.push_back(beta_index(r, t, o, 0));

    auto expand = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd theta = UtilityModel::initial_theta();
        for (std::size_t i = 0; i < free.size(); ++i) theta[free[i]] = x[static_cast<Eigen::Index>(i)];
        return theta;
    };
    Eigen::VectorXd full_grad(kParamCount);
    optim::Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        double j = 0.0;
        try {
            j = penalized_objective(expand(x), obs, 0.0, &full_grad);
        } catch (const NumericError&) {
            g.setZero(static_cast<Eigen::Index>(free.size()));
            return std::numeric_limits<double>::infinity();
        }
        g.resize(static_cast<Eigen::Index>(free.size()));
        for (std::size_t i = 0; i < free.size(); ++i) g[static_cast<Eigen::Index>(i)] = -full_grad[free[i]];
        return -j;
    };
    Eigen::VectorXd lower = Eigen::VectorXd::Constant(kNullParamCount, -kBetaBound);
    Eigen::VectorXd upper = Eigen::VectorXd::Constant(kNullParamCount, kBetaBound);
    auto r = optim::minimize_box(f, Eigen::VectorXd::Zero(kNullParamCount), lower, upper, opts.optimizer);

    UtilityModel m;
    m.theta = expand(r.x);
    m.l1_weight = 0.0;
    m.scaler = scaler;
    m.null_model = true;
    m.diagnostics = diagnostics_from(r, -r.f);
    if (!r.converged) {
        throw FitError(fmt::format("null model optimizer stopped without converging ({}); projected gradient norm "
                                   "{:.3e}",
                                   r.message, r.projected_gradient_norm),
                       m);
    }
    return m;
}

Validation validate(double ll_full, double ll_null, int df) {
    Validation v;
    v.ll_full = ll_full;
    v.ll_null = ll_null;
    v.df = df;
    v.lrt_stat = 2.0 * (ll_full - ll_null);
    v.full_below_null = ll_full < ll_null;
    v.p_value = v.lrt_stat > 0.0 ? stats::chi2_sf(v.lrt_stat, df) : 1.0;
    v.mcfadden = ll_null != 0.0 ? 1.0 - ll_full / ll_null : 0.0;
    return v;
}

Validation validate(const UtilityModel& full, const UtilityModel& null, std::span<const Observation> obs) {
    return validate(log_likelihood(full, obs), log_likelihood(null, obs));
}

std::array<double, kAugmentedDim> vif(const Eigen::MatrixXd& states) {
    if (states.cols() != kStateDim) throw DataError("VIF expects 11 state columns");
    if (states.rows() < kStateDim + 2) throw DataError("VIF needs at least 13 events");
    std::array<double, kAugmentedDim> out{};
    out[0] = 1.0;
    const auto n = states.rows();
    for (int j = 0; j < kStateDim; ++j) {
        Eigen::MatrixXd x(n, kStateDim);
        x.col(0).setOnes();
        for (int k = 0, c = 1; k < kStateDim; ++k) {
            if (k != j) x.col(c++) = states.col(k);
        }
        Eigen::VectorXd y = states.col(j);
        Eigen::VectorXd coef = x.colPivHouseholderQr().solve(y);
        double ssr = (y - x * coef).squaredNorm();
        double sst = (y.array() - y.mean()).square().sum();
        if (!(sst > 0.0)) {
            out[static_cast<std::size_t>(j + 1)] = std::numeric_limits<double>::infinity();
            continue;
        }
        double tolerance = ssr / sst;  // 1 - R^2
        out[static_cast<std::size_t>(j + 1)] =
            tolerance < 1e-12 ? std::numeric_limits<double>::infinity() : 1.0 / tolerance;
    }
    return out;
}

ClassMetrics metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    ClassMetrics m;
    m.support = tp + fn;
    if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (m.precision && m.recall) {
        double s = *m.precision + *m.recall;
        m.f1 = s > 0.0 ? 2.0 * *m.precision * *m.recall / s : 0.0;
    }
    return m;
}

namespace {

std::optional<double> mean_defined(const std::array<ClassMetrics, 4>& per, std::optional<double> ClassMetrics::*field) {
    double sum = 0.0;
    int n = 0;
    for (const auto& c : per) {
        if (c.*field) {
            sum += *(c.*field);
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

}  // namespace

Score score_predictions(std::span<const Outcome> truth, std::span<const Outcome> predicted,
                        std::span<const double> p_active, std::span<const double> p_passive) {
    if (truth.size() != predicted.size() || truth.size() != p_active.size() || truth.size() != p_passive.size()) {
        throw DataError("score inputs differ in length");
    }
    Score s;
    s.n = static_cast<std::int64_t>(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++s.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
        s.expected_cooperation[0] += p_active[i];
        s.expected_cooperation[1] += p_passive[i];
        s.expected_stdev[0] += p_active[i] * (1.0 - p_active[i]);
        s.expected_stdev[1] += p_passive[i] * (1.0 - p_passive[i]);
        if (active_choice(truth[i]) == Strategy::C) ++s.observed_cooperation[0];
        if (passive_choice(truth[i]) == Strategy::C) ++s.observed_cooperation[1];
    }
    for (auto& v : s.expected_stdev) v = std::sqrt(v);
    for (std::size_t k = 0; k < 4; ++k) {
        std::int64_t tp = s.confusion[k][k];
        std::int64_t fp = 0;
        std::int64_t fn = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            if (j == k) continue;
            fp += s.confusion[j][k];
            fn += s.confusion[k][j];
        }
        s.per_outcome[k] = metrics_from_counts(tp, fp, fn);
    }
    s.macro_precision = mean_defined(s.per_outcome, &ClassMetrics::precision);
    s.macro_recall = mean_defined(s.per_outcome, &ClassMetrics::recall);
    s.macro_f1 = mean_defined(s.per_outcome, &ClassMetrics::f1);
    return s;
}

Score predict_and_score(const UtilityModel& m, std::span<const Observation> obs) {
    std::vector<Outcome> truth;
    std::vector<Outcome> pred;
    std::vector<double> pa;
    std::vector<double> pp;
    for (const auto& o : obs) {
        auto fp = solve_fixed_point(m, o);
        truth.push_back(make_outcome(o.a ? Strategy::C : Strategy::D, o.b ? Strategy::C : Strategy::D));
        pred.push_back(make_outcome(fp.p_active >= 0.5 ? Strategy::C : Strategy::D,
                                    fp.p_passive >= 0.5 ? Strategy::C : Strategy::D));
        pa.push_back(fp.p_active);
        pp.push_back(fp.p_passive);
    }
    return score_predictions(truth, pred, pa, pp);
}

std::vector<trajectory::LaneChangeEvent> generate_synthetic(const SyntheticConfig& cfg) {
    cfg.theta_star.check_bounds();
    Eigen::LLT<Eigen::MatrixXd> llt(cfg.correlation);
    if (cfg.correlation.rows() != kStateDim || cfg.correlation.cols() != kStateDim || llt.info() != Eigen::Success) {
        throw DataError("state correlation must be an 11x11 positive definite matrix");
    }
    Eigen::MatrixXd chol = llt.matrixL();
    double share_sum = cfg.type_shares[0] + cfg.type_shares[1] + cfg.type_shares[2];
    if (!(share_sum > 0.0) || *std::min_element(cfg.type_shares.begin(), cfg.type_shares.end()) < 0.0) {
        throw DataError("interaction type shares must be non-negative with a positive sum");
    }
    // active/passive vehicle types for the three fitted pairs
    constexpr std::array<std::pair<VehicleType, VehicleType>, 3> pairs{
        std::pair{VehicleType::AV, VehicleType::HDV}, std::pair{VehicleType::HDV, VehicleType::AV},
        std::pair{VehicleType::HDV, VehicleType::HDV}};

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto& means = cfg.theta_star.scaler.means();
    const auto& stds = cfg.theta_star.scaler.stds();
    std::vector<trajectory::LaneChangeEvent> out;
    out.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        Eigen::VectorXd w(kStateDim);
        for (int k = 0; k < kStateDim; ++k) w[k] = z(rng);
        Eigen::VectorXd x = chol * w;
        trajectory::LaneChangeEvent e;
        e.event_id = static_cast<std::int64_t>(i + 1);
        for (int k = 0; k < kStateDim; ++k) {
            e.state[static_cast<std::size_t>(k)] = means[static_cast<std::size_t>(k)] +
                                                   stds[static_cast<std::size_t>(k)] * x[k];
        }
        double pick = u(rng) * share_sum;
        std::size_t p = 0;
        while (p < 2 && pick >= cfg.type_shares[p]) pick -= cfg.type_shares[p++];
        e.active_type = pairs[p].first;
        e.passive_type = pairs[p].second;
        e.active_features.fill(std::numeric_limits<double>::quiet_NaN());
        e.passive_features.fill(std::numeric_limits<double>::quiet_NaN());
        e.lane_crossing_angle = std::numeric_limits<double>::quiet_NaN();

        auto [ta, tp] = role_types(e.active_type, e.passive_type);
        auto fp = solve_fixed_point(game_for(cfg.theta_star, cfg.theta_star.scaler.transform(e.state), ta, tp));
        Strategy a = u(rng) < fp.p_active ? Strategy::C : Strategy::D;
        Strategy b = u(rng) < fp.p_passive ? Strategy::C : Strategy::D;
        e.active_label = a;
        e.passive_label = b;
        e.outcome = make_outcome(a, b);
        out.push_back(e);
    }
    return out;
}

CrossValidation cross_validate(std::span<const trajectory::LaneChangeEvent> events, const FitOptions& opts,
                               int splits, double train_share, std::uint64_t seed) {
    if (splits < 1) throw DataError("need at least one split");
    if (!(train_share > 0.0 && train_share < 1.0)) throw DataError("train share must lie in (0, 1)");
    std::array<std::vector<std::size_t>, 4> strata;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        strata[static_cast<std::size_t>(2 * static_cast<int>(e.active_type) + static_cast<int>(e.passive_type))]
            .push_back(i);
    }
    std::mt19937_64 rng(seed);
    CrossValidation cv;
    for (int s = 0; s < splits; ++s) {
        std::vector<trajectory::LaneChangeEvent> train;
        std::vector<trajectory::LaneChangeEvent> test;
        for (auto stratum : strata) {
            std::shuffle(stratum.begin(), stratum.end(), rng);
            auto cut = static_cast<std::size_t>(std::llround(train_share * static_cast<double>(stratum.size())));
            for (std::size_t k = 0; k < stratum.size(); ++k) (k < cut ? train : test).push_back(events[stratum[k]]);
        }
        std::vector<trajectory::StateVector> states;
        for (const auto& e : train) states.push_back(e.state);
        auto scaler = trajectory::StateScaler::fit(states);
        auto train_obs = make_observations(train, scaler);
        auto test_obs = make_observations(test, scaler);
        auto model = fit(train_obs, scaler, opts);
        cv.splits.push_back(predict_and_score(model, test_obs));
        cv.test_log_likelihood.push_back(log_likelihood(model, test_obs));
    }
    return cv;
}

}  // namespace lanegame::qre
