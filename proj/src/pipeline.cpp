#include "lanegame/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "lanegame/clustering.hpp"
#include "lanegame/io.hpp"
#include "lanegame/payoff.hpp"
#include "lanegame/trajectory.hpp"

namespace lanegame::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------- config parsing ----------

std::string single(const CLI::ConfigItem& item) {
    if (item.inputs.size() != 1) {
        throw UsageError(fmt::format("config key '{}' expects one value, got {}", item.fullname(), item.inputs.size()));
    }
    return item.inputs.front();
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw UsageError(fmt::format("config key '{}': cannot parse '{}'", key, text));
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw UsageError(fmt::format("config key '{}': expected a boolean, got '{}'", key, text));
}

template <typename T>
std::vector<T> parse_list(const CLI::ConfigItem& item) {
    std::vector<T> out;
    for (const auto& raw : item.inputs) {
        // tolerate "1,2,3" written as one value
        for (const auto& piece : split(raw, ',')) {
            std::string t = piece;
            t.erase(std::remove_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); }), t.end());
            if (!t.empty()) out.push_back(parse_number<T>(item.fullname(), t));
        }
    }
    if (out.empty()) throw UsageError(fmt::format("config key '{}' needs at least one value", item.fullname()));
    return out;
}

// ---------- artifacts and manifest ----------

fs::path artifact(const PipelineConfig& cfg, const char* name) { return cfg.out / name; }

fs::path require_input(const fs::path& p, std::string_view producer) {
    if (!fs::exists(p)) throw DataError(fmt::format("missing {}; run `{}` first", p.string(), producer));
    return p;
}

std::string manifest_path(const fs::path& out, const fs::path& p) {
    std::error_code ec;
    auto rel = fs::relative(fs::weakly_canonical(p, ec), fs::weakly_canonical(out, ec), ec);
    if (!ec && !rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return fs::weakly_canonical(p, ec).generic_string();
}

FileRecord file_record(const fs::path& out, const fs::path& p) { return {manifest_path(out, p), sha256_file(p)}; }

fs::path resolve(const fs::path& out, const std::string& recorded) {
    fs::path p(recorded);
    return p.is_absolute() ? p : out / p;
}

json to_json(const FileRecord& r) { return {{"path", r.path}, {"sha256", r.sha256}}; }

json to_json(const ManifestEntry& e) {
    json in = json::array(), out = json::array();
    for (const auto& r : e.inputs) in.push_back(to_json(r));
    for (const auto& r : e.outputs) out.push_back(to_json(r));
    return {{"stage", e.stage}, {"inputs", in}, {"outputs", out}, {"seed", e.seed}, {"version", e.version}};
}

void finish_stage(const PipelineConfig& cfg, std::string stage, const std::vector<fs::path>& inputs,
                  const std::vector<fs::path>& outputs) {
    ManifestEntry e;
    e.stage = std::move(stage);
    e.seed = cfg.seed;
    for (const auto& p : inputs) e.inputs.push_back(file_record(cfg.out, p));
    for (const auto& p : outputs) e.outputs.push_back(file_record(cfg.out, p));
    record_stage(cfg.out, e);
}

void write_json(const fs::path& p, const json& j) { write_text_file(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError(fmt::format("cannot open {}", p.string()));
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(fmt::format("{}: {}", p.string(), e.what()));
    }
}

// JSON has no infinities; keep them readable
json finite_or_string(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return nullptr;
    return v > 0 ? "inf" : "-inf";
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json outcome_table_json(const clustering::OutcomeTable& t) {
    json j;
    for (auto o : kAllOutcomes) {
        for (int p = 0; p < payoff::kPairCount; ++p) {
            j[std::string(to_string(o))][payoff::pair_name(p)] = t.counts[static_cast<int>(o)][p];
        }
    }
    j["total"] = t.total();
    return j;
}

fs::path labeled_input(const PipelineConfig& cfg) {
    if (!cfg.labeled_events.empty()) return require_input(cfg.labeled_events, "cluster");
    return require_input(artifact(cfg, files::kLabeled), "cluster` or `synth");
}

// ---------- cluster helpers ----------

json cluster_role(const clustering::ClusterModel& model, const clustering::Matrix& raw, Role role) {
    json j;
    int p = static_cast<int>(raw.cols());
    std::string prefix = role == Role::Active ? "xa" : "xp";
    json names = json::array();
    for (int c = 0; c < p; ++c) names.push_back(prefix + std::to_string(c + 1));
    j["features"] = names;
    j["inertia"] = model.inertia;
    j["iterations"] = model.iterations;
    for (int k = 0; k < model.k; ++k) {
        std::string label(to_string(model.label_map[k]));
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(p);
        std::int64_t n = 0;
        for (Eigen::Index r = 0; r < raw.rows(); ++r) {
            if (model.assignment[r] != k) continue;
            sum += raw.row(r).transpose();
            ++n;
        }
        json means = json::array(), centroid = json::array();
        for (int c = 0; c < p; ++c) {
            means.push_back(n ? sum[c] / static_cast<double>(n) : 0.0);
            centroid.push_back(model.centroids(k, c));
        }
        j["clusters"][label] = {{"size", n}, {"feature_means", means}, {"centroid_standardized", centroid}};
    }
    std::vector<int> groups(model.assignment.begin(), model.assignment.end());
    try {
        auto m = clustering::manova_two_group(raw, groups);
        j["manova"] = {{"wilks_lambda", m.wilks_lambda},
                       {"f_value", m.f_value},
                       {"p_value", m.p_value},
                       {"df_num", m.df_num},
                       {"df_den", m.df_den}};
    } catch (const DataError& e) {
        j["manova"] = nullptr;
        j["manova_error"] = e.what();
    }
    return j;
}

void require_finite(const clustering::Matrix& m, std::string_view what) {
    if (!m.allFinite()) throw DataError(fmt::format("{} features contain missing values; cannot cluster", what));
}

json score_json(const qre::Score& s) {
    json j;
    json confusion = json::object();
    for (auto t : kAllOutcomes) {
        for (auto p : kAllOutcomes) {
            confusion[std::string(to_string(t))][std::string(to_string(p))] =
                s.confusion[static_cast<int>(t)][static_cast<int>(p)];
        }
    }
    j["confusion"] = confusion;  // [truth][predicted]
    for (auto o : kAllOutcomes) {
        const auto& m = s.per_outcome[static_cast<int>(o)];
        j["per_outcome"][std::string(to_string(o))] = {{"precision", optional_json(m.precision)},
                                                       {"recall", optional_json(m.recall)},
                                                       {"f1", optional_json(m.f1)},
                                                       {"support", m.support}};
    }
    j["macro"] = {{"precision", optional_json(s.macro_precision)},
                  {"recall", optional_json(s.macro_recall)},
                  {"f1", optional_json(s.macro_f1)}};
    for (Role r : {Role::Active, Role::Passive}) {
        int i = static_cast<int>(r);
        j["cooperation"][std::string(to_string(r))] = {{"expected", s.expected_cooperation[i]},
                                                       {"expected_stdev", s.expected_stdev[i]},
                                                       {"observed", s.observed_cooperation[i]}};
    }
    j["n"] = s.n;
    return j;
}

}  // namespace

// ---------- config ----------

void PipelineConfig::validate() const {
    if (out.empty()) throw UsageError("output directory must not be empty");
    if (cluster_restarts < 1) throw UsageError("cluster restarts must be >= 1");
    if (cluster_max_iterations < 1) throw UsageError("cluster max_iterations must be >= 1");
    if (!(l1_weight >= 0.0) || !std::isfinite(l1_weight)) throw UsageError("l1_weight must be a finite value >= 0");
    if (fit_max_iterations < 1) throw UsageError("fit max_iterations must be >= 1");
    if (cv_splits < 0) throw UsageError("cv_splits must be >= 0");
    if (!(train_share > 0.0 && train_share < 1.0)) throw UsageError("train_share must lie in (0, 1)");
    if (threads < 1) throw UsageError("threads must be >= 1");
    if (synth_events < 1 || scene_events < 1) throw UsageError("synthetic event counts must be >= 1");
    if (!(synth_beta_sigma >= 0.0)) throw UsageError("beta_sigma must be >= 0");
    if (!(scene_av_fraction >= 0.0 && scene_av_fraction <= 1.0)) throw UsageError("av_fraction must lie in [0, 1]");
    try {
        sim.validate();
        if (sweep) evolution::sweep_grid(sim, neighbor_sizes, noise_ks, mprs, contact_freqs);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
}

PipelineConfig load_config(const fs::path& path, PipelineConfig cfg) {
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigINI().from_file(path.string());
    } catch (const CLI::Error& e) {
        throw UsageError(fmt::format("cannot read config {}: {}", path.string(), e.what()));
    }
    fs::path base = path.parent_path();
    auto as_path = [&base](const std::string& s) {
        fs::path p(s);
        return p.is_relative() ? base / p : p;
    };
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") continue;  // section markers
        std::string key = item.fullname();
        auto num = [&]<typename T>(T& field) { field = parse_number<T>(key, single(item)); };
        if (key == "general.seed" || key == "seed") num(cfg.seed);
        else if (key == "general.out" || key == "out") cfg.out = as_path(single(item));
        else if (key == "extract.tracks") cfg.tracks = as_path(single(item));
        else if (key == "extract.map") cfg.map = as_path(single(item));
        else if (key == "cluster.events") cfg.events = as_path(single(item));
        else if (key == "cluster.restarts") num(cfg.cluster_restarts);
        else if (key == "cluster.max_iterations") num(cfg.cluster_max_iterations);
        else if (key == "fit.events") cfg.labeled_events = as_path(single(item));
        else if (key == "fit.l1_weight") num(cfg.l1_weight);
        else if (key == "fit.max_iterations") num(cfg.fit_max_iterations);
        else if (key == "validate.cv_splits") num(cfg.cv_splits);
        else if (key == "validate.train_share") num(cfg.train_share);
        else if (key == "simulate.width") num(cfg.sim.width);
        else if (key == "simulate.height") num(cfg.sim.height);
        else if (key == "simulate.steps") num(cfg.sim.steps);
        else if (key == "simulate.reps") num(cfg.sim.reps);
        else if (key == "simulate.mpr") num(cfg.sim.mpr);
        else if (key == "simulate.neighbor_size") num(cfg.sim.neighbor_size);
        else if (key == "simulate.noise_k") num(cfg.sim.noise_k);
        else if (key == "simulate.contact_freq") num(cfg.sim.contact_freq);
        else if (key == "simulate.init_coop_av") num(cfg.sim.init_coop_av);
        else if (key == "simulate.init_coop_hdv") num(cfg.sim.init_coop_hdv);
        else if (key == "simulate.sweep") cfg.sweep = parse_bool(key, single(item));
        else if (key == "simulate.neighbor_sizes") cfg.neighbor_sizes = parse_list<int>(item);
        else if (key == "simulate.noise_ks") cfg.noise_ks = parse_list<double>(item);
        else if (key == "simulate.mprs") cfg.mprs = parse_list<double>(item);
        else if (key == "simulate.contact_freqs") cfg.contact_freqs = parse_list<double>(item);
        else if (key == "simulate.threads") num(cfg.threads);
        else if (key == "synth.scene") cfg.synth_scene = parse_bool(key, single(item));
        else if (key == "synth.events") num(cfg.synth_events);
        else if (key == "synth.beta_sigma") num(cfg.synth_beta_sigma);
        else if (key == "synth.scene_events") num(cfg.scene_events);
        else if (key == "synth.av_fraction") num(cfg.scene_av_fraction);
        else throw UsageError(fmt::format("unknown config key '{}' in {}", key, path.string()));
    }
    return cfg;
}

// ---------- lock ----------

DirectoryLock::DirectoryLock(const fs::path& dir) : lock_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(lock_.c_str(), "wx");
    if (!f) {
        throw DataError(fmt::format("output directory {} is in use (remove {} if no other run is active)",
                                    dir.string(), lock_.string()));
    }
    std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(lock_, ec);
}

// ---------- manifest ----------

std::vector<ManifestEntry> read_manifest(const fs::path& out) {
    fs::path p = out / files::kManifest;
    if (!fs::exists(p)) return {};
    json j = read_json(p);
    std::vector<ManifestEntry> entries;
    try {
        for (const auto& e : j.at("stages")) {
            ManifestEntry m;
            m.stage = e.at("stage").get<std::string>();
            m.seed = e.at("seed").get<std::uint64_t>();
            m.version = e.at("version").get<std::string>();
            for (const auto& r : e.at("inputs")) m.inputs.push_back({r.at("path"), r.at("sha256")});
            for (const auto& r : e.at("outputs")) m.outputs.push_back({r.at("path"), r.at("sha256")});
            entries.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw DataError(fmt::format("{}: malformed manifest: {}", p.string(), e.what()));
    }
    return entries;
}

void record_stage(const fs::path& out, const ManifestEntry& entry) {
    auto entries = read_manifest(out);
    std::erase_if(entries, [&entry](const ManifestEntry& e) { return e.stage == entry.stage; });
    entries.push_back(entry);
    json stages = json::array();
    for (const auto& e : entries) stages.push_back(to_json(e));
    write_json(out / files::kManifest, {{"version", kVersion}, {"stages", stages}});
}

ChainCheck verify_chain(const fs::path& out) {
    ChainCheck check;
    auto entries = read_manifest(out);
    std::map<std::string, std::pair<std::string, std::string>> produced;  // path -> (stage, hash)
    for (const auto& e : entries) {
        for (const auto& in : e.inputs) {
            auto it = produced.find(in.path);
            if (it != produced.end() && it->second.second != in.sha256) {
                check.problems.push_back(fmt::format("{} read {} with a hash that differs from the one `{}` wrote",
                                                     e.stage, in.path, it->second.first));
            }
        }
        for (const auto& o : e.outputs) produced[o.path] = {e.stage, o.sha256};
    }
    for (const auto& [path, who] : produced) {
        fs::path p = resolve(out, path);
        if (!fs::exists(p)) {
            check.problems.push_back(fmt::format("{} (from `{}`) is missing", path, who.first));
        } else if (sha256_file(p) != who.second) {
            check.problems.push_back(fmt::format("{} changed since `{}` wrote it", path, who.first));
        }
    }
    check.ok = check.problems.empty();
    return check;
}

// ---------- stages ----------

qre::UtilityModel synthetic_truth(std::uint64_t seed, double beta_sigma) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, beta_sigma);
    std::uniform_real_distribution<double> lam(1.0, 2.5);
    qre::UtilityModel m;
    for (int i = 0; i < qre::kBetaCount; ++i) m.theta[i] = std::clamp(n(rng), -qre::kBetaBound, qre::kBetaBound);
    for (int i = 0; i < qre::kLambdaCount; ++i) m.theta[qre::kBetaCount + i] = lam(rng);
    m.l1_weight = 0.0;
    return m;
}

void run_synth(const PipelineConfig& cfg) {
    if (cfg.synth_scene) {
        trajectory::SceneConfig sc;
        sc.events = cfg.scene_events;
        sc.av_fraction = cfg.scene_av_fraction;
        sc.seed = derive_seed(cfg.seed, "synth/scene");
        auto scene = trajectory::make_scene(sc);
        trajectory::write_tracks_csv(artifact(cfg, files::kTracks), scene.tracks);
        trajectory::write_map_csv(artifact(cfg, files::kMap), scene.map);
        finish_stage(cfg, "synth", {}, {artifact(cfg, files::kTracks), artifact(cfg, files::kMap)});
        fmt::print("synth: scene with {} tracks\n", scene.tracks.size());
        return;
    }
    qre::SyntheticConfig sc;
    sc.theta_star = synthetic_truth(derive_seed(cfg.seed, "synth/theta"), cfg.synth_beta_sigma);
    sc.n = static_cast<std::size_t>(cfg.synth_events);
    sc.seed = derive_seed(cfg.seed, "synth/events");
    auto events = qre::generate_synthetic(sc);
    trajectory::write_events_csv(artifact(cfg, files::kLabeled), events);
    qre::save_model(artifact(cfg, files::kThetaStar), sc.theta_star);
    finish_stage(cfg, "synth", {}, {artifact(cfg, files::kLabeled), artifact(cfg, files::kThetaStar)});
    fmt::print("synth: {} labeled events\n", events.size());
}

void run_extract(const PipelineConfig& cfg) {
    fs::path tracks = cfg.tracks.empty() ? require_input(artifact(cfg, files::kTracks), "synth --scene` or pass `--tracks")
                                         : require_input(cfg.tracks, "synth --scene");
    fs::path map = cfg.map.empty() ? require_input(artifact(cfg, files::kMap), "synth --scene` or pass `--map")
                                   : require_input(cfg.map, "synth --scene");
    auto result = trajectory::extract_events(trajectory::read_tracks_csv(tracks), trajectory::read_map_csv(map));
    trajectory::write_events_csv(artifact(cfg, files::kEvents), result.events);
    trajectory::write_rejections_csv(artifact(cfg, files::kRejections), result.rejections);

    std::map<std::string, std::int64_t> reasons;
    for (const auto& r : result.rejections) ++reasons[r.reason];
    std::array<std::int64_t, payoff::kPairCount> pairs{};
    for (const auto& e : result.events) ++pairs[payoff::pair_code(e.active_type, e.passive_type)];
    json by_pair;
    for (int p = 0; p < payoff::kPairCount; ++p) by_pair[payoff::pair_name(p)] = pairs[p];
    write_json(artifact(cfg, files::kExtractSummary),
               {{"events", result.events.size()},
                {"rejections", result.rejections.size()},
                {"rejections_by_reason", reasons},
                {"events_by_pair", by_pair}});
    finish_stage(cfg, "extract", {tracks, map},
                 {artifact(cfg, files::kEvents), artifact(cfg, files::kRejections),
                  artifact(cfg, files::kExtractSummary)});
    fmt::print("extract: {} events, {} rejected candidates\n", result.events.size(), result.rejections.size());
}

void run_cluster(const PipelineConfig& cfg) {
    fs::path input = cfg.events.empty() ? require_input(artifact(cfg, files::kEvents), "extract")
                                        : require_input(cfg.events, "extract");
    auto events = trajectory::read_events_csv(input);
    if (events.size() < 2) throw DataError(fmt::format("{} holds {} events; clustering needs at least 2",
                                                       input.string(), events.size()));
    auto active_raw = clustering::active_feature_matrix(events);
    auto passive_raw = clustering::passive_feature_matrix(events);
    require_finite(active_raw, "active");
    require_finite(passive_raw, "passive");

    clustering::KMeansOptions opts;
    opts.restarts = cfg.cluster_restarts;
    opts.max_iterations = cfg.cluster_max_iterations;
    opts.seed = derive_seed(cfg.seed, "cluster/active");
    auto active = clustering::label_clusters(
        clustering::kmeans_fit(clustering::standardize_columns(active_raw), opts), active_raw, Role::Active);
    opts.seed = derive_seed(cfg.seed, "cluster/passive");
    auto passive = clustering::label_clusters(
        clustering::kmeans_fit(clustering::standardize_columns(passive_raw), opts), passive_raw, Role::Passive);

    for (std::size_t i = 0; i < events.size(); ++i) {
        events[i].active_label = active.label_of(i);
        events[i].passive_label = passive.label_of(i);
        events[i].outcome = clustering::outcome_of(*events[i].active_label, *events[i].passive_label);
    }
    trajectory::write_events_csv(artifact(cfg, files::kLabeled), events);
    json report = {{"events", events.size()},
                   {"active", cluster_role(active, active_raw, Role::Active)},
                   {"passive", cluster_role(passive, passive_raw, Role::Passive)},
                   {"outcomes", outcome_table_json(clustering::tabulate_outcomes(events))}};
    write_json(artifact(cfg, files::kClusterReport), report);
    finish_stage(cfg, "cluster", {input}, {artifact(cfg, files::kLabeled), artifact(cfg, files::kClusterReport)});
    fmt::print("cluster: labeled {} events\n", events.size());
}

void run_fit(const PipelineConfig& cfg) {
    fs::path input = labeled_input(cfg);
    auto events = trajectory::read_events_csv(input);
    std::vector<trajectory::StateVector> states;
    states.reserve(events.size());
    for (const auto& e : events) states.push_back(e.state);
    auto scaler = trajectory::StateScaler::fit(states);
    auto obs = qre::make_observations(events, scaler);

    qre::FitOptions opts;
    opts.l1_weight = cfg.l1_weight;
    opts.optimizer.max_iterations = cfg.fit_max_iterations;
    qre::UtilityModel full;
    try {
        full = qre::fit(obs, scaler, opts);
    } catch (const qre::FitError& e) {
        // keep the best point for inspection, then report the failure
        qre::save_model(artifact(cfg, files::kModel), e.best);
        throw;
    }
    auto null = qre::fit_null(obs, scaler, opts);
    qre::save_model(artifact(cfg, files::kModel), full);
    qre::save_model(artifact(cfg, files::kNullModel), null);
    finish_stage(cfg, "fit", {input}, {artifact(cfg, files::kModel), artifact(cfg, files::kNullModel)});
    fmt::print("fit: LL {:.4f} (null {:.4f}), {} iterations, {}\n", full.diagnostics.log_likelihood,
               null.diagnostics.log_likelihood, full.diagnostics.iterations, full.diagnostics.message);
}

void run_validate(const PipelineConfig& cfg) {
    fs::path input = labeled_input(cfg);
    fs::path model_path = require_input(artifact(cfg, files::kModel), "fit");
    fs::path null_path = require_input(artifact(cfg, files::kNullModel), "fit");
    auto events = trajectory::read_events_csv(input);
    auto full = qre::load_model(model_path);
    auto null = qre::load_model(null_path);
    auto obs = qre::make_observations(events, full.scaler);

    auto v = qre::validate(full, null, obs);
    json j;
    j["events"] = events.size();
    j["likelihood_ratio"] = {{"ll_full", v.ll_full},
                             {"ll_null", v.ll_null},
                             {"lrt_stat", v.lrt_stat},
                             {"df", v.df},
                             {"p_value", v.p_value},
                             {"mcfadden", v.mcfadden}};
    if (v.full_below_null) {
        j["warnings"].push_back("full-model log-likelihood is below the null model (regularization artifact)");
        fmt::print(stderr, "warning: full-model log-likelihood is below the null model\n");
    }
    if (obs.size() >= kAugmentedDim + 1) {
        Eigen::MatrixXd states(static_cast<Eigen::Index>(obs.size()), kStateDim);
        for (std::size_t i = 0; i < obs.size(); ++i) states.row(static_cast<Eigen::Index>(i)) = obs[i].s.tail(kStateDim).transpose();
        auto vif = qre::vif(states);
        json vj;
        for (int k = 0; k < kStateDim; ++k) vj[trajectory::state_name(k)] = finite_or_string(vif[k + 1]);
        j["vif"] = vj;
    } else {
        j["vif"] = nullptr;
    }
    j["prediction"] = score_json(qre::predict_and_score(full, obs));
    j["outcomes"] = outcome_table_json(clustering::tabulate_outcomes(events));
    if (cfg.cv_splits > 0) {
        qre::FitOptions opts;
        opts.l1_weight = cfg.l1_weight;
        opts.optimizer.max_iterations = cfg.fit_max_iterations;
        auto cv = qre::cross_validate(events, opts, cfg.cv_splits, cfg.train_share,
                                      derive_seed(cfg.seed, "validate/cv"));
        json splits = json::array();
        for (std::size_t s = 0; s < cv.splits.size(); ++s) {
            splits.push_back({{"test_log_likelihood", cv.test_log_likelihood[s]}, {"score", score_json(cv.splits[s])}});
        }
        j["cross_validation"] = splits;
    }
    write_json(artifact(cfg, files::kValidation), j);
    finish_stage(cfg, "validate", {input, model_path, null_path}, {artifact(cfg, files::kValidation)});
    fmt::print("validate: LRT {:.2f} on {} df, McFadden {:.4f}\n", v.lrt_stat, v.df, v.mcfadden);
}

void run_games(const PipelineConfig& cfg) {
    fs::path input = labeled_input(cfg);
    fs::path model_path = require_input(artifact(cfg, files::kModel), "fit");
    auto events = trajectory::read_events_csv(input);
    auto model = qre::load_model(model_path);
    auto rows = payoff::payoff_rows(events, model);
    payoff::write_payoff_csv(artifact(cfg, files::kPayoffs), rows);
    auto tab = payoff::tabulate(events, model);
    write_json(artifact(cfg, files::kGames), payoff::to_json(tab));
    finish_stage(cfg, "games", {input, model_path}, {artifact(cfg, files::kPayoffs), artifact(cfg, files::kGames)});
    fmt::print("games: {} states, dilemmas active {} / passive {}\n", events.size(), tab.dilemmas(Role::Active),
               tab.dilemmas(Role::Passive));
}

void run_simulate(const PipelineConfig& cfg) {
    fs::path input = require_input(artifact(cfg, files::kPayoffs), "games");
    auto pool = payoff::read_payoff_csv(input);
    std::vector<evolution::SimConfig> configs;
    if (cfg.sweep) {
        configs = evolution::sweep_grid(cfg.sim, cfg.neighbor_sizes, cfg.noise_ks, cfg.mprs, cfg.contact_freqs);
    } else {
        configs.push_back(cfg.sim);
    }
    auto records = evolution::run_sweep(configs, pool, derive_seed(cfg.seed, "sim"), cfg.threads);
    evolution::write_sweep_json(artifact(cfg, files::kSweepJson), records);
    evolution::write_sweep_csv(artifact(cfg, files::kSweepCsv), records);
    finish_stage(cfg, "simulate", {input}, {artifact(cfg, files::kSweepJson), artifact(cfg, files::kSweepCsv)});
    fmt::print("simulate: {} configs x {} reps over {} states\n", configs.size(), cfg.sim.reps, pool.size());
}

json run_report(const PipelineConfig& cfg) {
    auto entries = read_manifest(cfg.out);
    if (entries.empty()) throw DataError(fmt::format("no manifest in {}; run a pipeline command first", cfg.out.string()));
    auto chain = verify_chain(cfg.out);
    json j;
    json stages = json::array();
    for (const auto& e : entries) stages.push_back(e.stage);
    j["stages"] = stages;
    j["chain_ok"] = chain.ok;
    j["chain_problems"] = chain.problems;

    auto maybe = [&cfg](const char* name) -> std::optional<json> {
        fs::path p = artifact(cfg, name);
        if (!fs::exists(p)) return std::nullopt;
        return read_json(p);
    };
    if (auto s = maybe(files::kExtractSummary)) j["extract"] = {{"events", (*s)["events"]}, {"rejections", (*s)["rejections"]}};
    if (auto c = maybe(files::kClusterReport)) {
        j["cluster"] = {{"active_manova", (*c)["active"]["manova"]}, {"passive_manova", (*c)["passive"]["manova"]}};
    }
    if (auto v = maybe(files::kValidation)) j["validation"] = (*v)["likelihood_ratio"];
    if (auto g = maybe(files::kGames)) j["games"] = {{"total_events", (*g)["total_events"]}, {"dilemma_share", (*g)["dilemma_share"]}};
    if (auto s = maybe(files::kSweepJson)) {
        json finals = json::array();
        for (const auto& rec : *s) {
            finals.push_back({{"config_id", rec["config_id"]}, {"config", rec["config"]}, {"final_all", rec["final"]["all"]}});
        }
        j["simulation"] = finals;
    }
    write_json(artifact(cfg, files::kReport), j);
    finish_stage(cfg, "report", {}, {artifact(cfg, files::kReport)});
    if (!chain.ok) {
        for (const auto& p : chain.problems) fmt::print(stderr, "manifest: {}\n", p);
        throw DataError("artifact chain does not verify; see report.json");
    }
    fmt::print("report: {} stages, chain verified\n", entries.size());
    return j;
}

}  // namespace lanegame::pipeline
