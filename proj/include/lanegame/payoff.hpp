#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "lanegame/qre.hpp"
#include "lanegame/trajectory.hpp"
#include "lanegame/types.hpp"

namespace lanegame::payoff {

// Pair code 2 * active + passive with AV = 0: AV-AV, AV-HDV, HDV-AV, HDV-HDV.
constexpr int kPairCount = 4;
int pair_code(VehicleType active, VehicleType passive);
VehicleType pair_active(int code);
VehicleType pair_passive(int code);
std::string pair_name(int code);  // "HDV-AV" = active HDV, passive AV
int parse_pair(std::string_view s);

struct PayoffTable {
    std::int64_t state_id = 0;
    VehicleType active_type = VehicleType::HDV;
    VehicleType passive_type = VehicleType::HDV;
    // [outcome][role]; DD stays (0, 0)
    std::array<std::array<double, 2>, 4> entries{};
    bool imputed = false;

    double get(Outcome o, Role r) const { return entries[static_cast<int>(o)][static_cast<int>(r)]; }
    int pair() const { return pair_code(active_type, passive_type); }
};

struct CanonicalPayoffs {
    Role role = Role::Active;
    double R = 0.0;
    double S = 0.0;
    double T = 0.0;
    double P = 0.0;

    double greed() const { return T - R; }
    double fear() const { return P - S; }
};

enum class GameClass { PrisonersDilemma = 0, StagHunt = 1, ChickenGame = 2, OtherSocialDilemma = 3, NonSocialDilemma = 4 };
constexpr int kClassCount = 5;

std::string_view to_string(GameClass c);
std::string_view short_name(GameClass c);  // PD, SH, CG, OtherSD, NonSD
GameClass parse_game_class(std::string_view s);

constexpr double kClassifyEps = 1e-9;

// AV-AV needs allow_imputation, in which case the result is the imputed table.
PayoffTable build_table(const trajectory::StateVector& state, const qre::UtilityModel& model, VehicleType active,
                        VehicleType passive, bool allow_imputation = false, std::int64_t state_id = 0);

// AV payoffs borrowed from the AV-vs-HDV utilities of the same role.
PayoffTable impute_av_av(const trajectory::StateVector& state, const qre::UtilityModel& model,
                         std::int64_t state_id = 0);

CanonicalPayoffs canonical(const PayoffTable& table, Role role);

// Inverse of canonical for both roles at once.
PayoffTable table_from_canonical(const CanonicalPayoffs& active, const CanonicalPayoffs& passive,
                                 VehicleType active_type, VehicleType passive_type);

bool is_social_dilemma(const CanonicalPayoffs& c, double eps = kClassifyEps);
GameClass classify(const CanonicalPayoffs& c, double eps = kClassifyEps);

// counts[pair][active class][passive class], each event tabulated under its observed pair.
struct CrossTab {
    std::array<std::array<std::array<std::int64_t, kClassCount>, kClassCount>, kPairCount> counts{};
    std::array<std::int64_t, kPairCount> events{};

    std::int64_t row_total(int pair, GameClass active) const;
    std::int64_t column_total(int pair, GameClass passive) const;
    // Events where the role faces any social dilemma.
    std::int64_t dilemmas(Role role) const;
    std::int64_t total() const;
};

CrossTab tabulate(std::span<const trajectory::LaneChangeEvent> events, const qre::UtilityModel& model);

nlohmann::json to_json(const CrossTab& tab);

// One row per (state, pair, role) for all four pairs of every event state.
struct PayoffRow {
    std::int64_t state_id = 0;
    int pair = 0;
    Role role = Role::Active;
    CanonicalPayoffs payoffs;
    GameClass game = GameClass::NonSocialDilemma;
    bool observed = false;  // the event's own pair
    bool imputed = false;
};

std::vector<PayoffRow> payoff_rows(std::span<const trajectory::LaneChangeEvent> events,
                                   const qre::UtilityModel& model);

void write_payoff_csv(const std::filesystem::path& path, std::span<const PayoffRow> rows);

// Tables for all four pairs of one state, indexed by pair code.
struct StateGames {
    std::int64_t state_id = 0;
    std::array<PayoffTable, kPairCount> tables;
};

// Throws DataError unless every state lists both roles of all four pairs.
std::vector<StateGames> read_payoff_csv(const std::filesystem::path& path);
std::vector<StateGames> games_from_rows(std::span<const PayoffRow> rows);

}  // namespace lanegame::payoff
