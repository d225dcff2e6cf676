#include "lanegame/payoff.hpp"

#include <map>
#include <sstream>

#include <fmt/format.h>

#include "lanegame/io.hpp"

namespace lanegame::payoff {

namespace {

constexpr std::array<GameClass, kClassCount> kAllClasses{GameClass::PrisonersDilemma, GameClass::StagHunt,
                                                         GameClass::ChickenGame, GameClass::OtherSocialDilemma,
                                                         GameClass::NonSocialDilemma};

// AV-vs-AV has no fitted coefficients; AVs are assumed indifferent to the opponent type.
InteractionType fitted_type(InteractionType t) {
    return t == InteractionType::AVvsAV ? InteractionType::AVvsHDV : t;
}

}  // namespace

int pair_code(VehicleType active, VehicleType passive) {
    return 2 * static_cast<int>(active) + static_cast<int>(passive);
}

VehicleType pair_active(int code) { return static_cast<VehicleType>(code / 2); }
VehicleType pair_passive(int code) { return static_cast<VehicleType>(code % 2); }

std::string pair_name(int code) {
    return fmt::format("{}-{}", to_string(pair_active(code)), to_string(pair_passive(code)));
}

int parse_pair(std::string_view s) {
    for (int c = 0; c < kPairCount; ++c) {
        if (s == pair_name(c)) return c;
    }
    throw DataError(fmt::format("unknown interaction pair '{}'", s));
}

std::string_view to_string(GameClass c) {
    switch (c) {
        case GameClass::PrisonersDilemma: return "PrisonersDilemma";
        case GameClass::StagHunt: return "StagHunt";
        case GameClass::ChickenGame: return "ChickenGame";
        case GameClass::OtherSocialDilemma: return "OtherSocialDilemma";
        case GameClass::NonSocialDilemma: return "NonSocialDilemma";
    }
    return "?";
}

std::string_view short_name(GameClass c) {
    switch (c) {
        case GameClass::PrisonersDilemma: return "PD";
        case GameClass::StagHunt: return "SH";
        case GameClass::ChickenGame: return "CG";
        case GameClass::OtherSocialDilemma: return "OtherSD";
        case GameClass::NonSocialDilemma: return "NonSD";
    }
    return "?";
}

GameClass parse_game_class(std::string_view s) {
    for (auto c : kAllClasses) {
        if (s == to_string(c) || s == short_name(c)) return c;
    }
    throw DataError(fmt::format("unknown game class '{}'", s));
}

PayoffTable build_table(const trajectory::StateVector& state, const qre::UtilityModel& model, VehicleType active,
                        VehicleType passive, bool allow_imputation, std::int64_t state_id) {
    bool av_av = active == VehicleType::AV && passive == VehicleType::AV;
    if (av_av && !allow_imputation) {
        throw DataError("AV-AV payoff table requested with imputation disabled");
    }
    if (model.null_model) throw DataError("payoff tables need a fitted full model, not the null model");
    PayoffTable t;
    t.state_id = state_id;
    t.active_type = active;
    t.passive_type = passive;
    t.imputed = av_av;
    auto s = model.scaler.transform(state);
    auto ua = qre::outcome_utilities(model, Role::Active, fitted_type(interaction_type(active, passive)), s);
    auto up = qre::outcome_utilities(model, Role::Passive, fitted_type(interaction_type(passive, active)), s);
    t.entries[0] = {ua.cc, up.cc};
    t.entries[1] = {ua.cd, up.cd};
    t.entries[2] = {ua.dc, up.dc};
    t.entries[3] = {0.0, 0.0};
    return t;
}

PayoffTable impute_av_av(const trajectory::StateVector& state, const qre::UtilityModel& model, std::int64_t state_id) {
    return build_table(state, model, VehicleType::AV, VehicleType::AV, true, state_id);
}

CanonicalPayoffs canonical(const PayoffTable& table, Role role) {
    CanonicalPayoffs c;
    c.role = role;
    c.R = table.get(Outcome::CC, role);
    c.P = 0.0;
    if (role == Role::Active) {
        c.S = table.get(Outcome::CD, role);
        c.T = table.get(Outcome::DC, role);
    } else {
        // passive defects in CD, cooperates against a defector in DC
        c.T = table.get(Outcome::CD, role);
        c.S = table.get(Outcome::DC, role);
    }
    return c;
}

PayoffTable table_from_canonical(const CanonicalPayoffs& active, const CanonicalPayoffs& passive,
                                 VehicleType active_type, VehicleType passive_type) {
    PayoffTable t;
    t.active_type = active_type;
    t.passive_type = passive_type;
    t.imputed = active_type == VehicleType::AV && passive_type == VehicleType::AV;
    t.entries[0] = {active.R, passive.R};
    t.entries[1] = {active.S, passive.T};
    t.entries[2] = {active.T, passive.S};
    t.entries[3] = {0.0, 0.0};
    return t;
}

bool is_social_dilemma(const CanonicalPayoffs& c, double eps) {
    return c.R > c.P + eps && c.R > c.S + eps && 2.0 * c.R > c.T + c.S + eps && (c.T > c.R + eps || c.P > c.S + eps);
}

GameClass classify(const CanonicalPayoffs& c, double eps) {
    if (!is_social_dilemma(c, eps)) return GameClass::NonSocialDilemma;
    auto gt = [eps](double a, double b) { return a > b + eps; };
    if (gt(c.T, c.R) && gt(c.R, c.P) && gt(c.P, c.S)) return GameClass::PrisonersDilemma;
    if (gt(c.R, c.T) && gt(c.T, c.P) && gt(c.P, c.S)) return GameClass::StagHunt;
    if (gt(c.T, c.R) && gt(c.R, c.S) && gt(c.S, c.P)) return GameClass::ChickenGame;
    return GameClass::OtherSocialDilemma;
}

std::int64_t CrossTab::row_total(int pair, GameClass active) const {
    std::int64_t n = 0;
    for (auto v : counts[pair][static_cast<int>(active)]) n += v;
    return n;
}

std::int64_t CrossTab::column_total(int pair, GameClass passive) const {
    std::int64_t n = 0;
    for (const auto& row : counts[pair]) n += row[static_cast<int>(passive)];
    return n;
}

std::int64_t CrossTab::dilemmas(Role role) const {
    std::int64_t n = 0;
    for (int p = 0; p < kPairCount; ++p) {
        for (int a = 0; a < kClassCount; ++a) {
            for (int b = 0; b < kClassCount; ++b) {
                int mine = role == Role::Active ? a : b;
                if (mine != static_cast<int>(GameClass::NonSocialDilemma)) n += counts[p][a][b];
            }
        }
    }
    return n;
}

std::int64_t CrossTab::total() const {
    std::int64_t n = 0;
    for (auto v : events) n += v;
    return n;
}

CrossTab tabulate(std::span<const trajectory::LaneChangeEvent> events, const qre::UtilityModel& model) {
    CrossTab tab;
    for (const auto& e : events) {
        auto t = build_table(e.state, model, e.active_type, e.passive_type, true, e.event_id);
        int a = static_cast<int>(classify(canonical(t, Role::Active)));
        int b = static_cast<int>(classify(canonical(t, Role::Passive)));
        int p = t.pair();
        ++tab.counts[p][a][b];
        ++tab.events[p];
    }
    return tab;
}

nlohmann::json to_json(const CrossTab& tab) {
    nlohmann::json j;
    j["classes"] = nlohmann::json::array();
    for (auto c : kAllClasses) j["classes"].push_back(short_name(c));
    j["pairs"] = nlohmann::json::array();
    for (int p = 0; p < kPairCount; ++p) {
        nlohmann::json pj;
        pj["pair"] = pair_name(p);
        pj["events"] = tab.events[p];
        pj["counts"] = tab.counts[p];  // rows: active class, columns: passive class
        nlohmann::json rows = nlohmann::json::array();
        nlohmann::json cols = nlohmann::json::array();
        for (auto c : kAllClasses) {
            rows.push_back(tab.row_total(p, c));
            cols.push_back(tab.column_total(p, c));
        }
        pj["active_totals"] = rows;
        pj["passive_totals"] = cols;
        j["pairs"].push_back(pj);
    }
    std::int64_t n = tab.total();
    j["total_events"] = n;
    j["dilemma_share"] = {{"active", n ? double(tab.dilemmas(Role::Active)) / n : 0.0},
                          {"passive", n ? double(tab.dilemmas(Role::Passive)) / n : 0.0}};
    return j;
}

std::vector<PayoffRow> payoff_rows(std::span<const trajectory::LaneChangeEvent> events,
                                   const qre::UtilityModel& model) {
    std::vector<PayoffRow> rows;
    rows.reserve(events.size() * kPairCount * 2);
    for (const auto& e : events) {
        int own = pair_code(e.active_type, e.passive_type);
        for (int p = 0; p < kPairCount; ++p) {
            auto t = build_table(e.state, model, pair_active(p), pair_passive(p), true, e.event_id);
            for (Role r : {Role::Active, Role::Passive}) {
                PayoffRow row;
                row.state_id = e.event_id;
                row.pair = p;
                row.role = r;
                row.payoffs = canonical(t, r);
                row.game = classify(row.payoffs);
                row.observed = p == own;
                row.imputed = t.imputed;
                rows.push_back(row);
            }
        }
    }
    return rows;
}

void write_payoff_csv(const std::filesystem::path& path, std::span<const PayoffRow> rows) {
    std::ostringstream out;
    out << "state_id,pair,role,R,S,T,P,class,fear,greed,observed\n";
    for (const auto& r : rows) {
        const auto& c = r.payoffs;
        out << r.state_id << ',' << pair_name(r.pair) << ',' << to_string(r.role) << ',' << format_real(c.R) << ','
            << format_real(c.S) << ',' << format_real(c.T) << ',' << format_real(c.P) << ',' << short_name(r.game)
            << ',' << format_real(c.fear()) << ',' << format_real(c.greed()) << ',' << (r.observed ? 1 : 0) << '\n';
    }
    write_text_file(path, out.str());
}

std::vector<StateGames> games_from_rows(std::span<const PayoffRow> rows) {
    // state -> [pair][role] with a presence mask
    std::map<std::int64_t, std::pair<std::array<std::array<CanonicalPayoffs, 2>, kPairCount>, int>> by_state;
    for (const auto& r : rows) {
        auto& [cells, mask] = by_state[r.state_id];
        int bit = 1 << (2 * r.pair + static_cast<int>(r.role));
        if (mask & bit) {
            throw DataError(fmt::format("state {} lists {} {} twice", r.state_id, pair_name(r.pair), to_string(r.role)));
        }
        mask |= bit;
        cells[r.pair][static_cast<int>(r.role)] = r.payoffs;
    }
    std::vector<StateGames> out;
    out.reserve(by_state.size());
    for (const auto& [id, entry] : by_state) {
        const auto& [cells, mask] = entry;
        if (mask != 0xff) throw DataError(fmt::format("state {} does not cover both roles of all four pairs", id));
        StateGames g;
        g.state_id = id;
        for (int p = 0; p < kPairCount; ++p) {
            g.tables[p] = table_from_canonical(cells[p][0], cells[p][1], pair_active(p), pair_passive(p));
            g.tables[p].state_id = id;
        }
        out.push_back(g);
    }
    return out;
}

std::vector<StateGames> read_payoff_csv(const std::filesystem::path& path) {
    CsvReader csv(path);
    csv.require_columns({"state_id", "pair", "role", "R", "S", "T", "P"});
    std::vector<PayoffRow> rows;
    while (csv.next()) {
        PayoffRow r;
        r.state_id = csv.integer("state_id");
        try {
            r.pair = parse_pair(csv.field("pair"));
            r.role = parse_role(csv.field("role"));
        } catch (const DataError& e) {
            csv.fail(e.what());
        }
        r.payoffs.role = r.role;
        r.payoffs.R = csv.real("R");
        r.payoffs.S = csv.real("S");
        r.payoffs.T = csv.real("T");
        r.payoffs.P = csv.real("P");
        if (r.payoffs.P != 0.0) csv.fail("P must be 0");
        rows.push_back(r);
    }
    return games_from_rows(rows);
}

}  // namespace lanegame::payoff
