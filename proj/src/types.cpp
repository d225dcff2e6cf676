#include "lanegame/types.hpp"

#include <string>

namespace lanegame {

std::string_view to_string(VehicleType t) { return t == VehicleType::AV ? "AV" : "HDV"; }

std::string_view to_string(Role r) { return r == Role::Active ? "active" : "passive"; }

std::string_view to_string(InteractionType t) {
    switch (t) {
        case InteractionType::AVvsHDV: return "AV_vs_HDV";
        case InteractionType::HDVvsAV: return "HDV_vs_AV";
        case InteractionType::HDVvsHDV: return "HDV_vs_HDV";
        case InteractionType::AVvsAV: return "AV_vs_AV";
    }
    return "?";
}

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::CC: return "CC";
        case Outcome::CD: return "CD";
        case Outcome::DC: return "DC";
        case Outcome::DD: return "DD";
    }
    return "?";
}

std::string_view to_string(Strategy s) { return s == Strategy::C ? "C" : "D"; }

VehicleType parse_vehicle_type(std::string_view s) {
    if (s == "AV") return VehicleType::AV;
    if (s == "HDV") return VehicleType::HDV;
    throw DataError("unknown vehicle type '" + std::string(s) + "'");
}

Role parse_role(std::string_view s) {
    if (s == "active") return Role::Active;
    if (s == "passive") return Role::Passive;
    throw DataError("unknown role '" + std::string(s) + "'");
}

InteractionType parse_interaction_type(std::string_view s) {
    for (auto t : {InteractionType::AVvsHDV, InteractionType::HDVvsAV, InteractionType::HDVvsHDV,
                   InteractionType::AVvsAV}) {
        if (s == to_string(t)) return t;
    }
    throw DataError("unknown interaction type '" + std::string(s) + "'");
}

Outcome parse_outcome(std::string_view s) {
    for (auto o : kAllOutcomes) {
        if (s == to_string(o)) return o;
    }
    throw DataError("unknown outcome '" + std::string(s) + "'");
}

}  // namespace lanegame
