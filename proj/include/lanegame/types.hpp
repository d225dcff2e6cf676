#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lanegame {

// Input that cannot be parsed or violates a documented precondition.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimizer / solver failures.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class VehicleType { AV = 0, HDV = 1 };

enum class Role { Active = 0, Passive = 1 };

// Interaction type of one vehicle: its own type and the opponent's type.
// AVvsAV is never fitted; it only exists for imputed payoff tables.
enum class InteractionType { AVvsHDV = 0, HDVvsAV = 1, HDVvsHDV = 2, AVvsAV = 3 };

constexpr int kFittedTypes = 3;

// First letter is the active vehicle's choice.
enum class Outcome { CC = 0, CD = 1, DC = 2, DD = 3 };

enum class Strategy { C = 0, D = 1 };

constexpr int kStateDim = 11;
constexpr int kAugmentedDim = kStateDim + 1;
constexpr int kActiveFeatures = 10;
constexpr int kPassiveFeatures = 4;

inline InteractionType interaction_type(VehicleType self, VehicleType other) {
    if (self == VehicleType::AV) {
        return other == VehicleType::AV ? InteractionType::AVvsAV : InteractionType::AVvsHDV;
    }
    return other == VehicleType::AV ? InteractionType::HDVvsAV : InteractionType::HDVvsHDV;
}

inline Outcome make_outcome(Strategy active, Strategy passive) {
    if (active == Strategy::C) return passive == Strategy::C ? Outcome::CC : Outcome::CD;
    return passive == Strategy::C ? Outcome::DC : Outcome::DD;
}

inline Strategy active_choice(Outcome o) {
    return (o == Outcome::CC || o == Outcome::CD) ? Strategy::C : Strategy::D;
}

inline Strategy passive_choice(Outcome o) {
    return (o == Outcome::CC || o == Outcome::DC) ? Strategy::C : Strategy::D;
}

std::string_view to_string(VehicleType t);
std::string_view to_string(Role r);
std::string_view to_string(InteractionType t);
std::string_view to_string(Outcome o);
std::string_view to_string(Strategy s);

VehicleType parse_vehicle_type(std::string_view s);
Role parse_role(std::string_view s);
InteractionType parse_interaction_type(std::string_view s);
Outcome parse_outcome(std::string_view s);

constexpr std::array<Outcome, 4> kAllOutcomes{Outcome::CC, Outcome::CD, Outcome::DC, Outcome::DD};

}  // namespace lanegame
