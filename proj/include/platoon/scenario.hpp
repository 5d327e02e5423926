#pragma once

#include <cstdint>
#include <vector>

#include "platoon/config.hpp"
#include "platoon/world.hpp"

namespace platoon {

// Assembles the seeded world for a scenario: platoon first, then the scripted
// disturbance actors, then random background traffic.
World make_world(const ScenarioSpec& spec, std::uint64_t seed);

std::vector<int> platoon_ids_of(const World& world);

}  // namespace platoon
