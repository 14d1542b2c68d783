#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "playtest/dungeon.hpp"

namespace playtest {

// Levels shipped with the library. `fig5` is the 14x20 five-door testbed
// replica; `five_door` has the same size and door count but two equally
// short exits (13 actions each). The remaining ones are small fixtures used
// by the examples and tests.
std::vector<std::string> builtin_level_names();
std::string builtin_level_text(std::string_view name);
LevelSpec builtin_level(std::string_view name);

// Accepts "builtin:<name>" or a path to a level file.
LevelSpec resolve_level(const std::string& ref);

}  // namespace playtest
