#include "playtest/levels.hpp"

#include <map>

namespace playtest {

namespace {

const std::map<std::string, std::string, std::less<>>& catalog() {
    static const std::map<std::string, std::string, std::less<>> levels = {
        {"tiny",
         "WWW\n"
         "WAD\n"
         "WWW\n"},
        {"corridor",
         "WWWWWWWWW\n"
         "WA......D\n"
         "WWWWWWWWW\n"},
        {"two_door",
         "WWWWWWWWW\n"
         "WD..A..DW\n"
         "WWWWWWWWW\n"},
        {"twin_corridor",
         "WWWWWWWWWWWWW\n"
         "WD...A......D\n"
         "WWWWWWWWWWWWW\n"},
        {"ring",
         "WWWWWWW\n"
         "W.D.D.W\n"
         "W.WWW.W\n"
         "W.WWW.W\n"
         "W..A..W\n"
         "WWWWWWW\n"},
        {"open_lanes",
         "WWWWWWWWWW\n"
         "W........D\n"
         "W........W\n"
         "WA.......W\n"
         "W........W\n"
         "W........D\n"
         "WWWWWWWWWW\n"},
        {"fig5",
         "#max_timesteps=200\n"
         "WWWWWWWWWWWWWWWWWWWW\n"
         "WD......T..T......DW\n"
         "W..M............M..W\n"
         "W....T........T....W\n"
         "W.........M........W\n"
         "WWWWWWWW....WWWWWWWW\n"
         "W.........A........W\n"
         "W..................W\n"
         "W........T.M.......W\n"
         "W..................W\n"
         "W..T......D.....T..W\n"
         "W...M..........M...W\n"
         "WD......T.........DW\n"
         "WWWWWWWWWWWWWWWWWWWW\n"},
        {"five_door",
         "#max_timesteps=200\n"
         "WWWWWWWWWWWWWWWWWWWW\n"
         "W.D.............D..W\n"
         "W..................W\n"
         "W..................W\n"
         "W..................W\n"
         "W..................W\n"
         "W........A.........W\n"
         "W..................W\n"
         "W..................W\n"
         "W...WWWWWWWWWWW....W\n"
         "W..................W\n"
         "W..................W\n"
         "WD.......D.......D.W\n"
         "WWWWWWWWWWWWWWWWWWWW\n"},
        {"fig5_stochastic",
         "#max_timesteps=200\n"
         "#monster_policy=RandomWalk\n"
         "#avatar_hp=3\n"
         "#monster_damage=1\n"
         "#step_penalty=0.001\n"
         "WWWWWWWWWWWWWWWWWWWW\n"
         "WD......T..T......DW\n"
         "W..M............M..W\n"
         "W....T........T....W\n"
         "W.........M........W\n"
         "WWWWWWWW....WWWWWWWW\n"
         "W.........A........W\n"
         "W..................W\n"
         "W........T.M.......W\n"
         "W..................W\n"
         "W..T......D.....T..W\n"
         "W...M..........M...W\n"
         "WD......T.........DW\n"
         "WWWWWWWWWWWWWWWWWWWW\n"},
    };
    return levels;
}

}  // namespace

std::vector<std::string> builtin_level_names() {
    std::vector<std::string> names;
    for (const auto& [name, text] : catalog()) names.push_back(name);
    return names;
}

std::string builtin_level_text(std::string_view name) {
    auto it = catalog().find(name);
    if (it == catalog().end()) throw ValidationError("unknown builtin level '" + std::string(name) + "'");
    return it->second;
}

LevelSpec builtin_level(std::string_view name) { return load_level(builtin_level_text(name), std::string(name)); }

LevelSpec resolve_level(const std::string& ref) {
    constexpr std::string_view prefix = "builtin:";
    if (ref.rfind(prefix, 0) == 0) return builtin_level(std::string_view(ref).substr(prefix.size()));
    return load_level_file(ref);
}

}  // namespace playtest
