#pragma once

// Scenario presets: lane polylines, static obstacles, seen/unseen grouping.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uavtrack/common.hpp"
#include "uavtrack/types.hpp"

namespace uavtrack::sim {

enum class ObstacleClass : std::uint8_t { pedestrian = 0, vehicle = 1, other = 2 };

inline std::string_view to_string(ObstacleClass c) {
  switch (c) {
    case ObstacleClass::pedestrian: return "pedestrian";
    case ObstacleClass::vehicle: return "vehicle";
    case ObstacleClass::other: return "other";
  }
  return "?";
}

/// Static vertical cylinder.
struct Obstacle {
  Eigen::Vector2d position{0.0, 0.0};
  double radius = 0.0;
  double height = 0.0;
  ObstacleClass cls = ObstacleClass::other;
  bool operator==(const Obstacle&) const = default;
};

using Lane = std::vector<Eigen::Vector2d>;

struct Scenario {
  int id = 0;
  std::string name;
  Split split = Split::seen;
  std::vector<Lane> lanes;
  std::vector<Obstacle> obstacles;
};

namespace detail {

inline ObstacleClass parse_obstacle_class(const std::string& s, int line) {
  if (s == "pedestrian") return ObstacleClass::pedestrian;
  if (s == "vehicle") return ObstacleClass::vehicle;
  if (s == "other") return ObstacleClass::other;
  throw Error("scenario line " + std::to_string(line) + ": unknown obstacle class '" + s + "'");
}

}  // namespace detail

inline std::vector<Scenario> parse_scenarios(std::istream& in) {
  std::vector<Scenario> out;
  Scenario* cur = nullptr;
  std::string raw;
  int line = 0;
  auto fail = [&](const std::string& msg) {
    throw Error("scenario line " + std::to_string(line) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ss(raw);
    std::string key;
    if (!(ss >> key)) continue;
    if (key == "scenario") {
      if (cur) fail("nested scenario block");
      Scenario s;
      std::string split;
      if (!(ss >> s.id >> s.name >> split)) fail("expected 'scenario <id> <name> <split>'");
      s.split = parse_split(split);
      for (const auto& o : out)
        if (o.id == s.id) fail("duplicate scenario id " + std::to_string(s.id));
      out.push_back(std::move(s));
      cur = &out.back();
    } else if (key == "lane") {
      if (!cur) fail("lane outside scenario block");
      Lane lane;
      std::string tok;
      while (ss >> tok) {
        const auto comma = tok.find(',');
        if (comma == std::string::npos) fail("lane point must be 'x,y'");
        try {
          lane.emplace_back(std::stod(tok.substr(0, comma)), std::stod(tok.substr(comma + 1)));
        } catch (const std::exception&) {
          fail("bad lane point '" + tok + "'");
        }
      }
      if (lane.size() < 2) fail("lane needs at least two points");
      cur->lanes.push_back(std::move(lane));
    } else if (key == "obstacle") {
      if (!cur) fail("obstacle outside scenario block");
      Obstacle o;
      double x = 0, y = 0;
      std::string cls;
      if (!(ss >> x >> y >> o.radius >> o.height >> cls)) fail("expected 'obstacle x y radius height class'");
      if (o.radius <= 0.0 || o.height <= 0.0) fail("obstacle radius and height must be positive");
      o.position = {x, y};
      o.cls = detail::parse_obstacle_class(cls, line);
      cur->obstacles.push_back(o);
    } else if (key == "end") {
      if (!cur) fail("'end' without scenario");
      if (cur->lanes.empty()) fail("scenario '" + cur->name + "' has no lanes");
      cur = nullptr;
    } else {
      fail("unknown directive '" + key + "'");
    }
  }
  if (cur) throw Error("scenario file: missing 'end' for '" + cur->name + "'");
  return out;
}

inline std::vector<Scenario> load_scenarios(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file '" + path + "'");
  try {
    return parse_scenarios(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

/// Built-in copy of data/scenarios.txt.
inline constexpr const char* kDefaultScenarioText = R"PRESETS(# Scenario presets for the kinematic tracking world.
#
#   scenario <id> <name> <seen|unseen>
#   lane <x>,<y> <x>,<y> ...              closed polyline, metres
#   obstacle <x> <y> <radius> <height> <pedestrian|vehicle|other>
#   end
#
# Seen presets mirror the training towns, unseen presets the held-out towns.

scenario 0 town02 seen
lane 0,0 120,0 120,80 0,80
lane 20,20 100,20 100,60 20,60
lane 0,40 60,40 60,0 60,80 60,40 120,40
obstacle 30 1.2 0.2 6.0 other
obstacle 90 -1.2 0.2 6.0 other
obstacle 121.3 40 0.2 6.0 other
obstacle 70 81.5 1.0 1.5 vehicle
obstacle 20 19 0.3 1.8 pedestrian
end

scenario 1 town05 seen
lane 0,0 200,0 200,50 0,50
lane 0,25 200,25
lane 50,-20 150,70 150,-20 50,70
obstacle 45 1.0 0.2 6.0 other
obstacle 120 -1.0 0.2 6.0 other
obstacle 160 51.2 1.0 1.5 vehicle
obstacle 100 26 0.3 1.8 pedestrian
end

scenario 2 town06 seen
lane 0,0 300,0 330,40 300,80 0,80 -30,40
lane 0,10 300,10 300,70 0,70
obstacle 150 1.3 0.2 6.0 other
obstacle 250 81.2 0.2 6.0 other
obstacle 80 11 1.0 1.5 vehicle
end

scenario 3 town07 seen
lane 0,0 40,10 80,0 120,15 160,0 160,60 120,70 80,55 40,70 0,60
lane 20,30 140,30 140,45 20,45
obstacle 40 11.3 0.3 5.0 other
obstacle 121 16.2 0.3 5.0 other
obstacle 80 56.5 1.0 1.5 vehicle
obstacle 60 31 0.3 1.8 pedestrian
end

scenario 4 town10 seen
lane 0,0 100,0 100,100 0,100
lane 50,-10 50,110 60,110 60,-10
lane -10,50 110,50 110,60 -10,60
obstacle 51.2 20 0.2 6.0 other
obstacle 25 1.0 0.2 6.0 other
obstacle 80 101.2 1.0 1.5 vehicle
obstacle 30 51 0.3 1.8 pedestrian
end

scenario 5 town01 unseen
lane 0,0 150,0 150,100 0,100
lane 0,50 150,50
obstacle 75 1.2 0.2 6.0 other
obstacle 151.2 70 0.2 6.0 other
obstacle 40 51 0.3 1.8 pedestrian
end

scenario 6 town03 unseen
lane 60,0 120,35 120,105 60,140 0,105 0,35
lane 30,50 90,50 90,90 30,90
obstacle 90 17 0.3 5.0 other
obstacle 121 70 1.0 1.5 vehicle
obstacle 60 51 0.3 1.8 pedestrian
end

scenario 7 town04 unseen
lane 0,0 250,0 280,30 250,60 150,60 120,90 0,90
lane 20,30 230,30
obstacle 100 1.2 0.2 6.0 other
obstacle 200 -1.2 0.2 6.0 other
obstacle 135 75 1.0 1.5 vehicle
end
)PRESETS";

inline const std::vector<Scenario>& default_scenarios() {
  static const std::vector<Scenario> presets = [] {
    std::istringstream in(kDefaultScenarioText);
    return parse_scenarios(in);
  }();
  return presets;
}

inline const Scenario& find_scenario(const std::vector<Scenario>& presets, int id) {
  for (const auto& s : presets)
    if (s.id == id) return s;
  throw Error("unknown scenario preset id " + std::to_string(id));
}

inline std::vector<int> scenario_ids(const std::vector<Scenario>& presets, Split split) {
  std::vector<int> ids;
  for (const auto& s : presets)
    if (s.split == split) ids.push_back(s.id);
  return ids;
}

}  // namespace uavtrack::sim
