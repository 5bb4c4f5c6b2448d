#pragma once

// Instruction vocabulary: color and pedestrian attribute phrases, the seen
// prompt expansion, single-block synonym substitution for unseen prompts and
// a closed word-level tokenizer.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavtrack/common.hpp"
#include "uavtrack/types.hpp"

namespace uavtrack::language {

struct ColorAnchor {
  std::string name;
  std::array<int, 3> rgb;
};

/// 18 chromatic anchors, in tie-break order. Every anchor sits outside the
/// base-tone bands so it maps to its own name.
inline const std::vector<ColorAnchor>& color_anchors() {
  static const std::vector<ColorAnchor> anchors{
      {"red", {220, 30, 30}},       {"orange", {245, 140, 20}},   {"yellow", {240, 220, 40}},
      {"green", {40, 170, 60}},     {"cyan", {40, 200, 210}},     {"blue", {40, 80, 220}},
      {"purple", {130, 50, 170}},   {"pink", {240, 130, 180}},    {"brown", {130, 80, 40}},
      {"dark red", {120, 15, 20}},  {"dark blue", {20, 40, 130}}, {"dark green", {20, 90, 40}},
      {"dark gray", {60, 70, 90}},  {"light gray", {175, 185, 205}}, {"gold", {210, 170, 50}},
      {"silver", {160, 170, 195}},  {"beige", {225, 205, 160}},   {"olive", {120, 120, 30}},
  };
  return anchors;
}

inline const std::array<std::string, 3>& base_tones() {
  static const std::array<std::string, 3> tones{"black", "white", "gray"};
  return tones;
}

struct ColorThresholds {
  double black_luminance = 40.0;
  double white_luminance = 215.0;
  double gray_saturation = 25.0;
};

/// Base tones by luminance and saturation first, otherwise the nearest
/// anchor by RGB Euclidean distance (first anchor wins ties).
inline std::string color_name(std::array<int, 3> rgb, const ColorThresholds& th = {}) {
  for (int c : rgb)
    if (c < 0 || c > 255) throw Error("color_name: component out of [0, 255]");
  const double lum = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
  const int sat = *std::max_element(rgb.begin(), rgb.end()) - *std::min_element(rgb.begin(), rgb.end());
  if (lum < th.black_luminance) return "black";
  if (lum > th.white_luminance) return "white";
  if (sat < th.gray_saturation) return "gray";
  const auto& anchors = color_anchors();
  std::size_t best = 0;
  long best_d = -1;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    long d = 0;
    for (int k = 0; k < 3; ++k) {
      const long diff = rgb[k] - anchors[i].rgb[k];
      d += diff * diff;
    }
    if (best_d < 0 || d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return anchors[best].name;
}

enum class Age { adult, teenager, child };
enum class Gender { male, female };

inline std::string pedestrian_phrase(Age age, Gender gender) {
  const char* a = age == Age::adult ? "adult" : age == Age::teenager ? "teenager" : "child";
  const char* g = gender == Gender::male ? "male" : "female";
  return std::string(a) + " " + g + " pedestrian";
}

enum class SubstitutionKind : std::uint8_t { none = 0, verb = 1, object = 2, distance = 3 };

inline std::string_view to_string(SubstitutionKind k) {
  switch (k) {
    case SubstitutionKind::none: return "none";
    case SubstitutionKind::verb: return "verb";
    case SubstitutionKind::object: return "object";
    case SubstitutionKind::distance: return "distance";
  }
  return "?";
}

inline SubstitutionKind parse_substitution_kind(std::string_view s) {
  if (s == "none") return SubstitutionKind::none;
  if (s == "verb") return SubstitutionKind::verb;
  if (s == "object") return SubstitutionKind::object;
  if (s == "distance") return SubstitutionKind::distance;
  throw Error("unknown substitution kind '" + std::string(s) + "'");
}

/// Instruction split into its three semantic blocks.
struct PromptSpec {
  std::string verb = "Track";
  std::string target_attribute;     // object block, e.g. "red bicycle"
  std::string distance_constraint;  // e.g. "at a long distance"
  Split split = Split::seen;
  SubstitutionKind substitution_kind = SubstitutionKind::none;
  TargetClass target_class = TargetClass::pedestrian;
  DistanceTier tier = DistanceTier::suitable;
  int base_index = -1;  // seen prompt this one was derived from

  std::string text() const { return verb + " the " + target_attribute + " " + distance_constraint + "."; }

  /// Number of blocks (verb, object, distance) that differ.
  int blocks_differing(const PromptSpec& o) const {
    return (verb != o.verb) + (target_attribute != o.target_attribute) +
           (distance_constraint != o.distance_constraint);
  }
};

inline std::string distance_phrase(DistanceTier t) {
  switch (t) {
    case DistanceTier::close: return "at a close distance";
    case DistanceTier::suitable: return "at a suitable distance";
    case DistanceTier::far: return "at a long distance";
  }
  return "";
}

struct AttributeEntry {
  std::string phrase;
  TargetClass cls;
  std::vector<DistanceTier> tiers;
};

/// Object phrases of the seen template and the distances each is paired
/// with. Teenager phrases pair with close and suitable only, which brings the
/// expansion to 136.
inline std::vector<AttributeEntry> seen_attributes() {
  const std::vector<DistanceTier> all{DistanceTier::close, DistanceTier::suitable, DistanceTier::far};
  std::vector<AttributeEntry> out;
  out.push_back({"pedestrian", TargetClass::pedestrian, all});
  for (Age a : {Age::adult, Age::child})
    for (Gender g : {Gender::male, Gender::female}) out.push_back({pedestrian_phrase(a, g), TargetClass::pedestrian, all});
  for (Gender g : {Gender::male, Gender::female})
    out.push_back({pedestrian_phrase(Age::teenager, g), TargetClass::pedestrian,
                   {DistanceTier::close, DistanceTier::suitable}});

  out.push_back({"vehicle", TargetClass::vehicle, all});
  for (const auto& t : base_tones()) out.push_back({t + " vehicle", TargetClass::vehicle, all});
  for (const auto& a : color_anchors()) out.push_back({a.name + " vehicle", TargetClass::vehicle, all});

  for (const char* c : {"black", "white", "red", "orange", "green", "blue", "dark gray", "silver", "yellow"})
    out.push_back({std::string(c) + " motorcycle", TargetClass::two_wheeler, all});
  for (const char* c : {"red", "blue", "black", "white", "green", "yellow", "orange", "pink"})
    out.push_back({std::string(c) + " bicycle", TargetClass::two_wheeler, all});
  return out;
}

inline std::vector<PromptSpec> seen_prompts() {
  std::vector<PromptSpec> out;
  for (const auto& a : seen_attributes())
    for (DistanceTier t : a.tiers) {
      PromptSpec p;
      p.target_attribute = a.phrase;
      p.distance_constraint = distance_phrase(t);
      p.target_class = a.cls;
      p.tier = t;
      out.push_back(std::move(p));
    }
  return out;
}

/// Synonyms per block value. Object synonyms key on the noun phrase that is
/// replaced (a color prefix is kept).
struct SynonymTable {
  std::map<std::string, std::vector<std::string>> verb;
  std::map<std::string, std::vector<std::string>> object;
  std::map<std::string, std::vector<std::string>> distance;

  static const SynonymTable& standard() {
    static const SynonymTable t{
        {{"Track", {"Focus on", "Keep an eye on", "Pursue"}}},
        {{"vehicle", {"auto", "automobile"}},
         {"motorcycle", {"motorbike"}},
         {"bicycle", {"pedal cycle", "cycle"}},
         {"pedestrian", {"human", "walker"}},
         {"adult male pedestrian", {"male adult", "man"}},
         {"adult female pedestrian", {"woman"}},
         {"child male pedestrian", {"boy"}},
         {"child female pedestrian", {"little girl"}}},
        {{"at a long distance", {"from afar"}},
         {"at a suitable distance", {"nearby"}},
         {"at a close distance", {"at a close range"}}},
    };
    return t;
  }
};

namespace detail {

/// Splits an object phrase into (prefix, noun key) using the longest key in
/// the synonym table that ends the phrase on a word boundary.
inline std::optional<std::pair<std::string, std::string>> split_object(
    const std::string& phrase, const std::map<std::string, std::vector<std::string>>& table) {
  std::optional<std::pair<std::string, std::string>> best;
  for (const auto& [key, _] : table) {
    if (phrase.size() < key.size() || phrase.compare(phrase.size() - key.size(), key.size(), key) != 0) continue;
    const std::size_t cut = phrase.size() - key.size();
    if (cut != 0 && phrase[cut - 1] != ' ') continue;
    if (!best || key.size() > best->second.size()) best = std::make_pair(phrase.substr(0, cut), key);
  }
  return best;
}

}  // namespace detail

/// Replaces exactly one block of a seen prompt with a synonym. When `pinned`
/// is given it must be one of the table's candidates for that block.
inline PromptSpec substitute_block(const PromptSpec& base, SubstitutionKind kind, Rng& rng,
                                   const SynonymTable& table = SynonymTable::standard(),
                                   const std::optional<std::string>& pinned = std::nullopt) {
  if (base.split != Split::seen) throw Error("substitute_block: base prompt must be seen");
  auto choose = [&](const std::vector<std::string>& cands, const std::string& what) -> std::string {
    if (pinned) {
      if (std::find(cands.begin(), cands.end(), *pinned) == cands.end())
        throw Error("substitute_block: '" + *pinned + "' is not a synonym of '" + what + "'");
      return *pinned;
    }
    return cands[rng.index(cands.size())];
  };
  PromptSpec out = base;
  out.split = Split::unseen;
  out.substitution_kind = kind;
  switch (kind) {
    case SubstitutionKind::verb: {
      auto it = table.verb.find(base.verb);
      if (it == table.verb.end()) throw Error("substitute_block: no verb synonym for '" + base.verb + "'");
      out.verb = choose(it->second, base.verb);
      break;
    }
    case SubstitutionKind::object: {
      // A pinned synonym may replace the whole phrase ("adult male pedestrian"
      // -> "man") or only the trailing noun ("black vehicle" -> "black auto").
      std::optional<std::pair<std::string, std::string>> parts;
      if (pinned) {
        for (const auto& [key, cands] : table.object) {
          if (std::find(cands.begin(), cands.end(), *pinned) == cands.end()) continue;
          auto p = detail::split_object(base.target_attribute, {{key, cands}});
          if (p && (!parts || p->second.size() > parts->second.size())) parts = p;
        }
      } else {
        parts = detail::split_object(base.target_attribute, table.object);
      }
      if (!parts)
        throw Error("substitute_block: no object synonym for '" + base.target_attribute + "'");
      out.target_attribute = parts->first + choose(table.object.at(parts->second), parts->second);
      break;
    }
    case SubstitutionKind::distance: {
      auto it = table.distance.find(base.distance_constraint);
      if (it == table.distance.end())
        throw Error("substitute_block: no distance synonym for '" + base.distance_constraint + "'");
      out.distance_constraint = choose(it->second, base.distance_constraint);
      break;
    }
    case SubstitutionKind::none: throw Error("substitute_block: kind must be verb, object or distance");
  }
  return out;
}

/// One planned unseen prompt: the seen base text, the block to replace and
/// the synonym to use.
struct SubstitutionPlanEntry {
  std::string base_text;
  SubstitutionKind kind;
  std::string synonym;
};

/// The 40 zero-shot substitutions (14 verb, 17 object, 9 distance).
inline const std::vector<SubstitutionPlanEntry>& reference_plan() {
  using K = SubstitutionKind;
  static const std::vector<SubstitutionPlanEntry> plan{
      {"Track the child male pedestrian at a long distance.", K::verb, "Focus on"},
      {"Track the red bicycle at a long distance.", K::verb, "Keep an eye on"},
      {"Track the vehicle at a long distance.", K::verb, "Focus on"},
      {"Track the child female pedestrian at a long distance.", K::verb, "Focus on"},
      {"Track the black motorcycle at a suitable distance.", K::verb, "Pursue"},
      {"Track the orange motorcycle at a long distance.", K::verb, "Pursue"},
      {"Track the orange motorcycle at a suitable distance.", K::verb, "Pursue"},
      {"Track the red bicycle at a suitable distance.", K::verb, "Focus on"},
      {"Track the child female pedestrian at a suitable distance.", K::verb, "Focus on"},
      {"Track the child male pedestrian at a suitable distance.", K::verb, "Keep an eye on"},
      {"Track the black motorcycle at a long distance.", K::verb, "Pursue"},
      {"Track the black vehicle at a suitable distance.", K::verb, "Pursue"},
      {"Track the pedestrian at a long distance.", K::verb, "Keep an eye on"},
      {"Track the adult female pedestrian at a long distance.", K::verb, "Focus on"},

      {"Track the black vehicle at a long distance.", K::object, "auto"},
      {"Track the adult male pedestrian at a long distance.", K::object, "male adult"},
      {"Track the green motorcycle at a long distance.", K::object, "motorbike"},
      {"Track the child female pedestrian at a long distance.", K::object, "little girl"},
      {"Track the black motorcycle at a long distance.", K::object, "motorbike"},
      {"Track the dark blue vehicle at a suitable distance.", K::object, "auto"},
      {"Track the pedestrian at a suitable distance.", K::object, "human"},
      {"Track the dark red vehicle at a suitable distance.", K::object, "automobile"},
      {"Track the blue bicycle at a long distance.", K::object, "pedal cycle"},
      {"Track the pedestrian at a suitable distance.", K::object, "walker"},
      {"Track the light gray vehicle at a suitable distance.", K::object, "auto"},
      {"Track the adult male pedestrian at a suitable distance.", K::object, "man"},
      {"Track the child male pedestrian at a suitable distance.", K::object, "boy"},
      {"Track the dark red vehicle at a suitable distance.", K::object, "automobile"},
      {"Track the red bicycle at a long distance.", K::object, "cycle"},
      {"Track the adult female pedestrian at a suitable distance.", K::object, "woman"},
      {"Track the child male pedestrian at a long distance.", K::object, "boy"},

      {"Track the adult female pedestrian at a suitable distance.", K::distance, "nearby"},
      {"Track the adult male pedestrian at a close distance.", K::distance, "at a close range"},
      {"Track the orange motorcycle at a suitable distance.", K::distance, "nearby"},
      {"Track the blue bicycle at a suitable distance.", K::distance, "nearby"},
      {"Track the black vehicle at a close distance.", K::distance, "at a close range"},
      {"Track the red bicycle at a suitable distance.", K::distance, "nearby"},
      {"Track the dark gray motorcycle at a close distance.", K::distance, "at a close range"},
      {"Track the dark red vehicle at a long distance.", K::distance, "from afar"},
      {"Track the white vehicle at a suitable distance.", K::distance, "nearby"},
  };
  return plan;
}

/// 136 seen prompts followed by the 40 planned unseen prompts. The plan pins
/// every synonym, so the seed only matters for unpinned plans.
inline std::vector<PromptSpec> generate_vocabulary(std::uint64_t seed,
                                                   const std::vector<SubstitutionPlanEntry>& plan = reference_plan()) {
  std::vector<PromptSpec> out = seen_prompts();
  const std::size_t n_seen = out.size();
  Rng rng(seed);
  for (const auto& e : plan) {
    std::size_t base = n_seen;
    for (std::size_t i = 0; i < n_seen; ++i)
      if (out[i].text() == e.base_text) {
        base = i;
        break;
      }
    if (base == n_seen) throw Error("generate_vocabulary: base prompt not in seen set: " + e.base_text);
    PromptSpec p = substitute_block(out[base], e.kind, rng, SynonymTable::standard(),
                                    e.synonym.empty() ? std::nullopt : std::optional<std::string>(e.synonym));
    p.base_index = static_cast<int>(base);
    out.push_back(std::move(p));
  }
  return out;
}

/// Lowercased alphanumeric words; everything else separates.
inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

struct Instruction {
  std::string text;
  std::vector<int> token_ids;

  int length() const {
    return static_cast<int>(std::count_if(token_ids.begin(), token_ids.end(), [](int t) { return t != 0; }));
  }
};

/// Closed vocabulary: id 0 is padding, id 1 unknown, then words sorted.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;

  Vocab() : words_{"<pad>", "<unk>"} {}

  static Vocab from_prompts(const std::vector<PromptSpec>& prompts) {
    std::vector<std::string> all;
    for (const auto& p : prompts)
      for (auto& w : split_words(p.text())) all.push_back(std::move(w));
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    Vocab v;
    for (auto& w : all) v.add(w);
    return v;
  }

  /// Rebuilds a vocabulary from its word list (ids in order). The first two
  /// entries must be the pad and unknown markers.
  static Vocab from_words(const std::vector<std::string>& words) {
    if (words.size() < 2 || words[0] != "<pad>" || words[1] != "<unk>")
      throw Error("Vocab: word list must start with <pad>, <unk>");
    Vocab v;
    for (std::size_t i = 2; i < words.size(); ++i) v.add(words[i]);
    if (v.size() != static_cast<int>(words.size())) throw Error("Vocab: duplicate words");
    return v;
  }
  const std::vector<std::string>& words() const { return words_; }

  int id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnknown : it->second;
  }
  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }

 private:
  void add(const std::string& w) {
    if (index_.count(w)) return;
    index_[w] = static_cast<int>(words_.size());
    words_.push_back(w);
  }
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

inline Instruction tokenize(const std::string& text, const Vocab& vocab, int max_text_len = 16) {
  Instruction ins;
  ins.text = text;
  ins.token_ids.assign(static_cast<std::size_t>(max_text_len), Vocab::kPad);
  const auto words = split_words(text);
  for (std::size_t i = 0; i < words.size() && i < ins.token_ids.size(); ++i) ins.token_ids[i] = vocab.id(words[i]);
  return ins;
}

inline nlohmann::json task_json(std::size_t index, const PromptSpec& p) {
  return {{"task_index", index},
          {"task", p.text()},
          {"split", std::string(to_string(p.split))},
          {"substitution_kind", std::string(to_string(p.substitution_kind))}};
}

/// Newline-delimited prompt list.
inline void write_prompt_list(std::ostream& os, const std::vector<PromptSpec>& prompts) {
  for (const auto& p : prompts) os << p.text() << '\n';
}

/// JSON-lines task table: one {task_index, task, split, substitution_kind}
/// object per prompt.
inline void write_task_table(std::ostream& os, const std::vector<PromptSpec>& prompts) {
  for (std::size_t i = 0; i < prompts.size(); ++i) os << task_json(i, prompts[i]).dump() << '\n';
}

/// Indices of prompts matching a split and, optionally, a class and tier.
inline std::vector<std::size_t> select_prompts(const std::vector<PromptSpec>& prompts, Split split,
                                               std::optional<TargetClass> cls = std::nullopt,
                                               std::optional<DistanceTier> tier = std::nullopt) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& p = prompts[i];
    if (p.split != split) continue;
    if (cls && p.target_class != *cls) continue;
    if (tier && p.tier != *tier) continue;
    out.push_back(i);
  }
  return out;
}

}  // namespace uavtrack::language
