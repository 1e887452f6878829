#pragma once

// Attribute decomposition of language descriptions: every description is
// split into category / appearance / action / location phrases. A small
// deterministic grammar replaces the LLM-based segmentation used with real
// corpora; pre-segmented annotations can be ingested directly.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "vltrack/tensor.hpp"

namespace vltrack {

using Phrase = std::vector<std::string>;

struct AttributePhrases {
  Phrase category;  // never empty
  std::optional<Phrase> appearance;
  std::optional<Phrase> action;
  std::optional<Phrase> location;

  bool operator==(const AttributePhrases&) const = default;
};

inline std::string join_phrase(const Phrase& p) {
  std::string s;
  for (size_t i = 0; i < p.size(); ++i) {
    if (i) s += ' ';
    s += p[i];
  }
  return s;
}

// Word classes shared by the segmenter and the synthetic description grammar.
namespace lexicon {

inline const std::vector<std::string>& colors() {
  static const std::vector<std::string> v{"red",     "green", "blue",   "yellow",
                                          "magenta", "cyan",  "orange", "white"};
  return v;
}

inline const std::vector<std::string>& shapes() {
  static const std::vector<std::string> v{"circle", "square", "triangle", "diamond", "ring"};
  return v;
}

// Words that may follow an action verb ("moving right", "standing still").
inline const std::vector<std::string>& action_modifiers() {
  static const std::vector<std::string> v{"right", "left", "up", "down", "still", "around"};
  return v;
}

inline bool is_color(const std::string& w) {
  const auto& c = colors();
  return std::find(c.begin(), c.end(), w) != c.end();
}

inline bool is_action_modifier(const std::string& w) {
  const auto& m = action_modifiers();
  return std::find(m.begin(), m.end(), w) != m.end();
}

// Gerunds open an action phrase ("moving", "circling", "flying", ...).
inline bool is_action_verb(const std::string& w) {
  return w.size() >= 5 && w.compare(w.size() - 3, 3, "ing") == 0;
}

}  // namespace lexicon

namespace detail {

inline std::vector<std::string> split_lower(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

// Deterministic attribute segmentation. Rules, in order:
//   1. a leading color word is the appearance;
//   2. the next token is the category;
//   3. a gerund (plus trailing direction/manner modifiers) is the action;
//   4. everything else, including interactions with other objects and any
//      construction the grammar does not know, is the location.
inline AttributePhrases segment_description(const std::string& text) {
  const std::vector<std::string> toks = detail::split_lower(text);
  check(!toks.empty(), "segment_description: empty description");

  AttributePhrases out;
  size_t i = 0;
  if (toks.size() >= 2 && lexicon::is_color(toks[0])) {
    out.appearance = Phrase{toks[0]};
    i = 1;
  }
  out.category = Phrase{toks[i]};
  ++i;

  if (i < toks.size() && lexicon::is_action_verb(toks[i])) {
    Phrase act{toks[i]};
    ++i;
    while (i < toks.size() && lexicon::is_action_modifier(toks[i])) {
      act.push_back(toks[i]);
      ++i;
    }
    out.action = std::move(act);
  }

  if (i < toks.size()) out.location = Phrase(toks.begin() + static_cast<long>(i), toks.end());
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary and tokenization

struct Vocabulary {
  static constexpr long kPad = 0;
  static constexpr long kNone = 1;
  static constexpr long kUnk = 2;

  std::vector<std::string> id_to_token{"<pad>", "<none>", "<unk>"};
  std::unordered_map<std::string, long> token_to_id{
      {"<pad>", kPad}, {"<none>", kNone}, {"<unk>", kUnk}};

  long add(const std::string& tok) {
    auto it = token_to_id.find(tok);
    if (it != token_to_id.end()) return it->second;
    const long id = static_cast<long>(id_to_token.size());
    id_to_token.push_back(tok);
    token_to_id.emplace(tok, id);
    return id;
  }

  long id(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? kUnk : it->second;
  }

  long size() const { return static_cast<long>(id_to_token.size()); }

  // Full lexicon of the synthetic grammar, in a fixed insertion order so ids
  // are stable across builds and checkpoints.
  static Vocabulary standard() {
    Vocabulary v;
    for (const auto& w : lexicon::colors()) v.add(w);
    for (const auto& w : lexicon::shapes()) v.add(w);
    for (const auto& w : {"moving", "circling", "standing"}) v.add(w);
    for (const auto& w : lexicon::action_modifiers()) v.add(w);
    for (const auto& w : {"in", "the", "upper", "lower", "half", "on", "side", "near",
                          "center", "next", "to"})
      v.add(w);
    return v;
  }
};

// Fixed-length id sequence: truncate or right-pad with PAD; an absent phrase
// becomes a single NONE token followed by padding.
inline std::vector<long> tokenize(const std::optional<Phrase>& phrase, const Vocabulary& vocab,
                                  long max_len) {
  check(max_len >= 1, "tokenize: max_len must be >= 1");
  std::vector<long> ids(static_cast<size_t>(max_len), Vocabulary::kPad);
  if (!phrase.has_value()) {
    ids[0] = Vocabulary::kNone;
    return ids;
  }
  const size_t n = std::min(phrase->size(), static_cast<size_t>(max_len));
  for (size_t i = 0; i < n; ++i) ids[i] = vocab.id((*phrase)[i]);
  return ids;
}

inline std::optional<Phrase> detokenize(const std::vector<long>& ids, const Vocabulary& vocab) {
  if (!ids.empty() && ids[0] == Vocabulary::kNone) return std::nullopt;
  Phrase p;
  for (long id : ids) {
    if (id == Vocabulary::kPad) break;
    p.push_back(vocab.id_to_token[static_cast<size_t>(id)]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Pre-segmented annotation ingestion: one JSON record per line with fields
// category / appearance / action / location, each a string or null.

inline AttributePhrases attributes_from_json(const nlohmann::json& j) {
  AttributePhrases a;
  check(j.contains("category") && j["category"].is_string(),
        "annotation record: category must be a string");
  a.category = detail::split_lower(j["category"].get<std::string>());
  check(!a.category.empty(), "annotation record: category must be nonempty");
  auto opt = [&](const char* key) -> std::optional<Phrase> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return detail::split_lower(j[key].get<std::string>());
  };
  a.appearance = opt("appearance");
  a.action = opt("action");
  a.location = opt("location");
  return a;
}

inline nlohmann::json attributes_to_json(const AttributePhrases& a) {
  nlohmann::json j;
  j["category"] = join_phrase(a.category);
  j["appearance"] = a.appearance ? nlohmann::json(join_phrase(*a.appearance)) : nullptr;
  j["action"] = a.action ? nlohmann::json(join_phrase(*a.action)) : nullptr;
  j["location"] = a.location ? nlohmann::json(join_phrase(*a.location)) : nullptr;
  return j;
}

inline std::vector<AttributePhrases> read_attribute_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation file: " + path);
  std::vector<AttributePhrases> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(attributes_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace vltrack
