#include "fcm/difficulty.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

namespace fcm {

using json = nlohmann::json;

void DifficultyLexicon::validate() const {
  for (const auto& dim : dimensions) {
    if (dim.name.empty()) throw ConfigError("lexicon dimension missing name");
    if (dim.weight < 0) throw ConfigError("lexicon weight must be >= 0");
    for (const auto& kw : dim.keywords) {
      if (kw.empty()) throw ConfigError("empty keyword in " + dim.name);
      for (char c : kw)
        if (std::isupper(static_cast<unsigned char>(c)))
          throw ConfigError("keywords must be lowercase: " + kw);
    }
  }
}

namespace {

std::vector<std::string> join(std::vector<std::string> base,
                              const std::vector<std::string>& extensions) {
  base.insert(base.end(), extensions.begin(), extensions.end());
  return base;
}

}  // namespace

DifficultyLexicon DifficultyLexicon::standard() {
  DifficultyLexicon lex;
  // Each dimension: the published table entries first, then our documented
  // extensions (inflected forms of the listed verbs; no new lemmas).
  lex.dimensions[0] = {"direction",
                       {"left", "right", "forward", "backward", "clockwise",
                        "counterclockwise", "sideways", "diagonal", "north", "south",
                        "east", "westward"},
                       1.0};
  lex.dimensions[1] = {"body_parts",
                       {"arm", "leg", "hand", "foot", "head", "torso", "hip", "shoulder",
                        "elbow", "knee", "wrist", "ankle", "spine", "neck", "finger",
                        "chest", "back"},
                       1.0};
  lex.dimensions[2] = {"modifiers",
                       {"quickly", "slowly", "slightly", "sharply", "gently", "rapidly",
                        "suddenly", "gradually", "briefly", "continuously", "repeatedly"},
                       1.0};
  lex.dimensions[3] = {"temporal",
                       {"then", "while", "before", "after", "simultaneously",
                        "followed by", "at the same time", "next", "finally", "meanwhile"},
                       1.0};
  lex.dimensions[4] = {"count",
                       {"twice", "three times", "several times", "multiple times", "once",
                        "again", "number of"},
                       1.0};
  lex.dimensions[5] = {
      "verbs",
      join({"kick", "punch", "bend", "twist", "spin", "crawl", "kneel", "wave", "crouch",
            "squat", "hop", "leap", "lunge", "stomp", "clap", "point", "rotate"},
           // extensions: -s and -ing inflections
           {"kicks", "kicking", "punches", "punching", "bends", "bending", "twists",
            "twisting", "spins", "spinning", "crawls", "crawling", "kneels", "kneeling",
            "waves", "waving", "crouches", "crouching", "squats", "squatting", "hops",
            "hopping", "leaps", "leaping", "lunges", "lunging", "stomps", "stomping",
            "claps", "clapping", "points", "pointing", "rotates", "rotating"}),
      1.0};
  lex.dimensions[6] = {"constraint",
                       {"only", "specific", "particular", "certain", "exactly",
                        "precisely", "must", "specifically"},
                       1.0};
  lex.dimensions[7] = {"spatial",
                       {"upward", "downward", "inward", "outward", "horizontal",
                        "vertical", "perpendicular", "parallel", "above", "below",
                        "overhead"},
                       1.0};
  lex.validate();
  return lex;
}

DifficultyLexicon DifficultyLexicon::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open lexicon: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad lexicon file: ") + e.what());
  }
  if (j.size() != 8) throw ConfigError("lexicon must define exactly 8 dimensions");
  DifficultyLexicon lex;
  std::size_t i = 0;
  for (const auto& [name, body] : j.items()) {
    lex.dimensions[i].name = name;
    lex.dimensions[i].keywords = body.at("keywords").get<std::vector<std::string>>();
    lex.dimensions[i].weight = body.value("weight", 1.0);
    ++i;
  }
  lex.validate();
  return lex;
}

void DifficultyLexicon::save(const std::string& path) const {
  validate();
  json j = json::object();
  for (const auto& dim : dimensions)
    j[dim.name] = {{"keywords", dim.keywords}, {"weight", dim.weight}};
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write lexicon: " + path);
  f << j.dump(1) << "\n";
}

std::vector<std::string> difficulty_tokens(const std::string& caption) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : caption) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

int count_occurrences(const std::vector<std::string>& tokens, const std::string& keyword) {
  const auto phrase = difficulty_tokens(keyword);
  if (phrase.empty() || tokens.size() < phrase.size()) return 0;
  int count = 0;
  for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
    bool match = true;
    for (std::size_t p = 0; p < phrase.size(); ++p)
      if (tokens[i + p] != phrase[p]) {
        match = false;
        break;
      }
    if (match) ++count;
  }
  return count;
}

}  // namespace

ScoredPrompt score_rule(const std::string& caption, const DifficultyLexicon& lexicon) {
  if (caption.empty()) throw ValidationError("empty caption");
  lexicon.validate();
  const auto tokens = difficulty_tokens(caption);
  ScoredPrompt out;
  out.caption = caption;
  out.motion_id = caption;
  for (std::size_t i = 0; i < 8; ++i) {
    int c = 0;
    for (const auto& kw : lexicon.dimensions[i].keywords)
      c += count_occurrences(tokens, kw);
    out.counts[i] = c;
    out.s_rule += lexicon.dimensions[i].weight * c;
  }
  out.s_final = out.s_rule;
  return out;
}

bool llm_gate(double s_rule) { return s_rule >= 4.0; }

std::vector<ScoredPrompt> fuse_and_select(std::vector<ScoredPrompt> prompts, double alpha,
                                          std::size_t k) {
  for (auto& p : prompts)
    p.s_final = p.s_rule + (p.s_llm ? alpha * *p.s_llm : 0.0);
  std::stable_sort(prompts.begin(), prompts.end(),
                   [](const ScoredPrompt& a, const ScoredPrompt& b) {
                     if (a.s_final != b.s_final) return a.s_final > b.s_final;
                     return a.caption < b.caption;
                   });
  std::vector<ScoredPrompt> out;
  std::vector<std::string> seen;
  for (auto& p : prompts) {
    const std::string& id = p.motion_id.empty() ? p.caption : p.motion_id;
    if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
    seen.push_back(id);
    out.push_back(std::move(p));
    if (out.size() == k) break;
  }
  if (out.size() < k)
    std::cerr << "[difficulty] pool smaller than requested top-k (" << out.size() << " < "
              << k << ")\n";
  return out;
}

std::string emit_prompt_template(const std::string& caption) {
  json request{
      {"system",
       "You are a linguistic difficulty rater for motion captions. Judge directional "
       "precision, temporal composition, body-part specificity, and spatial relations. "
       "Respond only with JSON of the form {\"score\": <integer 1-10>, "
       "\"justification\": <string>}."},
      {"user", "Rate the difficulty of the following motion caption on a 1-10 scale: \"" +
                   caption + "\""},
      {"response_format", "json"}};
  return request.dump(1);
}

}  // namespace fcm
