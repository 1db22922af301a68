#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fcm/common.hpp"

namespace fcm {

// Eight-dimension keyword lexicon for the heuristic prompt-difficulty score.
// Keywords are lowercase; a keyword may be a multi-word phrase matched on the
// token stream.
struct DifficultyLexicon {
  struct Dimension {
    std::string name;
    std::vector<std::string> keywords;
    double weight = 1.0;
  };
  std::array<Dimension, 8> dimensions;

  void validate() const;
  // Printed table entries plus documented verb-inflection extensions.
  static DifficultyLexicon standard();
  static DifficultyLexicon load(const std::string& path);
  void save(const std::string& path) const;
};

struct ScoredPrompt {
  std::string caption;
  std::string motion_id;  // dedup key; defaults to the caption
  std::array<int, 8> counts{};
  double s_rule = 0.0;
  std::optional<double> s_llm;
  double s_final = 0.0;
};

std::vector<std::string> difficulty_tokens(const std::string& caption);

// Whole-word occurrence counting per dimension; S_rule = sum w_i * count_i.
ScoredPrompt score_rule(const std::string& caption, const DifficultyLexicon& lexicon);

// Candidates at or above the rule threshold go to the external oracle.
bool llm_gate(double s_rule);

// S_final = S_rule + alpha * S_llm (when present); stable sort descending,
// caption tie-break, dedup by motion id, take k. k over pool size returns the
// whole pool with a warning on stderr.
std::vector<ScoredPrompt> fuse_and_select(std::vector<ScoredPrompt> prompts, double alpha,
                                          std::size_t k);

// Renders the oracle-request text (JSON envelope) for a caption. Text only.
std::string emit_prompt_template(const std::string& caption);

}  // namespace fcm
