#pragma once

// Feature schema metadata. The annotations are presentation-only; nothing in
// the numerics reads them.

#include <set>
#include <string>
#include <vector>

#include "lpnmf/error.hpp"
#include "lpnmf/matrix.hpp"

namespace lpnmf {

struct FeatureInfo {
  std::string name;
  std::string description;
  std::vector<std::string> addressed_styles;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureInfo> features)
      : features_(std::move(features)) {
    std::set<std::string> seen;
    for (const auto& f : features_) {
      if (f.name.empty()) throw ValidationError("feature schema has an empty name");
      if (!seen.insert(f.name).second)
        throw ValidationError("feature schema repeats the name '" + f.name + "'");
    }
  }

  const std::vector<FeatureInfo>& features() const noexcept { return features_; }
  std::size_t size() const noexcept { return features_.size(); }

  const FeatureInfo* find(const std::string& name) const {
    for (const auto& f : features_)
      if (f.name == name) return &f;
    return nullptr;
  }

  Names names() const {
    Names out;
    for (const auto& f : features_) out.push_back(f.name);
    return out;
  }

  // Every feature of the data must be described by the schema.
  void validate(const Names& feature_names) const {
    for (const auto& n : feature_names)
      if (!find(n)) throw ValidationError("feature '" + n + "' is not in the schema");
  }

 private:
  std::vector<FeatureInfo> features_;
};

// The 21 course-interaction features with their intended style annotations.
inline const FeatureSchema& builtin_schema() {
  static const FeatureSchema schema({
      {"a_try", "average number of attempts on quizzes", {"active", "sensing"}},
      {"a_tryx", "average attempts on quizzes after the 50% threshold", {"active", "achieving"}},
      {"opt_try", "average attempts on optional final quizzes", {"active", "global"}},
      {"a_time", "average time passed when solving quiz", {"reflective", "sensing"}},
      {"a_score", "average score on quizzes", {"sensing", "achieving"}},
      {"th_score", "scores on quiz questions with theoretical emphasis", {"intuitive"}},
      {"st_score", "scores on quiz questions with standard tasks", {"sensing"}},
      {"m_score", "average score exceeding the 50% threshold", {"achieving"}},
      {"p_noans", "mean number of quiz questions without an answer", {"global", "surface"}},
      {"q_dur", "queries on the content during quiz solving", {"reflective", "surface"}},
      {"p_quizc", "proportion of completed quizzes", {"active", "intuitive", "sequential"}},
      {"p_cont", "proportion of retrieved lecture notes", {"reflective", "intuitive"}},
      {"p_prac", "proportion of retrieved exercises", {"reflective", "sensing"}},
      {"p_links", "proportion of clicked links", {"reflective"}},
      {"p_vids", "proportion of seen videos", {"reflective"}},
      {"review_q", "number of quizzes reviewed later", {"active", "global"}},
      {"a_early", "average time surplus of early completions", {"sequential"}},
      {"on_time", "proportion of activities completed on time", {"sequential"}},
      {"a_late", "average delay of late completions", {"global"}},
      {"words_frm", "total number of words in forum posts", {"active"}},
      {"posts_frm", "total number of posted messages", {"active"}},
  });
  return schema;
}

}  // namespace lpnmf
