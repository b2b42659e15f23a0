#pragma once

// Two-group partition of learners, keyed by learner id.

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lpnmf/error.hpp"
#include "lpnmf/matrix.hpp"

namespace lpnmf {

class GroupLabeling {
 public:
  GroupLabeling() = default;

  // Tags must take exactly two distinct values, each used at least once.
  // The "f"/"p" pair orders f first; any other pair orders lexicographically.
  // Mean differences are always first-group minus second-group.
  explicit GroupLabeling(std::map<std::string, std::string> labels)
      : labels_(std::move(labels)) {
    std::set<std::string> tags;
    for (const auto& [id, tag] : labels_) {
      if (id.empty()) throw ValidationError("empty learner id in group labels");
      if (tag.empty()) throw ValidationError("learner '" + id + "' has an empty group tag");
      tags.insert(tag);
    }
    if (tags.size() > 2) {
      std::string list;
      for (const auto& t : tags) list += (list.empty() ? "" : ", ") + t;
      throw ValidationError("group labels use more than two tags: " + list);
    }
    if (tags.size() < 2) {
      throw ValidationError("group labels must define two non-empty groups");
    }
    first_ = *tags.begin();
    second_ = *tags.rbegin();
    if (tags.count("f") && tags.count("p")) {
      first_ = "f";
      second_ = "p";
    }
  }

  const std::map<std::string, std::string>& labels() const noexcept { return labels_; }
  const std::string& first_tag() const noexcept { return first_; }
  const std::string& second_tag() const noexcept { return second_; }

  std::size_t count(const std::string& tag) const {
    std::size_t c = 0;
    for (const auto& [id, t] : labels_) c += t == tag;
    return c;
  }

  const std::string& tag_of(const std::string& id) const {
    auto it = labels_.find(id);
    if (it == labels_.end()) throw ValidationError("learner '" + id + "' has no group label");
    return it->second;
  }

  // 1 for first-group membership, 0 for second, in the order of `ids`.
  std::vector<char> indicator(const Names& ids) const {
    std::vector<char> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(tag_of(id) == first_ ? 1 : 0);
    return out;
  }

  // Same learners with the two tags exchanged.
  GroupLabeling swapped() const {
    auto copy = labels_;
    for (auto& [id, t] : copy) t = t == first_ ? second_ : first_;
    return GroupLabeling(std::move(copy));
  }

 private:
  std::map<std::string, std::string> labels_;
  std::string first_;
  std::string second_;
};

}  // namespace lpnmf
