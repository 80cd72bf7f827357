#pragma once

#include <set>
#include <string>
#include <vector>

namespace sgfuse {

/// Class and predicate vocabulary of a dataset. Class/predicate ids are
/// indices into the name lists. Landmark classes (door, wall, road) act as
/// region separators; background classes (floor, pavement) are layout stuff
/// kept out of the object layer. Symmetric predicates are canonicalized to
/// (lower id, higher id) pairs before relation voting.
struct Vocabulary {
  std::vector<std::string> classes;
  std::vector<std::string> predicates;
  std::set<int> large_classes;
  std::set<int> landmark_classes;
  std::set<int> background_classes;
  std::set<int> symmetric_predicates;

  int num_classes() const { return static_cast<int>(classes.size()); }
  int num_predicates() const { return static_cast<int>(predicates.size()); }

  int class_id(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  int predicate_id(const std::string& name) const {
    for (std::size_t i = 0; i < predicates.size(); ++i) {
      if (predicates[i] == name) return static_cast<int>(i);
    }
    return -1;
  }

  const std::string& class_name(int id) const { return classes.at(id); }
  const std::string& predicate_name(int id) const { return predicates.at(id); }

  bool is_large(int class_id) const { return large_classes.count(class_id) > 0; }
  bool is_landmark(int class_id) const { return landmark_classes.count(class_id) > 0; }
  bool is_background(int class_id) const { return background_classes.count(class_id) > 0; }
  bool is_symmetric(int predicate_id) const { return symmetric_predicates.count(predicate_id) > 0; }

  /// True for classes that become scene-graph object nodes.
  bool is_object_class(int class_id) const {
    return !is_landmark(class_id) && !is_background(class_id);
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> problems;
    std::set<std::string> seen;
    for (const auto& c : classes) {
      if (!seen.insert(c).second) problems.push_back("duplicate class name: " + c);
    }
    seen.clear();
    for (const auto& p : predicates) {
      if (!seen.insert(p).second) problems.push_back("duplicate predicate name: " + p);
    }
    auto check_subset = [&](const std::set<int>& s, int bound, const char* what) {
      for (int id : s) {
        if (id < 0 || id >= bound) {
          problems.push_back(std::string(what) + " set references unknown id " +
                             std::to_string(id));
        }
      }
    };
    check_subset(large_classes, num_classes(), "large-object");
    check_subset(landmark_classes, num_classes(), "landmark");
    check_subset(background_classes, num_classes(), "background");
    check_subset(symmetric_predicates, num_predicates(), "symmetric-predicate");
    return problems;
  }
};

}  // namespace sgfuse
