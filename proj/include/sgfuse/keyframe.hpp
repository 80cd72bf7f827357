#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sgfuse/geometry.hpp"
#include "sgfuse/vocabulary.hpp"

namespace sgfuse {

/// Per-pixel panoptic result: instance id per pixel (0 = unlabeled) plus a
/// table mapping each instance id to its class and confidence.
struct PanopticImage {
  struct InstanceInfo {
    int class_id = -1;
    double confidence = 1.0;
  };

  int width = 0;
  int height = 0;
  std::vector<uint16_t> instance_map;  // row-major
  std::map<int, InstanceInfo> instance_table;

  uint16_t at(int row, int col) const {
    return instance_map[static_cast<std::size_t>(row) * width + col];
  }

  int pixel_count(int instance_id) const {
    int n = 0;
    for (uint16_t v : instance_map) {
      if (v == instance_id) ++n;
    }
    return n;
  }
};

/// One observed relation between two 2D instances of the same frame.
struct RelationObservation {
  int subject = 0;    // instance id
  int object = 0;     // instance id
  int predicate = 0;  // predicate id
  double confidence = 1.0;
};

/// One pose-stamped observation bundle.
struct KeyframeRecord {
  int index = 0;
  double timestamp = 0.0;
  Pose pose;         // platform in world
  PointCloud cloud;  // platform frame
  PanopticImage panoptic;
  std::vector<RelationObservation> relations;
};

/// Loop-closure effect: replacement poses for keyframes at or before trigger.
struct PoseCorrectionEvent {
  int trigger = 0;
  std::map<int, Pose> corrections;  // keyframe index -> corrected pose
};

inline std::vector<std::string> validate_record(const KeyframeRecord& rec,
                                                const Vocabulary& vocab) {
  std::vector<std::string> problems;
  const auto tag = [&](const std::string& msg) {
    problems.push_back("keyframe " + std::to_string(rec.index) + ": " + msg);
  };

  const auto& pan = rec.panoptic;
  if (pan.width <= 0 || pan.height <= 0 ||
      pan.instance_map.size() != static_cast<std::size_t>(pan.width) * pan.height) {
    tag("panoptic image dimensions inconsistent with pixel buffer");
    return problems;
  }

  std::set<int> seen_ids;
  for (uint16_t id : pan.instance_map) {
    if (id != 0) seen_ids.insert(id);
  }
  for (int id : seen_ids) {
    if (!pan.instance_table.count(id)) {
      tag("pixel instance id " + std::to_string(id) + " missing from instance table");
    }
  }
  for (const auto& [id, info] : pan.instance_table) {
    if (info.class_id < 0 || info.class_id >= vocab.num_classes()) {
      tag("instance " + std::to_string(id) + " has unknown class id " +
          std::to_string(info.class_id));
    }
    if (!(info.confidence >= 0.0 && info.confidence <= 1.0)) {
      tag("instance " + std::to_string(id) + " confidence outside [0,1]");
    }
  }

  for (const auto& rel : rec.relations) {
    if (rel.subject == rel.object) {
      tag("relation with identical subject and object " + std::to_string(rel.subject));
    }
    if (rel.predicate < 0 || rel.predicate >= vocab.num_predicates()) {
      tag("relation predicate id " + std::to_string(rel.predicate) + " out of vocabulary");
    }
    if (!pan.instance_table.count(rel.subject) || !pan.instance_table.count(rel.object)) {
      tag("relation references instance absent from this frame");
    }
    if (!(rel.confidence >= 0.0 && rel.confidence <= 1.0)) {
      tag("relation confidence outside [0,1]");
    }
  }

  for (const Vec3& p : rec.cloud.points) {
    if (!p.allFinite()) {
      tag("non-finite point coordinates");
      break;
    }
  }
  if (rec.cloud.has_pixels()) {
    if (rec.cloud.pixels.size() != rec.cloud.points.size()) {
      tag("pixel index list length differs from point count");
    } else {
      for (const PixelRC& px : rec.cloud.pixels) {
        if (px.row < 0 || px.row >= pan.height || px.col < 0 || px.col >= pan.width) {
          tag("point pixel index outside image bounds");
          break;
        }
      }
    }
  }
  return problems;
}

}  // namespace sgfuse
