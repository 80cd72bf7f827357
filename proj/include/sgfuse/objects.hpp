#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sgfuse/geometry.hpp"
#include "sgfuse/keyframe.hpp"
#include "sgfuse/voxel_map.hpp"
#include "sgfuse/vocabulary.hpp"

namespace sgfuse {

/// Connected component of same-label voxels.
struct ObjectNode {
  int id = 0;
  int class_id = -1;
  bool large = false;
  std::vector<VoxelKey> voxels;  // sorted
  Vec3 centroid = Vec3::Zero();  // mean of voxel centers
  Vec3 aabb_min = Vec3::Zero();
  Vec3 aabb_max = Vec3::Zero();
  std::set<int> keyframes;  // contributing keyframes
  int region = 0;           // 0 = unassigned
};

struct ChangeList {
  std::vector<int> created;
  std::vector<int> updated;
  std::vector<int> removed;

  bool empty() const { return created.empty() && updated.empty() && removed.empty(); }
};

/// Assigns ids to new components from old ones: a new component inherits an
/// old id when it is the only claimant covering >= half of that old
/// component's members, and it covers no other old component that far.
/// Shared by object clustering and region partitioning.
///
/// `overlap[i][j]` = shared member count between new component i and old
/// component j; `old_sizes[j]` = old component j's member count.
/// Returns per-new-component old index, or -1 for a fresh id.
inline std::vector<int> inherit_ids(const std::vector<std::map<int, int>>& overlap,
                                    const std::vector<int>& old_sizes) {
  const int n_new = static_cast<int>(overlap.size());
  std::vector<int> claim(n_new, -1);
  // candidate old components per new component (>= 50% of the old's members)
  std::vector<std::vector<int>> cands(n_new);
  for (int i = 0; i < n_new; ++i) {
    for (const auto& [j, shared] : overlap[i]) {
      if (2 * shared >= old_sizes[j]) cands[i].push_back(j);
    }
  }
  // best claimant per old component: larger overlap wins, then lower index
  std::map<int, int> winner;
  for (int i = 0; i < n_new; ++i) {
    if (cands[i].size() != 1) continue;
    const int j = cands[i].front();
    auto it = winner.find(j);
    if (it == winner.end() || overlap[i].at(j) > overlap[it->second].at(j)) {
      winner[j] = i;
    }
  }
  for (const auto& [j, i] : winner) claim[i] = j;
  return claim;
}

/// Maintains the object set over the voxel map: connected components of
/// same-label voxels under a Chebyshev-radius neighborhood, with stable ids.
class ObjectExtractor {
 public:
  ObjectExtractor(const Vocabulary* vocab, double voxel_size, int cluster_radius = 1,
                  int min_cluster_size = 5)
      : vocab_(vocab),
        voxel_size_(voxel_size),
        cluster_radius_(cluster_radius),
        min_cluster_size_(min_cluster_size) {}

  const std::map<int, ObjectNode>& objects() const { return objects_; }
  const std::unordered_map<VoxelKey, int, VoxelKeyHash>& voxel_owner() const {
    return voxel_owner_;
  }
  int min_cluster_size() const { return min_cluster_size_; }

  const ObjectNode* object(int id) const {
    auto it = objects_.find(id);
    return it == objects_.end() ? nullptr : &it->second;
  }

  void set_region(int id, int region) {
    auto it = objects_.find(id);
    if (it != objects_.end()) it->second.region = region;
  }

  /// Recomputes connected components for the classes touched by `dirty`
  /// (all classes when null). Existing ids survive via the 50%-overlap rule.
  ChangeList recluster(const SemanticVoxelMap& map,
                       const std::vector<VoxelKey>* dirty = nullptr) {
    std::set<int> classes;
    if (dirty == nullptr) {
      map.for_each_cell([&](const VoxelKey&, const SemanticVoxelMap::Cell& cell) {
        classes.insert(cell.label);
      });
      for (const auto& [id, node] : objects_) classes.insert(node.class_id);
    } else {
      for (const VoxelKey& key : *dirty) {
        if (const auto* cell = map.cell(key)) classes.insert(cell->label);
        auto it = voxel_owner_.find(key);
        if (it != voxel_owner_.end()) classes.insert(objects_.at(it->second).class_id);
      }
    }

    ChangeList changes;
    for (int class_id : classes) {
      recluster_class(map, class_id, changes);
    }
    std::sort(changes.created.begin(), changes.created.end());
    std::sort(changes.updated.begin(), changes.updated.end());
    std::sort(changes.removed.begin(), changes.removed.end());
    return changes;
  }

 private:
  void recluster_class(const SemanticVoxelMap& map, int class_id, ChangeList& changes) {
    // collect this class's voxels in deterministic order
    std::vector<VoxelKey> keys;
    map.for_each_cell([&](const VoxelKey& key, const SemanticVoxelMap::Cell& cell) {
      if (cell.label == class_id) keys.push_back(key);
    });
    std::sort(keys.begin(), keys.end());

    std::unordered_set<VoxelKey, VoxelKeyHash> pending(keys.begin(), keys.end());
    std::vector<std::vector<VoxelKey>> components;
    const int r = cluster_radius_;
    for (const VoxelKey& seed : keys) {
      if (!pending.count(seed)) continue;
      std::vector<VoxelKey> comp;
      std::vector<VoxelKey> stack{seed};
      pending.erase(seed);
      while (!stack.empty()) {
        const VoxelKey k = stack.back();
        stack.pop_back();
        comp.push_back(k);
        for (int dx = -r; dx <= r; ++dx) {
          for (int dy = -r; dy <= r; ++dy) {
            for (int dz = -r; dz <= r; ++dz) {
              if (dx == 0 && dy == 0 && dz == 0) continue;
              const VoxelKey nb{k.ix + dx, k.iy + dy, k.iz + dz};
              auto it = pending.find(nb);
              if (it != pending.end()) {
                pending.erase(it);
                stack.push_back(nb);
              }
            }
          }
        }
      }
      if (static_cast<int>(comp.size()) >= min_cluster_size_) {
        std::sort(comp.begin(), comp.end());
        components.push_back(std::move(comp));
      }
    }
    // components in deterministic order (by smallest member key)
    std::sort(components.begin(), components.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    // old components of this class
    std::vector<int> old_ids;
    for (const auto& [id, node] : objects_) {
      if (node.class_id == class_id) old_ids.push_back(id);
    }
    std::vector<int> old_sizes;
    std::unordered_map<VoxelKey, int, VoxelKeyHash> old_member;  // key -> old index
    for (std::size_t j = 0; j < old_ids.size(); ++j) {
      const auto& node = objects_.at(old_ids[j]);
      old_sizes.push_back(static_cast<int>(node.voxels.size()));
      for (const VoxelKey& k : node.voxels) old_member[k] = static_cast<int>(j);
    }

    std::vector<std::map<int, int>> overlap(components.size());
    for (std::size_t i = 0; i < components.size(); ++i) {
      for (const VoxelKey& k : components[i]) {
        auto it = old_member.find(k);
        if (it != old_member.end()) ++overlap[i][it->second];
      }
    }
    const std::vector<int> claim = inherit_ids(overlap, old_sizes);

    std::set<int> surviving;
    for (std::size_t i = 0; i < components.size(); ++i) {
      int id;
      if (claim[i] >= 0) {
        id = old_ids[claim[i]];
        changes.updated.push_back(id);
      } else {
        id = next_id_++;
        changes.created.push_back(id);
      }
      surviving.insert(id);
      rebuild_node(map, id, class_id, std::move(components[i]));
    }
    for (int id : old_ids) {
      if (!surviving.count(id)) {
        for (const VoxelKey& k : objects_.at(id).voxels) {
          auto it = voxel_owner_.find(k);
          if (it != voxel_owner_.end() && it->second == id) voxel_owner_.erase(it);
        }
        objects_.erase(id);
        changes.removed.push_back(id);
      }
    }
  }

  void rebuild_node(const SemanticVoxelMap& map, int id, int class_id,
                    std::vector<VoxelKey> voxels) {
    auto prev = objects_.find(id);
    if (prev != objects_.end()) {
      for (const VoxelKey& k : prev->second.voxels) {
        auto it = voxel_owner_.find(k);
        if (it != voxel_owner_.end() && it->second == id) voxel_owner_.erase(it);
      }
    }
    ObjectNode node;
    node.id = id;
    node.class_id = class_id;
    node.large = vocab_ && vocab_->is_large(class_id);
    if (prev != objects_.end()) node.region = prev->second.region;

    const double vs = voxel_size_;
    Vec3 sum = Vec3::Zero();
    node.aabb_min = Vec3(1e300, 1e300, 1e300);
    node.aabb_max = Vec3(-1e300, -1e300, -1e300);
    for (const VoxelKey& k : voxels) {
      sum += voxel_center(k, vs);
      node.aabb_min = node.aabb_min.cwiseMin(Vec3(k.ix * vs, k.iy * vs, k.iz * vs));
      node.aabb_max =
          node.aabb_max.cwiseMax(Vec3((k.ix + 1) * vs, (k.iy + 1) * vs, (k.iz + 1) * vs));
      if (const auto* cell = map.cell(k)) {
        for (const auto& c : cell->contributors) node.keyframes.insert(c.keyframe);
      }
      voxel_owner_[k] = id;
    }
    node.centroid = sum / static_cast<double>(voxels.size());
    node.voxels = std::move(voxels);
    objects_[id] = std::move(node);
  }

  const Vocabulary* vocab_;
  double voxel_size_;
  int cluster_radius_;
  int min_cluster_size_;
  int next_id_ = 1;
  std::map<int, ObjectNode> objects_;
  std::unordered_map<VoxelKey, int, VoxelKeyHash> voxel_owner_;
};

/// Replays corrected keyframes: retract, re-register the cached labeled
/// points under the corrected pose, re-integrate, then recluster the voxels
/// touched on either side. Corrections matching the currently integrated
/// pose are skipped, so repeating an applied event is a no-op.
struct CorrectionOutcome {
  ChangeList changes;
  int keyframes_replayed = 0;
  std::vector<VoxelKey> touched;
};

inline CorrectionOutcome apply_correction(
    SemanticVoxelMap& map, ObjectExtractor& extractor, const PoseCorrectionEvent& event,
    std::map<int, Pose>& integrated_poses,
    const std::function<const std::vector<LabeledPoint>*(int)>& labeled_points_of) {
  CorrectionOutcome outcome;
  for (const auto& [kf, corrected] : event.corrections) {
    auto pose_it = integrated_poses.find(kf);
    if (pose_it == integrated_poses.end()) {
      throw std::runtime_error("correction references keyframe " + std::to_string(kf) +
                               " that was never integrated");
    }
    if (pose_it->second.equals_exact(corrected)) continue;

    const std::vector<LabeledPoint>* platform_points = labeled_points_of(kf);
    if (!platform_points) {
      throw std::runtime_error("no cached labeled points for keyframe " + std::to_string(kf));
    }
    auto removed = map.retract(kf);
    outcome.touched.insert(outcome.touched.end(), removed.touched.begin(),
                           removed.touched.end());
    auto added = map.integrate(to_world(*platform_points, corrected), kf);
    outcome.touched.insert(outcome.touched.end(), added.touched.begin(), added.touched.end());
    pose_it->second = corrected;
    ++outcome.keyframes_replayed;
  }
  if (outcome.keyframes_replayed > 0) {
    outcome.changes = extractor.recluster(map, &outcome.touched);
  }
  return outcome;
}

/// Baseline estimator: mean of the world-frame points of one instance in one
/// frame (the single-image localization reference).
inline Vec3 centroid_single_frame(const KeyframeRecord& rec, int instance_id,
                                  const CameraModel& cam) {
  LabelCloudStats stats;
  const auto labeled = label_points_platform(rec, cam, &stats);
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (const auto& lp : labeled) {
    if (lp.instance_id == instance_id) {
      sum += rec.pose.apply(lp.p);
      ++n;
    }
  }
  if (n == 0) {
    throw std::runtime_error("instance " + std::to_string(instance_id) +
                             " has no labeled points in keyframe " + std::to_string(rec.index));
  }
  return sum / static_cast<double>(n);
}

}  // namespace sgfuse
