#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sgfuse/geometry.hpp"
#include "sgfuse/keyframe.hpp"
#include "sgfuse/vocabulary.hpp"

namespace sgfuse {

struct VoxelKey {
  int32_t ix = 0;
  int32_t iy = 0;
  int32_t iz = 0;

  auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    uint64_t h = static_cast<uint32_t>(k.ix);
    h = h * 0x9e3779b97f4a7c15ULL + static_cast<uint32_t>(k.iy);
    h = h * 0x9e3779b97f4a7c15ULL + static_cast<uint32_t>(k.iz);
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(h ^ (h >> 32));
  }
};

inline VoxelKey voxel_key_of(const Vec3& p, double voxel_size) {
  return VoxelKey{static_cast<int32_t>(std::floor(p.x() / voxel_size)),
                  static_cast<int32_t>(std::floor(p.y() / voxel_size)),
                  static_cast<int32_t>(std::floor(p.z() / voxel_size))};
}

inline Vec3 voxel_center(const VoxelKey& k, double voxel_size) {
  return Vec3((k.ix + 0.5) * voxel_size, (k.iy + 0.5) * voxel_size, (k.iz + 0.5) * voxel_size);
}

/// World-frame labeled points of one keyframe.
struct LabeledPoint {
  Vec3 p;
  int class_id = -1;
  int instance_id = 0;
};

struct SemanticCloud {
  std::vector<LabeledPoint> points;
};

struct LabelCloudStats {
  int total = 0;
  int labeled = 0;
  int dropped_unlabeled = 0;  // pixel exists but carries no instance
  int dropped_outside = 0;    // behind camera or outside the image
};

/// Labels each cloud point with the panoptic instance covering its pixel.
/// Output stays in the platform frame; label assignment does not depend on
/// the platform pose, which is what makes loop-closure replay cheap.
inline std::vector<LabeledPoint> label_points_platform(const KeyframeRecord& rec,
                                                       const CameraModel& cam,
                                                       LabelCloudStats* stats = nullptr) {
  LabelCloudStats local;
  local.total = static_cast<int>(rec.cloud.points.size());
  std::vector<LabeledPoint> out;
  out.reserve(rec.cloud.points.size());

  const Pose cam_from_platform = cam.extrinsic.inverse();
  for (std::size_t i = 0; i < rec.cloud.points.size(); ++i) {
    const Vec3& p = rec.cloud.points[i];
    PixelRC px;
    if (rec.cloud.has_pixels()) {
      px = rec.cloud.pixels[i];
    } else {
      const auto uv = project(cam_from_platform.apply(p), cam);
      if (!uv) {
        ++local.dropped_outside;
        continue;
      }
      px = *nearest_pixel(uv->x(), uv->y(), cam);
    }
    const uint16_t instance = rec.panoptic.at(px.row, px.col);
    if (instance == 0) {
      ++local.dropped_unlabeled;
      continue;
    }
    const auto it = rec.panoptic.instance_table.find(instance);
    if (it == rec.panoptic.instance_table.end()) {
      ++local.dropped_unlabeled;
      continue;
    }
    out.push_back({p, it->second.class_id, instance});
  }
  local.labeled = static_cast<int>(out.size());
  if (stats) *stats = local;
  return out;
}

inline SemanticCloud to_world(const std::vector<LabeledPoint>& platform_points,
                              const Pose& pose) {
  SemanticCloud sc;
  sc.points.reserve(platform_points.size());
  for (const auto& lp : platform_points) {
    sc.points.push_back({pose.apply(lp.p), lp.class_id, lp.instance_id});
  }
  return sc;
}

/// World-frame semantically labeled cloud of one keyframe.
inline SemanticCloud label_cloud(const KeyframeRecord& rec, const CameraModel& cam,
                                 LabelCloudStats* stats = nullptr) {
  return to_world(label_points_platform(rec, cam, stats), rec.pose);
}

/// Sparse semantic voxel grid with per-voxel class evidence and keyframe
/// provenance. Evidence is stored as integer observation counts per class;
/// the categorical log-weight of class c is count(c) * log_ratio(), with the
/// symmetric-confusion ratio log(p_hit) - log((1-p_hit)/(K-1)). Integer
/// storage makes retraction bit-exact and integration order-independent.
class SemanticVoxelMap {
 public:
  struct Contribution {
    int keyframe = -1;
    int class_id = -1;
    int count = 0;

    auto operator<=>(const Contribution&) const = default;
  };

  struct Cell {
    std::map<int, int> counts;               // class id -> accumulated observations
    std::vector<Contribution> contributors;  // sorted by (keyframe, class)
    int label = -1;
    int last_update_kf = -1;

    bool operator==(const Cell&) const = default;
  };

  struct UpdateSummary {
    int voxels_touched = 0;
    int voxels_relabeled = 0;
    std::vector<VoxelKey> touched;
  };

  SemanticVoxelMap(double voxel_size, int num_classes, double p_hit = 0.9, int c_max = 5)
      : voxel_size_(voxel_size), num_classes_(num_classes), p_hit_(p_hit), c_max_(c_max) {
    if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel_size must be positive");
    if (!(p_hit > 0.0 && p_hit < 1.0)) throw std::invalid_argument("p_hit must be in (0,1)");
    if (num_classes < 2) throw std::invalid_argument("need at least two classes");
  }

  double voxel_size() const { return voxel_size_; }
  int num_classes() const { return num_classes_; }
  std::size_t size() const { return cells_.size(); }
  bool has_keyframe(int kf) const { return kf_voxels_.count(kf) > 0; }

  /// Per-observation log-evidence increment.
  double log_ratio() const {
    return std::log(p_hit_) - std::log((1.0 - p_hit_) / (num_classes_ - 1));
  }

  UpdateSummary integrate(const SemanticCloud& sc, int kf) {
    if (has_keyframe(kf)) {
      throw std::runtime_error("keyframe " + std::to_string(kf) + " already integrated");
    }
    // Raw hits per (voxel, class), saturated at c_max per keyframe.
    std::map<VoxelKey, std::map<int, int>> hits;
    for (const auto& lp : sc.points) {
      ++hits[voxel_key_of(lp.p, voxel_size_)][lp.class_id];
    }

    UpdateSummary summary;
    auto& kf_keys = kf_voxels_[kf];
    for (const auto& [key, class_hits] : hits) {
      Cell& cell = cells_[key];
      const int old_label = cell.label;
      for (const auto& [class_id, n] : class_hits) {
        const int count = std::min(n, c_max_);
        cell.counts[class_id] += count;
        insert_contribution(cell, {kf, class_id, count});
      }
      cell.last_update_kf = std::max(cell.last_update_kf, kf);
      relabel(cell);
      ++summary.voxels_touched;
      if (cell.label != old_label) ++summary.voxels_relabeled;
      summary.touched.push_back(key);
      kf_keys.push_back(key);
    }
    return summary;
  }

  UpdateSummary retract(int kf) {
    auto it = kf_voxels_.find(kf);
    if (it == kf_voxels_.end()) {
      throw std::runtime_error("keyframe " + std::to_string(kf) + " was never integrated");
    }
    UpdateSummary summary;
    for (const VoxelKey& key : it->second) {
      auto cit = cells_.find(key);
      if (cit == cells_.end()) continue;  // already erased via this keyframe's list
      Cell& cell = cit->second;
      const int old_label = cell.label;
      bool changed = false;
      for (auto c = cell.contributors.begin(); c != cell.contributors.end();) {
        if (c->keyframe == kf) {
          auto cnt = cell.counts.find(c->class_id);
          cnt->second -= c->count;
          if (cnt->second == 0) cell.counts.erase(cnt);
          c = cell.contributors.erase(c);
          changed = true;
        } else {
          ++c;
        }
      }
      if (!changed) continue;
      ++summary.voxels_touched;
      summary.touched.push_back(key);
      if (cell.contributors.empty()) {
        cells_.erase(cit);
        if (old_label != -1) ++summary.voxels_relabeled;
        continue;
      }
      cell.last_update_kf = 0;
      for (const auto& c : cell.contributors) {
        cell.last_update_kf = std::max(cell.last_update_kf, c.keyframe);
      }
      relabel(cell);
      if (cell.label != old_label) ++summary.voxels_relabeled;
    }
    kf_voxels_.erase(it);
    return summary;
  }

  const Cell* cell(const VoxelKey& key) const {
    auto it = cells_.find(key);
    return it == cells_.end() ? nullptr : &it->second;
  }

  /// Normalized class posterior of a voxel under the symmetric-confusion
  /// model with a uniform prior.
  std::vector<double> posterior(const VoxelKey& key) const {
    const Cell* c = cell(key);
    std::vector<double> evidence(num_classes_, 0.0);
    if (c) {
      for (const auto& [class_id, count] : c->counts) {
        evidence[class_id] = count * log_ratio();
      }
    }
    const double peak = *std::max_element(evidence.begin(), evidence.end());
    double total = 0.0;
    for (double& e : evidence) {
      e = std::exp(e - peak);
      total += e;
    }
    for (double& e : evidence) e /= total;
    return evidence;
  }

  struct QueryFilter {
    int class_id = -1;  // -1 matches any class
    bool has_bounds = false;
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();
  };

  /// Voxels satisfying the filter, in lexicographic key order.
  std::vector<std::pair<VoxelKey, int>> query_voxels(const QueryFilter& filter) const {
    std::vector<std::pair<VoxelKey, int>> out;
    for (const auto& [key, cell] : cells_) {
      if (filter.class_id >= 0 && cell.label != filter.class_id) continue;
      if (filter.has_bounds) {
        const Vec3 c = voxel_center(key, voxel_size_);
        if (c.x() < filter.min.x() || c.x() > filter.max.x() || c.y() < filter.min.y() ||
            c.y() > filter.max.y() || c.z() < filter.min.z() || c.z() > filter.max.z()) {
          continue;
        }
      }
      out.emplace_back(key, cell.label);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Visits every cell (unordered); used by clustering and region partition.
  template <typename Fn>
  void for_each_cell(Fn&& fn) const {
    for (const auto& [key, cell] : cells_) fn(key, cell);
  }

  bool operator==(const SemanticVoxelMap& o) const {
    return voxel_size_ == o.voxel_size_ && num_classes_ == o.num_classes_ &&
           p_hit_ == o.p_hit_ && c_max_ == o.c_max_ && cells_ == o.cells_;
  }

  /// Debug dump used by the test suite.
  void dump_json(const std::string& path) const {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& [key, cell] : sorted_cells()) {
      nlohmann::ordered_json entry;
      entry["key"] = {key.ix, key.iy, key.iz};
      entry["label"] = cell->label;
      nlohmann::ordered_json ev;
      for (const auto& [class_id, count] : cell->counts) {
        ev[std::to_string(class_id)] = count * log_ratio();
      }
      entry["evidence"] = ev;
      doc.push_back(entry);
    }
    std::ofstream out(path);
    out << doc.dump(2) << '\n';
  }

 private:
  std::vector<std::pair<VoxelKey, const Cell*>> sorted_cells() const {
    std::vector<std::pair<VoxelKey, const Cell*>> out;
    out.reserve(cells_.size());
    for (const auto& [key, cell] : cells_) out.emplace_back(key, &cell);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  static void insert_contribution(Cell& cell, const Contribution& c) {
    auto pos = std::lower_bound(cell.contributors.begin(), cell.contributors.end(), c);
    cell.contributors.insert(pos, c);
  }

  // Label = argmax of evidence; ties broken by the most recent contributing
  // keyframe of the tied classes, then by lower class id.
  void relabel(Cell& cell) const {
    int best_class = -1;
    int best_count = -1;
    int best_recency = -1;
    for (const auto& [class_id, count] : cell.counts) {
      int recency = -1;
      for (const auto& c : cell.contributors) {
        if (c.class_id == class_id) recency = std::max(recency, c.keyframe);
      }
      if (count > best_count || (count == best_count && recency > best_recency)) {
        best_class = class_id;
        best_count = count;
        best_recency = recency;
      }
      // equal count and recency: keep lower class id (map iterates ascending)
    }
    cell.label = best_class;
  }

  double voxel_size_;
  int num_classes_;
  double p_hit_;
  int c_max_;
  std::unordered_map<VoxelKey, Cell, VoxelKeyHash> cells_;
  std::unordered_map<int, std::vector<VoxelKey>> kf_voxels_;
};

}  // namespace sgfuse
