#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sgfuse/geometry.hpp"
#include "sgfuse/keyframe.hpp"
#include "sgfuse/objects.hpp"
#include "sgfuse/voxel_map.hpp"
#include "sgfuse/vocabulary.hpp"

namespace sgfuse {

/// XY grid cell of the region occupancy grid.
struct CellXY {
  int32_t ix = 0;
  int32_t iy = 0;
  auto operator<=>(const CellXY&) const = default;
};

struct CellXYHash {
  std::size_t operator()(const CellXY& c) const {
    uint64_t h = static_cast<uint32_t>(c.ix);
    h = h * 0x9e3779b97f4a7c15ULL + static_cast<uint32_t>(c.iy);
    h ^= h >> 31;
    return static_cast<std::size_t>(h * 0xbf58476d1ce4e5b9ULL);
  }
};

struct RegionNode {
  int id = 0;
  std::vector<CellXY> cells;  // sorted
  std::set<int> landmarks;    // separator objects bordering this region
  // axis-aligned bounds polygon in world XY (counter-clockwise)
  std::array<Vec2, 4> polygon{};
};

/// 2D instance resolved against the 3D object set.
struct LiftedGraph {
  struct InstanceMatch {
    int instance_id = 0;
    int object_id = -1;  // -1 when unresolved
    int observed_class = -1;
    int fused_class = -1;
    int point_count = 0;
    double overlap = 0.0;
    bool corrected = false;
  };
  std::vector<InstanceMatch> instances;
  std::vector<RelationObservation> relations;  // endpoints resolved to object ids
};

struct LiftReport {
  int matched = 0;
  int corrected = 0;
  int unresolved = 0;
  int relations_resolved = 0;
  int relations_dropped = 0;
};

/// Resolves each 2D instance to the object owning the plurality of the voxels
/// its labeled points fall into; the fused class overrides a conflicting 2D
/// label. Instances below the overlap floor stay unresolved.
inline LiftedGraph lift(const KeyframeRecord& rec, const SemanticCloud& sc,
                        const ObjectExtractor& extractor, double voxel_size, double f_min,
                        LiftReport* report = nullptr) {
  LiftedGraph lifted;
  LiftReport rep;

  std::map<int, std::map<int, int>> votes_by_instance;  // instance -> object -> points
  std::map<int, int> points_by_instance;
  const auto& owner = extractor.voxel_owner();
  for (const auto& lp : sc.points) {
    ++points_by_instance[lp.instance_id];
    auto it = owner.find(voxel_key_of(lp.p, voxel_size));
    if (it != owner.end()) ++votes_by_instance[lp.instance_id][it->second];
  }

  std::map<int, int> instance_to_object;
  for (const auto& [instance_id, info] : rec.panoptic.instance_table) {
    LiftedGraph::InstanceMatch m;
    m.instance_id = instance_id;
    m.observed_class = info.class_id;
    m.point_count = points_by_instance.count(instance_id) ? points_by_instance[instance_id] : 0;

    int best_object = -1;
    int best_votes = 0;
    if (auto vit = votes_by_instance.find(instance_id); vit != votes_by_instance.end()) {
      for (const auto& [object_id, n] : vit->second) {
        if (n > best_votes) {  // ties keep the lower object id (map order)
          best_votes = n;
          best_object = object_id;
        }
      }
    }
    if (best_object >= 0 && m.point_count > 0) {
      m.overlap = static_cast<double>(best_votes) / m.point_count;
    }
    if (best_object >= 0 && m.overlap >= f_min) {
      m.object_id = best_object;
      m.fused_class = extractor.objects().at(best_object).class_id;
      m.corrected = (m.fused_class != m.observed_class);
      instance_to_object[instance_id] = best_object;
      ++rep.matched;
      if (m.corrected) ++rep.corrected;
    } else {
      ++rep.unresolved;
    }
    lifted.instances.push_back(m);
  }

  for (const auto& rel : rec.relations) {
    auto s = instance_to_object.find(rel.subject);
    auto o = instance_to_object.find(rel.object);
    if (s == instance_to_object.end() || o == instance_to_object.end() ||
        s->second == o->second) {
      ++rep.relations_dropped;
      continue;
    }
    lifted.relations.push_back({s->second, o->second, rel.predicate, rel.confidence});
    ++rep.relations_resolved;
  }

  if (report) *report = rep;
  return lifted;
}

/// Layered global scene graph: one site, regions partitioned by landmark
/// separators, object nodes mirroring the extractor's non-landmark
/// non-background clusters, and voted relation edges between objects.
class SceneGraph {
 public:
  struct ObjectEntry {
    int class_id = -1;
    bool large = false;
    Vec3 centroid = Vec3::Zero();
    Vec3 aabb_min = Vec3::Zero();
    Vec3 aabb_max = Vec3::Zero();
    int region = 0;
  };

  struct PairKey {
    int subject = 0;
    int object = 0;
    auto operator<=>(const PairKey&) const = default;
  };

  struct EdgeTally {
    std::map<int, int> votes;        // predicate -> vote count
    std::map<int, double> weights;   // predicate -> confidence sum
    int last_seen_kf = -1;
    int accepted = -1;               // accepted predicate, -1 = none
  };

  SceneGraph(std::string site_name, const Vocabulary* vocab, int v_min)
      : site_name_(std::move(site_name)), vocab_(vocab), v_min_(v_min) {}

  const std::string& site_name() const { return site_name_; }
  const std::map<int, ObjectEntry>& nodes() const { return nodes_; }
  const std::map<PairKey, EdgeTally>& edges() const { return edges_; }
  const std::map<int, RegionNode>& regions() const { return regions_; }
  int edges_dropped() const { return edges_dropped_; }

  int accepted_edge_count() const {
    int n = 0;
    for (const auto& [key, tally] : edges_) {
      if (tally.accepted >= 0) ++n;
    }
    return n;
  }

  /// Mirrors the extractor's object set into the graph's object layer.
  /// Landmark- and background-class clusters stay out; removed ids drop
  /// their relation tallies.
  void sync_objects(const ObjectExtractor& extractor) {
    std::set<int> live;
    for (const auto& [id, node] : extractor.objects()) {
      if (!vocab_->is_object_class(node.class_id)) continue;
      live.insert(id);
      ObjectEntry& e = nodes_[id];
      e.class_id = node.class_id;
      e.large = node.large;
      e.centroid = node.centroid;
      e.aabb_min = node.aabb_min;
      e.aabb_max = node.aabb_max;
      e.region = node.region;
    }
    for (auto it = nodes_.begin(); it != nodes_.end();) {
      if (!live.count(it->first)) {
        drop_edges_of(it->first);
        it = nodes_.erase(it);
      } else {
        ++it;
      }
    }
  }

  struct MergeSummary {
    int observations = 0;
    int skipped = 0;
    int accepted_changed = 0;
  };

  /// Adds one keyframe's resolved relation observations to the pair tallies
  /// and recomputes acceptance (strict plurality with a vote floor).
  MergeSummary merge(const LiftedGraph& lifted, int kf) {
    MergeSummary s;
    for (const auto& rel : lifted.relations) {
      if (!nodes_.count(rel.subject) || !nodes_.count(rel.object)) {
        ++s.skipped;  // endpoint is not an object-layer node
        continue;
      }
      PairKey key{rel.subject, rel.object};
      if (vocab_->is_symmetric(rel.predicate) && key.subject > key.object) {
        std::swap(key.subject, key.object);
      }
      EdgeTally& tally = edges_[key];
      tally.votes[rel.predicate] += 1;
      tally.weights[rel.predicate] += rel.confidence;
      tally.last_seen_kf = kf;
      const int before = tally.accepted;
      recompute_accepted(tally);
      if (tally.accepted != before) ++s.accepted_changed;
      ++s.observations;
    }
    return s;
  }

  struct PartitionResult {
    int region_count = 0;
    std::vector<std::pair<int, int>> reassigned;  // (object id, new region)
  };

  /// Rebuilds the region layer: occupancy over explored XY cells, landmark
  /// object footprints as separators, 4-connected flood fill, stable region
  /// ids via the shared overlap rule. Objects are assigned by centroid cell,
  /// falling back to the nearest region cell.
  PartitionResult partition_regions(const SemanticVoxelMap& map, ObjectExtractor& extractor) {
    const double vs = map.voxel_size();

    std::unordered_set<CellXY, CellXYHash> explored;
    map.for_each_cell([&](const VoxelKey& key, const SemanticVoxelMap::Cell&) {
      explored.insert(CellXY{key.ix, key.iy});
    });

    std::unordered_map<CellXY, int, CellXYHash> separator;  // cell -> landmark object id
    for (const auto& [id, node] : extractor.objects()) {
      if (!vocab_->is_landmark(node.class_id)) continue;
      for (const VoxelKey& k : node.voxels) separator[CellXY{k.ix, k.iy}] = id;
    }

    // flood fill explored, non-separator cells (4-connectivity)
    std::vector<CellXY> domain;
    for (const CellXY& c : explored) {
      if (!separator.count(c)) domain.push_back(c);
    }
    std::sort(domain.begin(), domain.end());
    std::unordered_set<CellXY, CellXYHash> pending(domain.begin(), domain.end());
    std::vector<std::vector<CellXY>> components;
    for (const CellXY& seed : domain) {
      if (!pending.count(seed)) continue;
      std::vector<CellXY> comp;
      std::vector<CellXY> stack{seed};
      pending.erase(seed);
      while (!stack.empty()) {
        const CellXY c = stack.back();
        stack.pop_back();
        comp.push_back(c);
        const CellXY nbs[4] = {{c.ix + 1, c.iy}, {c.ix - 1, c.iy}, {c.ix, c.iy + 1},
                               {c.ix, c.iy - 1}};
        for (const CellXY& nb : nbs) {
          auto it = pending.find(nb);
          if (it != pending.end()) {
            pending.erase(it);
            stack.push_back(nb);
          }
        }
      }
      std::sort(comp.begin(), comp.end());
      components.push_back(std::move(comp));
    }
    std::sort(components.begin(), components.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });

    // stable ids via shared inheritance rule
    std::vector<int> old_ids;
    std::vector<int> old_sizes;
    std::unordered_map<CellXY, int, CellXYHash> old_member;
    for (const auto& [id, region] : regions_) {
      old_ids.push_back(id);
      old_sizes.push_back(static_cast<int>(region.cells.size()));
      for (const CellXY& c : region.cells) old_member[c] = static_cast<int>(old_ids.size()) - 1;
    }
    std::vector<std::map<int, int>> overlap(components.size());
    for (std::size_t i = 0; i < components.size(); ++i) {
      for (const CellXY& c : components[i]) {
        auto it = old_member.find(c);
        if (it != old_member.end()) ++overlap[i][it->second];
      }
    }
    const std::vector<int> claim = inherit_ids(overlap, old_sizes);

    std::map<int, RegionNode> rebuilt;
    for (std::size_t i = 0; i < components.size(); ++i) {
      const int id = claim[i] >= 0 ? old_ids[claim[i]] : next_region_id_++;
      RegionNode region;
      region.id = id;
      region.cells = std::move(components[i]);
      double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
      for (const CellXY& c : region.cells) {
        x0 = std::min(x0, c.ix * vs);
        y0 = std::min(y0, c.iy * vs);
        x1 = std::max(x1, (c.ix + 1) * vs);
        y1 = std::max(y1, (c.iy + 1) * vs);
        const CellXY nbs[4] = {{c.ix + 1, c.iy}, {c.ix - 1, c.iy}, {c.ix, c.iy + 1},
                               {c.ix, c.iy - 1}};
        for (const CellXY& nb : nbs) {
          auto it = separator.find(nb);
          if (it != separator.end()) region.landmarks.insert(it->second);
        }
      }
      region.polygon = {Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)};
      rebuilt[id] = std::move(region);
    }
    regions_ = std::move(rebuilt);

    // object assignment: centroid cell, else nearest region cell
    std::unordered_map<CellXY, int, CellXYHash> cell_region;
    for (const auto& [id, region] : regions_) {
      for (const CellXY& c : region.cells) cell_region[c] = id;
    }
    PartitionResult result;
    result.region_count = static_cast<int>(regions_.size());
    for (auto& [id, entry] : nodes_) {
      const int region = assign_region(entry.centroid, vs, cell_region);
      if (region != entry.region) {
        entry.region = region;
        result.reassigned.emplace_back(id, region);
      }
    }
    // keep the extractor's nodes in sync so rebuilds preserve assignments
    for (const auto& [id, entry] : nodes_) {
      extractor.set_region(id, entry.region);
    }
    return result;
  }

 private:
  int assign_region(const Vec3& centroid, double vs,
                    const std::unordered_map<CellXY, int, CellXYHash>& cell_region) const {
    const CellXY cell{static_cast<int32_t>(std::floor(centroid.x() / vs)),
                      static_cast<int32_t>(std::floor(centroid.y() / vs))};
    if (auto it = cell_region.find(cell); it != cell_region.end()) return it->second;
    // nearest region cell by center distance; ties by lower region id
    double best_d = 1e300;
    int best_region = 0;
    for (const auto& [id, region] : regions_) {
      for (const CellXY& c : region.cells) {
        const double dx = (c.ix + 0.5) * vs - centroid.x();
        const double dy = (c.iy + 0.5) * vs - centroid.y();
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best_region = id;
        }
      }
    }
    return best_region;
  }

  void drop_edges_of(int object_id) {
    for (auto it = edges_.begin(); it != edges_.end();) {
      if (it->first.subject == object_id || it->first.object == object_id) {
        it = edges_.erase(it);
        ++edges_dropped_;
      } else {
        ++it;
      }
    }
  }

  // strict plurality with a vote floor; ties leave the pair unaccepted
  void recompute_accepted(EdgeTally& tally) const {
    int best_pred = -1;
    int best_votes = 0;
    bool tie = false;
    for (const auto& [pred, n] : tally.votes) {
      if (n > best_votes) {
        best_votes = n;
        best_pred = pred;
        tie = false;
      } else if (n == best_votes) {
        tie = true;
      }
    }
    tally.accepted = (!tie && best_votes >= v_min_) ? best_pred : -1;
  }

  std::string site_name_;
  const Vocabulary* vocab_;
  int v_min_;
  std::map<int, ObjectEntry> nodes_;
  std::map<PairKey, EdgeTally> edges_;
  std::map<int, RegionNode> regions_;
  int next_region_id_ = 1;
  int edges_dropped_ = 0;
};

/// Canonical serialized form of the graph: nodes sorted by id, edges by
/// (subject, object, predicate), one entry per tallied predicate.
inline nlohmann::ordered_json export_graph(const SceneGraph& graph, const Vocabulary& vocab) {
  nlohmann::ordered_json doc;
  doc["site"] = {{"name", graph.site_name()},
                 {"regions", graph.regions().size()},
                 {"objects", graph.nodes().size()}};

  doc["regions"] = nlohmann::ordered_json::array();
  for (const auto& [id, region] : graph.regions()) {
    nlohmann::ordered_json r;
    r["id"] = id;
    nlohmann::ordered_json poly = nlohmann::ordered_json::array();
    for (const Vec2& p : region.polygon) poly.push_back({p.x(), p.y()});
    r["polygon"] = poly;
    r["cells"] = region.cells.size();
    r["landmarks"] = region.landmarks;
    doc["regions"].push_back(r);
  }

  doc["objects"] = nlohmann::ordered_json::array();
  for (const auto& [id, entry] : graph.nodes()) {
    nlohmann::ordered_json o;
    o["id"] = id;
    o["class"] = vocab.class_name(entry.class_id);
    o["level"] = entry.large ? "large" : "small";
    o["centroid"] = {entry.centroid.x(), entry.centroid.y(), entry.centroid.z()};
    o["aabb"] = {{"min", {entry.aabb_min.x(), entry.aabb_min.y(), entry.aabb_min.z()}},
                 {"max", {entry.aabb_max.x(), entry.aabb_max.y(), entry.aabb_max.z()}}};
    o["region"] = entry.region;
    doc["objects"].push_back(o);
  }

  doc["relations"] = nlohmann::ordered_json::array();
  for (const auto& [key, tally] : graph.edges()) {
    for (const auto& [pred, votes] : tally.votes) {
      nlohmann::ordered_json e;
      e["subject"] = key.subject;
      e["object"] = key.object;
      e["predicate"] = vocab.predicate_name(pred);
      e["votes"] = votes;
      e["weight"] = tally.weights.at(pred);
      e["accepted"] = (tally.accepted == pred);
      doc["relations"].push_back(e);
    }
  }
  return doc;
}

/// Renames object and region ids to a content-derived order so that two
/// equivalent graphs (same geometry, different id history) serialize
/// identically. Objects sort by (class, centroid, aabb); regions by their
/// polygon. Used by replay-equivalence checks.
inline nlohmann::ordered_json canonicalize_export(const nlohmann::ordered_json& doc) {
  using njson = nlohmann::ordered_json;

  std::vector<njson> objects(doc.at("objects").begin(), doc.at("objects").end());
  std::stable_sort(objects.begin(), objects.end(), [](const njson& a, const njson& b) {
    const auto rank = [](const njson& o) {
      return std::make_tuple(o.at("class").get<std::string>(),
                             o.at("centroid")[0].get<double>(),
                             o.at("centroid")[1].get<double>(),
                             o.at("centroid")[2].get<double>(),
                             o.at("aabb").at("min")[0].get<double>());
    };
    return rank(a) < rank(b);
  });
  std::map<int, int> object_rename;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    object_rename[objects[i].at("id").get<int>()] = static_cast<int>(i) + 1;
  }

  std::vector<njson> regions(doc.at("regions").begin(), doc.at("regions").end());
  std::stable_sort(regions.begin(), regions.end(), [](const njson& a, const njson& b) {
    return a.at("polygon").dump() < b.at("polygon").dump();
  });
  std::map<int, int> region_rename;
  region_rename[0] = 0;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    region_rename[regions[i].at("id").get<int>()] = static_cast<int>(i) + 1;
  }

  njson out;
  out["site"] = doc.at("site");
  out["regions"] = njson::array();
  for (auto& r : regions) {
    njson rr = r;
    rr["id"] = region_rename.at(r.at("id").get<int>());
    rr["landmarks"] = njson::array();  // landmark ids are extractor-internal
    out["regions"].push_back(rr);
  }
  out["objects"] = njson::array();
  for (auto& o : objects) {
    njson oo = o;
    oo["id"] = object_rename.at(o.at("id").get<int>());
    oo["region"] = region_rename.at(o.at("region").get<int>());
    out["objects"].push_back(oo);
  }

  std::vector<njson> relations;
  for (const auto& e : doc.at("relations")) {
    njson ee = e;
    ee["subject"] = object_rename.at(e.at("subject").get<int>());
    ee["object"] = object_rename.at(e.at("object").get<int>());
    relations.push_back(ee);
  }
  std::sort(relations.begin(), relations.end(), [](const njson& a, const njson& b) {
    return std::make_tuple(a.at("subject").get<int>(), a.at("object").get<int>(),
                           a.at("predicate").get<std::string>()) <
           std::make_tuple(b.at("subject").get<int>(), b.at("object").get<int>(),
                           b.at("predicate").get<std::string>());
  });
  out["relations"] = relations;
  return out;
}

/// Human-readable rendering of the graph for LLM-style consumption:
/// regions, large objects with 2-decimal centroids, accepted relations,
/// and small objects listed under their regions.
inline std::string export_prompt(const nlohmann::ordered_json& graph_doc,
                                 const std::string& target_class = "") {
  std::string out;
  const auto line = [&out](const std::string& s) {
    out += s;
    out += '\n';
  };
  char buf[160];

  line("scene: " + graph_doc.at("site").at("name").get<std::string>());
  if (!target_class.empty()) line("target: " + target_class);

  const auto& regions = graph_doc.at("regions");
  std::snprintf(buf, sizeof(buf), "regions: %zu", regions.size());
  line(buf);

  // small objects grouped by region
  std::map<int, std::vector<std::string>> smalls;
  for (const auto& o : graph_doc.at("objects")) {
    if (o.at("level").get<std::string>() == "small") {
      smalls[o.at("region").get<int>()].push_back(
          o.at("class").get<std::string>() + "#" + std::to_string(o.at("id").get<int>()));
    }
  }
  for (const auto& r : regions) {
    const int id = r.at("id").get<int>();
    const auto& poly = r.at("polygon");
    std::snprintf(buf, sizeof(buf), "region %d: x [%.2f, %.2f], y [%.2f, %.2f]", id,
                  poly[0][0].get<double>(), poly[2][0].get<double>(), poly[0][1].get<double>(),
                  poly[2][1].get<double>());
    line(buf);
    if (auto it = smalls.find(id); it != smalls.end()) {
      std::string row = "  small objects:";
      for (const auto& s : it->second) row += " " + s;
      line(row);
    }
  }
  if (auto it = smalls.find(0); it != smalls.end()) {
    std::string row = "unassigned small objects:";
    for (const auto& s : it->second) row += " " + s;
    line(row);
  }

  line("large objects:");
  for (const auto& o : graph_doc.at("objects")) {
    if (o.at("level").get<std::string>() != "large") continue;
    std::snprintf(buf, sizeof(buf), "%s#%d at (%.2f, %.2f) region %d",
                  o.at("class").get<std::string>().c_str(), o.at("id").get<int>(),
                  o.at("centroid")[0].get<double>(), o.at("centroid")[1].get<double>(),
                  o.at("region").get<int>());
    line(buf);
  }

  line("relations:");
  std::map<int, std::string> class_of;
  for (const auto& o : graph_doc.at("objects")) {
    class_of[o.at("id").get<int>()] = o.at("class").get<std::string>();
  }
  for (const auto& e : graph_doc.at("relations")) {
    if (!e.at("accepted").get<bool>()) continue;
    const int s = e.at("subject").get<int>();
    const int o = e.at("object").get<int>();
    line(class_of.at(s) + "#" + std::to_string(s) + " " + e.at("predicate").get<std::string>() +
         " " + class_of.at(o) + "#" + std::to_string(o));
  }
  return out;
}

}  // namespace sgfuse
