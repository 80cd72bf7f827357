#pragma once

// Keyframe dataset directory format:
//   manifest.json      vocabulary, camera, keyframe entries, correction events
//   kf_<i>.pan.png     16-bit single-channel instance map
//   kf_<i>.inst.json   instance table + relation observations
//   kf_<i>.cloud.bin   little-endian f32 (x,y,z) triples, optionally followed
//                      by one u32 linear pixel index (row*width+col) per point

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sgfuse/geometry.hpp"
#include "sgfuse/keyframe.hpp"
#include "sgfuse/png_io.hpp"
#include "sgfuse/vocabulary.hpp"

namespace sgfuse {

using json = nlohmann::ordered_json;

/// Malformed input data (bad manifest, missing file, invariant violation).
struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using DatasetEvent = std::variant<KeyframeRecord, PoseCorrectionEvent>;

struct Dataset {
  std::string scene;
  uint64_t seed = 0;
  CameraModel camera;
  Vocabulary vocabulary;
  bool cloud_has_pixel_indices = false;
  std::vector<DatasetEvent> events;  // keyframes with corrections interleaved

  std::vector<const KeyframeRecord*> keyframes() const {
    std::vector<const KeyframeRecord*> out;
    for (const auto& ev : events) {
      if (const auto* rec = std::get_if<KeyframeRecord>(&ev)) out.push_back(rec);
    }
    return out;
  }
};

namespace detail {

inline json pose_to_json(const Pose& p) {
  return json::array({p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z(),
                      p.translation.x(), p.translation.y(), p.translation.z()});
}

inline Pose pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 7) throw DatasetError("pose must be [qw,qx,qy,qz,tx,ty,tz]");
  return Pose(Quat(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                   j[3].get<double>()),
              Vec3(j[4].get<double>(), j[5].get<double>(), j[6].get<double>()));
}

inline json vocabulary_to_json(const Vocabulary& v) {
  auto names = [&](const std::set<int>& ids, const std::vector<std::string>& table) {
    json arr = json::array();
    for (int id : ids) arr.push_back(table.at(id));
    return arr;
  };
  json j;
  j["classes"] = v.classes;
  j["predicates"] = v.predicates;
  j["large"] = names(v.large_classes, v.classes);
  j["landmarks"] = names(v.landmark_classes, v.classes);
  j["background"] = names(v.background_classes, v.classes);
  j["symmetric"] = names(v.symmetric_predicates, v.predicates);
  return j;
}

inline Vocabulary vocabulary_from_json(const json& j) {
  Vocabulary v;
  v.classes = j.at("classes").get<std::vector<std::string>>();
  v.predicates = j.at("predicates").get<std::vector<std::string>>();
  auto ids = [&](const char* key, bool classes) {
    std::set<int> out;
    if (!j.contains(key)) return out;
    for (const auto& name : j.at(key)) {
      const int id = classes ? v.class_id(name.get<std::string>())
                             : v.predicate_id(name.get<std::string>());
      if (id < 0) throw DatasetError(std::string("vocabulary set '") + key +
                                     "' references unknown name " + name.get<std::string>());
      out.insert(id);
    }
    return out;
  };
  v.large_classes = ids("large", true);
  v.landmark_classes = ids("landmarks", true);
  v.background_classes = ids("background", true);
  v.symmetric_predicates = ids("symmetric", false);
  const auto problems = v.validate();
  if (!problems.empty()) throw DatasetError("vocabulary: " + problems.front());
  return v;
}

inline json camera_to_json(const CameraModel& c) {
  json j;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["width"] = c.width;
  j["height"] = c.height;
  j["extrinsic"] = pose_to_json(c.extrinsic);
  return j;
}

inline CameraModel camera_from_json(const json& j) {
  CameraModel c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.extrinsic = pose_from_json(j.at("extrinsic"));
  if (!c.valid()) throw DatasetError("camera model fails validity checks");
  return c;
}

inline void write_cloud_bin(const std::string& path, const PointCloud& cloud,
                            int image_width, bool with_pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot open " + path + " for writing");
  for (const Vec3& p : cloud.points) {
    const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
  }
  if (with_pixels) {
    for (const PixelRC& px : cloud.pixels) {
      const uint32_t idx = static_cast<uint32_t>(px.row) * image_width + px.col;
      out.write(reinterpret_cast<const char*>(&idx), sizeof(idx));
    }
  }
}

inline PointCloud read_cloud_bin(const std::string& path, int image_width, bool with_pixels) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DatasetError("missing cloud file " + path);
  const std::streamsize bytes = in.tellg();
  in.seekg(0);
  const std::size_t stride = with_pixels ? 16 : 12;
  if (bytes % stride != 0) {
    throw DatasetError("cloud file " + path + " has unexpected size " + std::to_string(bytes));
  }
  const std::size_t n = static_cast<std::size_t>(bytes) / stride;

  PointCloud cloud;
  cloud.points.resize(n);
  std::vector<float> xyz(n * 3);
  in.read(reinterpret_cast<char*>(xyz.data()), static_cast<std::streamsize>(n * 12));
  for (std::size_t i = 0; i < n; ++i) {
    cloud.points[i] = Vec3(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
  }
  if (with_pixels) {
    std::vector<uint32_t> idx(n);
    in.read(reinterpret_cast<char*>(idx.data()), static_cast<std::streamsize>(n * 4));
    cloud.pixels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      cloud.pixels[i] = PixelRC{static_cast<int>(idx[i] / image_width),
                                static_cast<int>(idx[i] % image_width)};
    }
  }
  if (!in) throw DatasetError("short read on cloud file " + path);
  return cloud;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("missing file " + path);
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace detail

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const json manifest = detail::load_json_file((fs::path(dir) / "manifest.json").string());

  Dataset ds;
  ds.scene = manifest.value("scene", std::string("unnamed"));
  ds.seed = manifest.value("seed", 0ULL);
  ds.vocabulary = detail::vocabulary_from_json(manifest.at("vocabulary"));
  ds.camera = detail::camera_from_json(manifest.at("camera"));
  ds.cloud_has_pixel_indices = manifest.value("cloud_has_pixel_indices", false);

  // Correction events are attached after the keyframe matching their trigger.
  std::map<int, std::vector<PoseCorrectionEvent>> events_by_trigger;
  if (manifest.contains("corrections")) {
    for (const auto& ev : manifest.at("corrections")) {
      PoseCorrectionEvent e;
      e.trigger = ev.at("trigger").get<int>();
      for (const auto& c : ev.at("corrections")) {
        const int idx = c.at("index").get<int>();
        if (idx > e.trigger) {
          throw DatasetError("correction event at trigger " + std::to_string(e.trigger) +
                             " corrects future keyframe " + std::to_string(idx));
        }
        e.corrections[idx] = detail::pose_from_json(c.at("pose"));
      }
      events_by_trigger[e.trigger].push_back(std::move(e));
    }
  }

  int last_index = -1;
  std::set<int> keyframe_indices;
  for (const auto& entry : manifest.at("keyframes")) {
    KeyframeRecord rec;
    rec.index = entry.at("index").get<int>();
    if (!keyframe_indices.insert(rec.index).second) {
      throw DatasetError("duplicate keyframe index " + std::to_string(rec.index));
    }
    if (rec.index <= last_index) {
      throw DatasetError("keyframe indices not strictly increasing at " +
                         std::to_string(rec.index));
    }
    last_index = rec.index;
    rec.timestamp = entry.at("timestamp").get<double>();
    rec.pose = detail::pose_from_json(entry.at("pose"));

    const auto& files = entry.at("files");
    const auto file_path = [&](const char* key) {
      return (fs::path(dir) / files.at(key).get<std::string>()).string();
    };

    rec.panoptic.instance_map =
        read_png16(file_path("panoptic"), &rec.panoptic.width, &rec.panoptic.height);

    const json inst = detail::load_json_file(file_path("instances"));
    for (const auto& i : inst.at("instances")) {
      const int id = i.at("id").get<int>();
      const int class_id = ds.vocabulary.class_id(i.at("class").get<std::string>());
      if (class_id < 0) {
        throw DatasetError("keyframe " + std::to_string(rec.index) + ": unknown class " +
                           i.at("class").get<std::string>());
      }
      rec.panoptic.instance_table[id] = {class_id, i.value("confidence", 1.0)};
    }
    for (const auto& r : inst.at("relations")) {
      RelationObservation obs;
      obs.subject = r.at("subject").get<int>();
      obs.object = r.at("object").get<int>();
      const int pred = ds.vocabulary.predicate_id(r.at("predicate").get<std::string>());
      if (pred < 0) {
        throw DatasetError("keyframe " + std::to_string(rec.index) + ": unknown predicate " +
                           r.at("predicate").get<std::string>());
      }
      obs.predicate = pred;
      obs.confidence = r.value("confidence", 1.0);
      rec.relations.push_back(obs);
    }

    rec.cloud = detail::read_cloud_bin(file_path("cloud"), rec.panoptic.width,
                                       ds.cloud_has_pixel_indices);

    const auto problems = validate_record(rec, ds.vocabulary);
    if (!problems.empty()) throw DatasetError(problems.front());

    ds.events.emplace_back(std::move(rec));
    if (auto it = events_by_trigger.find(last_index); it != events_by_trigger.end()) {
      for (auto& e : it->second) {
        for (const auto& [idx, pose] : e.corrections) {
          if (!keyframe_indices.count(idx)) {
            throw DatasetError("correction references unknown keyframe " + std::to_string(idx));
          }
        }
        ds.events.emplace_back(std::move(e));
      }
      events_by_trigger.erase(it);
    }
  }
  if (!events_by_trigger.empty()) {
    throw DatasetError("correction event trigger " +
                       std::to_string(events_by_trigger.begin()->first) +
                       " does not match any keyframe");
  }
  return ds;
}

inline void write_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  json manifest;
  manifest["scene"] = ds.scene;
  manifest["seed"] = ds.seed;
  manifest["camera"] = detail::camera_to_json(ds.camera);
  manifest["vocabulary"] = detail::vocabulary_to_json(ds.vocabulary);
  manifest["cloud_has_pixel_indices"] = ds.cloud_has_pixel_indices;
  manifest["keyframes"] = json::array();
  manifest["corrections"] = json::array();

  for (const auto& ev : ds.events) {
    if (const auto* rec = std::get_if<KeyframeRecord>(&ev)) {
      const std::string stem = "kf_" + std::to_string(rec->index);
      json entry;
      entry["index"] = rec->index;
      entry["timestamp"] = rec->timestamp;
      entry["pose"] = detail::pose_to_json(rec->pose);
      entry["files"] = {{"panoptic", stem + ".pan.png"},
                        {"instances", stem + ".inst.json"},
                        {"cloud", stem + ".cloud.bin"}};
      manifest["keyframes"].push_back(entry);

      write_png16((fs::path(dir) / (stem + ".pan.png")).string(), rec->panoptic.instance_map,
                  rec->panoptic.width, rec->panoptic.height);

      json inst;
      inst["instances"] = json::array();
      for (const auto& [id, info] : rec->panoptic.instance_table) {
        inst["instances"].push_back({{"id", id},
                                     {"class", ds.vocabulary.class_name(info.class_id)},
                                     {"confidence", info.confidence}});
      }
      inst["relations"] = json::array();
      for (const auto& r : rec->relations) {
        inst["relations"].push_back({{"subject", r.subject},
                                     {"object", r.object},
                                     {"predicate", ds.vocabulary.predicate_name(r.predicate)},
                                     {"confidence", r.confidence}});
      }
      detail::write_json_file((fs::path(dir) / (stem + ".inst.json")).string(), inst);

      detail::write_cloud_bin((fs::path(dir) / (stem + ".cloud.bin")).string(), rec->cloud,
                              rec->panoptic.width, ds.cloud_has_pixel_indices);
    } else {
      const auto& e = std::get<PoseCorrectionEvent>(ev);
      json jev;
      jev["trigger"] = e.trigger;
      jev["corrections"] = json::array();
      for (const auto& [idx, pose] : e.corrections) {
        jev["corrections"].push_back({{"index", idx}, {"pose", detail::pose_to_json(pose)}});
      }
      manifest["corrections"].push_back(jev);
    }
  }
  detail::write_json_file((fs::path(dir) / "manifest.json").string(), manifest);
}

}  // namespace sgfuse
