#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"
#include "sekge/hash.hpp"
#include "sekge/kg_io.hpp"
#include "sekge/model.hpp"

// Layout: [u64 LE manifest length][manifest JSON][float32 LE parameter blob].
namespace sekge {

inline constexpr const char* kCheckpointVersion = "sekge-ckpt-v1";

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline nlohmann::json vocab_to_json(const Vocabulary& v) {
  nlohmann::json ents = nlohmann::json::array();
  for (std::size_t e = 0; e < v.entity_names.size(); ++e) {
    nlohmann::json point = nullptr, bbox = nullptr;
    if (const auto& fp = v.footprints[e]) {
      point = {fp->point.x, fp->point.y};
      if (fp->box) bbox = {fp->box->min.x, fp->box->min.y, fp->box->max.x, fp->box->max.y};
    }
    ents.push_back({v.entity_names[e], v.entity_types[e], point, bbox});
  }
  return {{"entities", ents}, {"types", v.type_names}, {"relations", v.relation_names}, {"area", study_area_to_json(v.area)}};
}

inline std::shared_ptr<Vocabulary> vocab_from_json(const nlohmann::json& j) {
  auto v = std::make_shared<Vocabulary>();
  v->type_names = j.at("types").get<std::vector<std::string>>();
  v->relation_names = j.at("relations").get<std::vector<std::string>>();
  v->area = study_area_from_json(j.at("area"));
  for (const auto& e : j.at("entities")) {
    v->entity_names.push_back(e.at(0).get<std::string>());
    const auto t = e.at(1).get<TypeIdx>();
    require(t < v->type_names.size(), ErrorKind::CorruptBlob, "entity type index out of range");
    v->entity_types.push_back(t);
    if (e.at(2).is_null()) {
      v->footprints.emplace_back();
      continue;
    }
    Footprint fp{{e.at(2).at(0).get<double>(), e.at(2).at(1).get<double>()}, std::nullopt};
    if (!e.at(3).is_null()) {
      const auto& b = e.at(3);
      fp.box = Box{{b.at(0).get<double>(), b.at(1).get<double>()}, {b.at(2).get<double>(), b.at(3).get<double>()}};
    }
    v->footprints.emplace_back(fp);
  }
  v->reindex();
  return v;
}

}  // namespace detail

/// Extra provenance stored alongside the parameters.
struct CheckpointInfo {
  nlohmann::json train = nlohmann::json::object();  // training config, optimizer, history summary
};

inline std::string serialize_checkpoint(const Model& m, const CheckpointInfo& info = {}) {
  std::string blob;
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& [name, p] : m.params()) {
    const std::size_t offset = blob.size();
    for (double x : p.value.data) detail::put_u32_le(blob, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    const std::string_view bytes(blob.data() + offset, blob.size() - offset);
    arrays.push_back({{"name", name},
                      {"rows", p.value.rows},
                      {"cols", p.value.cols},
                      {"offset", offset},
                      {"bytes", bytes.size()},
                      {"fnv1a64", hex64(fnv1a64(bytes))}});
  }
  nlohmann::json liftable = nlohmann::json::array();
  for (auto r : m.liftable()) liftable.push_back(r);
  const nlohmann::json manifest = {
      {"version", kCheckpointVersion},
      {"config", m.config().to_json()},
      {"config_hash", m.config().hash()},
      {"seed", m.seed()},
      {"dims", {{"d", m.dim()}, {"feat", m.config().feature_part()}, {"space", m.config().space_part()}}},
      {"vocabulary", detail::vocab_to_json(m.vocab())},
      {"liftable", liftable},
      {"train", info.train},
      {"arrays", arrays},
      {"blob_bytes", blob.size()},
  };
  const std::string text = manifest.dump();
  std::string out;
  const auto len = static_cast<std::uint64_t>(text.size());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += text;
  out += blob;
  return out;
}

struct LoadedCheckpoint {
  Model model;
  nlohmann::json manifest;
};

inline LoadedCheckpoint deserialize_checkpoint(const std::string& bytes) {
  require(bytes.size() >= 8, ErrorKind::CorruptBlob, "checkpoint shorter than its header");
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(u[i]) << (8 * i);
  require(len <= bytes.size() - 8, ErrorKind::CorruptBlob, "manifest length exceeds file size");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(8, len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptBlob, std::string("manifest does not parse: ") + e.what());
  }
  const auto version = manifest.value("version", std::string());
  require(version == kCheckpointVersion, ErrorKind::VersionMismatch,
          "checkpoint version " + version + ", expected " + kCheckpointVersion);
  const std::string_view blob(bytes.data() + 8 + len, bytes.size() - 8 - len);
  require(blob.size() == manifest.at("blob_bytes").get<std::size_t>(), ErrorKind::CorruptBlob,
          "parameter blob is " + std::to_string(blob.size()) + " bytes, manifest says " +
              std::to_string(manifest.at("blob_bytes").get<std::size_t>()));
  ParamStore params;
  for (const auto& a : manifest.at("arrays")) {
    const auto name = a.at("name").get<std::string>();
    const auto rows = a.at("rows").get<std::size_t>();
    const auto cols = a.at("cols").get<std::size_t>();
    const auto offset = a.at("offset").get<std::size_t>();
    const auto nbytes = a.at("bytes").get<std::size_t>();
    require(nbytes == rows * cols * 4 && offset + nbytes <= blob.size(), ErrorKind::CorruptBlob, "array " + name + " out of bounds");
    const auto section = blob.substr(offset, nbytes);
    require(hex64(fnv1a64(section)) == a.at("fnv1a64").get<std::string>(), ErrorKind::CorruptBlob, "checksum mismatch in " + name);
    Tensor t(rows, cols);
    const auto* p = reinterpret_cast<const unsigned char*>(section.data());
    for (std::size_t i = 0; i < rows * cols; ++i) t.data[i] = std::bit_cast<float>(detail::get_u32_le(p + 4 * i));
    params.add(name, std::move(t));
  }
  auto vocab = detail::vocab_from_json(manifest.at("vocabulary"));
  auto cfg = ModelConfig::from_json(manifest.at("config"));
  Model m = Model::assemble(vocab, cfg, std::move(params), manifest.at("seed").get<std::uint64_t>());
  std::vector<RelationIdx> liftable;
  for (const auto& r : manifest.at("liftable")) liftable.push_back(r.get<RelationIdx>());
  m.set_liftable(std::move(liftable));
  return {std::move(m), std::move(manifest)};
}

inline void save_checkpoint(const Model& m, const fs::path& path, const CheckpointInfo& info = {}) {
  const auto bytes = serialize_checkpoint(m, info);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::IoFailure, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::IoFailure, "write failed for " + path.string());
}

inline LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoFailure, "cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

/// Rounds every parameter to float32, the precision a checkpoint stores.
inline void round_to_float(ParamStore& params) {
  for (auto& [name, p] : params) {
    for (auto& x : p.value.data) x = static_cast<double>(static_cast<float>(x));
  }
}

}  // namespace sekge
