#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"

namespace sekge {

using json = nlohmann::json;

namespace fs = std::filesystem;

inline std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), ErrorKind::IoFailure, "cannot open " + p.string());
  return in;
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  require(out.good(), ErrorKind::IoFailure, "cannot write " + p.string());
  return out;
}

inline json read_json_file(const fs::path& p) {
  auto in = open_in(p);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, p.string() + ": " + e.what());
  }
}

inline void write_json_file(const fs::path& p, const json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

// Triples: head<TAB>relation<TAB>tail, '#' comments.
inline std::vector<RawTriple> parse_triples_tsv(std::istream& in) {
  std::vector<RawTriple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto a = line.find('\t');
    auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos || line.find('\t', b + 1) != std::string::npos) {
      fail(ErrorKind::ParseError, "triples line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    }
    out.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)});
  }
  return out;
}

inline void write_triples_tsv(std::ostream& out, const std::vector<RawTriple>& triples) {
  for (const auto& t : triples) out << t.head << '\t' << t.rel << '\t' << t.tail << '\n';
}

inline std::vector<RawTriple> raw_triples(const GeoKG& kg, const std::vector<Triple>& triples) {
  std::vector<RawTriple> out;
  out.reserve(triples.size());
  for (const auto& t : triples) out.push_back(kg.raw(t));
  return out;
}

inline EntityRecord entity_record_from_json(const json& j) {
  EntityRecord rec;
  try {
    rec.id = j.at("id").get<std::string>();
    const auto& type = j.at("type");
    if (type.is_array()) {
      if (type.size() != 1) fail(ErrorKind::MultipleTypes, rec.id + " declares " + std::to_string(type.size()) + " types");
      rec.type = type[0].get<std::string>();
    } else {
      rec.type = type.get<std::string>();
    }
    if (j.contains("point") && !j["point"].is_null()) {
      const auto& p = j["point"];
      if (!p.is_array() || p.size() != 2) fail(ErrorKind::ParseError, rec.id + ": point must be [x, y]");
      rec.point = Point2{p[0].get<double>(), p[1].get<double>()};
    }
    if (j.contains("bbox") && !j["bbox"].is_null()) {
      const auto& b = j["bbox"];
      if (!b.is_array() || b.size() != 4) fail(ErrorKind::ParseError, rec.id + ": bbox must be [xmin, ymin, xmax, ymax]");
      rec.bbox = Box{{b[0].get<double>(), b[1].get<double>()}, {b[2].get<double>(), b[3].get<double>()}};
      if (!rec.point) fail(ErrorKind::ParseError, rec.id + ": bbox requires a point");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("entity record: ") + e.what());
  }
  return rec;
}

inline json entity_record_to_json(const EntityRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["type"] = rec.type;
  j["point"] = rec.point ? json::array({rec.point->x, rec.point->y}) : json(nullptr);
  j["bbox"] = rec.bbox ? json::array({rec.bbox->min.x, rec.bbox->min.y, rec.bbox->max.x, rec.bbox->max.y}) : json(nullptr);
  return j;
}

inline std::vector<EntityRecord> parse_entities_jsonl(std::istream& in) {
  std::vector<EntityRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::ParseError, std::string("entities: ") + e.what());
    }
    out.push_back(entity_record_from_json(j));
  }
  return out;
}

inline void write_entities_jsonl(std::ostream& out, const std::vector<EntityRecord>& records) {
  for (const auto& r : records) out << entity_record_to_json(r).dump() << '\n';
}

inline EntityRecord entity_record(const GeoKG& kg, EntityIdx e) {
  EntityRecord rec{kg.entity_name(e), kg.type_name(kg.type_of(e)), std::nullopt, std::nullopt};
  if (const auto& fp = kg.footprint(e)) {
    rec.point = fp->point;
    rec.bbox = fp->box;
  }
  return rec;
}

inline std::vector<EntityRecord> entity_records(const GeoKG& kg) {
  std::vector<EntityRecord> out;
  for (EntityIdx e = 0; e < kg.num_entities(); ++e) out.push_back(entity_record(kg, e));
  return out;
}

inline StudyArea study_area_from_json(const json& j) {
  try {
    StudyArea a{{j.at("min")[0].get<double>(), j.at("min")[1].get<double>()},
                {j.at("max")[0].get<double>(), j.at("max")[1].get<double>()}};
    require(a.valid(), ErrorKind::BadArgument, "study area requires min < max");
    return a;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("study area: ") + e.what());
  }
}

inline json study_area_to_json(const StudyArea& a) {
  return {{"min", {a.min.x, a.min.y}}, {"max", {a.max.x, a.max.y}}};
}

inline GeoKG load_kg_files(const fs::path& triples, const fs::path& meta, const fs::path& area) {
  auto tin = open_in(triples);
  auto min = open_in(meta);
  return load_kg(parse_triples_tsv(tin), parse_entities_jsonl(min), study_area_from_json(read_json_file(area)));
}

/// Size statistics for a split.
inline json split_stats(const KGSplit& split) {
  json j;
  j["triples"] = {{"train", split.train.triples().size()}, {"valid", split.valid.size()}, {"test", split.test.size()}};
  j["relations"] = split.full.num_relations();
  j["entities"] = split.full.num_entities();
  j["geo_entities"] = split.full.num_geo();
  j["box_entities"] = split.full.num_box();
  j["types"] = split.full.num_types();
  return j;
}

// Split directory layout: train.tsv, valid.tsv, test.tsv, entities.jsonl, area.json, stats.json.
inline void save_split_dir(const fs::path& dir, const KGSplit& split, const json& extra_stats = json::object()) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "train.tsv");
    write_triples_tsv(out, raw_triples(split.train, split.train.triples()));
  }
  {
    auto out = open_out(dir / "valid.tsv");
    write_triples_tsv(out, raw_triples(split.full, split.valid));
  }
  {
    auto out = open_out(dir / "test.tsv");
    write_triples_tsv(out, raw_triples(split.full, split.test));
  }
  {
    auto out = open_out(dir / "entities.jsonl");
    write_entities_jsonl(out, entity_records(split.full));
  }
  write_json_file(dir / "area.json", study_area_to_json(split.full.area()));
  json stats = split_stats(split);
  for (auto& [k, v] : extra_stats.items()) stats[k] = v;
  write_json_file(dir / "stats.json", stats);
}

inline KGSplit load_split_dir(const fs::path& dir) {
  std::vector<RawTriple> train, valid, test;
  {
    auto in = open_in(dir / "train.tsv");
    train = parse_triples_tsv(in);
  }
  {
    auto in = open_in(dir / "valid.tsv");
    valid = parse_triples_tsv(in);
  }
  {
    auto in = open_in(dir / "test.tsv");
    test = parse_triples_tsv(in);
  }
  std::vector<EntityRecord> meta;
  {
    auto in = open_in(dir / "entities.jsonl");
    meta = parse_entities_jsonl(in);
  }
  const StudyArea area = study_area_from_json(read_json_file(dir / "area.json"));
  std::vector<RawTriple> all = train;
  all.insert(all.end(), valid.begin(), valid.end());
  all.insert(all.end(), test.begin(), test.end());
  KGSplit split;
  split.full = load_kg(all, meta, area);
  std::vector<Triple> tr(split.full.triples().begin(), split.full.triples().begin() + static_cast<std::ptrdiff_t>(train.size()));
  split.valid.assign(split.full.triples().begin() + static_cast<std::ptrdiff_t>(train.size()),
                     split.full.triples().begin() + static_cast<std::ptrdiff_t>(train.size() + valid.size()));
  split.test.assign(split.full.triples().begin() + static_cast<std::ptrdiff_t>(train.size() + valid.size()),
                    split.full.triples().end());
  split.train = split.full.with_triples(std::move(tr));
  return split;
}

}  // namespace sekge
