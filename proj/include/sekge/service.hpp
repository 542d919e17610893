#pragma once

#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "sekge/checkpoint.hpp"
#include "sekge/error.hpp"
#include "sekge/model.hpp"
#include "sekge/query.hpp"
#include "sekge/query_engine.hpp"

namespace sekge {

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

/// A rejected request, attributed to one field of the input when possible.
struct RequestError : std::runtime_error {
  std::string kind;
  std::string field;
  RequestError(std::string kind_, std::string field_, const std::string& msg)
      : std::runtime_error(msg), kind(std::move(kind_)), field(std::move(field_)) {}
};

inline HttpResult error_result(int status, const std::string& kind, const std::string& field, const std::string& message) {
  nlohmann::json err = {{"kind", kind}, {"message", message}};
  if (!field.empty()) err["field"] = field;
  return {status, {{"error", err}}};
}

/// Inference endpoints over an immutable model snapshot. Footprints are
/// always resolved to centroids, so answers are deterministic.
class Service {
 public:
  struct Snapshot {
    Model model;
    EntityTable table;
    explicit Snapshot(Model m) : model(std::move(m)), table(model) {}
  };

  explicit Service(Model m) : snap_(std::make_shared<const Snapshot>(std::move(m))) {}

  /// Replaces the snapshot between requests; in-flight requests keep the old one.
  void swap_model(Model m) {
    auto next = std::make_shared<const Snapshot>(std::move(m));
    std::lock_guard lock(mu_);
    snap_ = std::move(next);
  }

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(mu_);
    return snap_;
  }

  HttpResult health() const { return {200, {{"status", "ok"}}}; }

  HttpResult meta() const {
    auto s = snapshot();
    const auto& m = s->model;
    const auto& c = m.config();
    return {200,
            {{"mode", to_string(c.mode)},
             {"dims", {{"d", c.dim()}, {"feat", c.feature_part()}, {"space", c.space_part()}}},
             {"entities", m.num_entities()},
             {"relations", m.vocab().relation_names.size()},
             {"types", m.vocab().type_names.size()},
             {"study_area", study_area_to_json(m.vocab().area)},
             {"footprints", "centroid"},
             {"config_hash", c.hash()},
             {"can_lift", can_lift(m)}}};
  }

  HttpResult relations() const {
    auto s = snapshot();
    const auto& v = s->model.vocab();
    nlohmann::json out = nlohmann::json::array();
    for (RelationIdx r : s->model.liftable()) {
      for (Direction d : {Direction::Forward, Direction::Inverse}) {
        const auto& name = v.relation_names.at(r);
        out.push_back({{"relation", name},
                       {"dir", to_string(d)},
                       {"label", d == Direction::Forward ? name + "(x, ?e)" : name + "(?e, x)"}});
      }
    }
    return {200, {{"relations", out}}};
  }

  HttpResult entities(const std::optional<std::string>& bbox, const std::optional<std::string>& limit) const {
    return guarded([&] {
      auto s = snapshot();
      const auto& v = s->model.vocab();
      std::optional<Box> area;
      if (bbox) area = parse_bbox(*bbox);
      std::size_t lim = 100;
      if (limit) lim = parse_positive(*limit, "limit");
      nlohmann::json out = nlohmann::json::array();
      std::size_t total = 0;
      for (EntityIdx e = 0; e < v.entity_names.size(); ++e) {
        const auto& fp = v.footprints[e];
        if (area && (!fp || !overlaps(*fp, *area))) continue;
        ++total;
        if (out.size() >= lim) continue;
        nlohmann::json item = {{"id", v.entity_names[e]}, {"type", v.type_names[v.entity_types[e]]}, {"point", nullptr}, {"bbox", nullptr}};
        if (fp) {
          item["point"] = {fp->point.x, fp->point.y};
          if (fp->box) item["bbox"] = {fp->box->min.x, fp->box->min.y, fp->box->max.x, fp->box->max.y};
        }
        out.push_back(item);
      }
      return HttpResult{200, {{"entities", out}, {"count", out.size()}, {"total", total}}};
    });
  }

  HttpResult answer(const std::string& body) const {
    return guarded([&] {
      auto s = snapshot();
      const auto j = parse_body(body);
      const std::size_t k = j.contains("k") ? json_positive(j.at("k"), "k") : 10;
      const auto cand = j.contains("candidates") ? parse_candidate_field(j.at("candidates")) : CandidateSet::All;
      QAExample ex;
      try {
        ex = query_from_json(j, s->model.vocab());
      } catch (const Error& e) {
        throw RequestError(std::string(to_string(e.kind())), query_field(e.kind()), e.what());
      }
      return ranked(s->model, answer_query(s->model, s->table, ex.query, k, cand));
    });
  }

  HttpResult lift(const std::string& body) const {
    return guarded([&] {
      auto s = snapshot();
      const auto& m = s->model;
      const auto j = parse_body(body);
      if (!j.contains("x")) throw RequestError("MissingField", "x", "missing field \"x\"");
      const auto& xj = j.at("x");
      if (!xj.is_array() || xj.size() != 2 || !xj[0].is_number() || !xj[1].is_number()) {
        throw RequestError("BadField", "x", "x must be [x, y]");
      }
      const Point2 x{xj[0].get<double>(), xj[1].get<double>()};
      if (!std::isfinite(x.x) || !std::isfinite(x.y)) throw RequestError("NonFiniteInput", "x", "coordinates must be finite");
      if (!j.contains("relation")) throw RequestError("MissingField", "relation", "missing field \"relation\"");
      if (!j.at("relation").is_string()) throw RequestError("BadField", "relation", "relation must be a string");
      const auto rel_name = j.at("relation").get<std::string>();
      auto rit = m.vocab().relation_index.find(rel_name);
      if (rit == m.vocab().relation_index.end()) throw RequestError("UnknownRelation", "relation", "unknown relation " + rel_name);
      Direction dir = Direction::Forward;
      if (j.contains("dir")) {
        const auto& d = j.at("dir");
        if (!d.is_string() || (d.get<std::string>() != "fwd" && d.get<std::string>() != "inv")) {
          throw RequestError("BadField", "dir", "dir must be \"fwd\" or \"inv\"");
        }
        dir = parse_direction(d.get<std::string>());
      }
      const std::size_t k = j.contains("k") ? json_positive(j.at("k"), "k") : 10;
      const auto cand = j.contains("candidates") ? parse_candidate_field(j.at("candidates")) : CandidateSet::All;
      if (!can_lift(m)) throw RequestError("UnsupportedMode", "", std::string(to_string(m.config().mode)) + " cannot lift locations");
      HttpResult res = ranked(m, sekge::lift(m, s->table, x, rit->second, dir, k, cand));
      if (!m.vocab().area.contains(x)) res.body["warning"] = "location is outside the study area";
      return res;
    });
  }

  void mount(httplib::Server& server) const {
    auto send = [](httplib::Response& res, const HttpResult& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server.Get("/meta", [this, send](const httplib::Request&, httplib::Response& res) { send(res, meta()); });
    server.Get("/relations", [this, send](const httplib::Request&, httplib::Response& res) { send(res, relations()); });
    server.Get("/entities", [this, send](const httplib::Request& req, httplib::Response& res) {
      auto param = [&](const char* k) -> std::optional<std::string> {
        if (!req.has_param(k)) return std::nullopt;
        return req.get_param_value(k);
      };
      send(res, entities(param("bbox"), param("limit")));
    });
    server.Post("/answer", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, answer(req.body)); });
    server.Post("/lift", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, lift(req.body)); });
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  }

  static bool can_lift(const Model& m) {
    return m.config().has_space && m.config().projection == ProjectionKind::Block;
  }

 private:
  template <class F>
  static HttpResult guarded(F&& f) {
    try {
      return f();
    } catch (const RequestError& e) {
      return error_result(400, e.kind, e.field, e.what());
    } catch (const Error& e) {
      return error_result(400, std::string(to_string(e.kind())), "", e.what());
    } catch (const std::exception& e) {
      return error_result(500, "Internal", "", e.what());
    }
  }

  static nlohmann::json parse_body(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw RequestError("ParseError", "", std::string("body is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw RequestError("BadField", "", "body must be a JSON object");
    return j;
  }

  static std::size_t json_positive(const nlohmann::json& j, const std::string& field) {
    if (!j.is_number_integer() || j.get<long long>() < 1) throw RequestError("BadField", field, field + " must be a positive integer");
    return j.get<std::size_t>();
  }

  static std::size_t parse_positive(const std::string& s, const std::string& field) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used == s.size() && v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw RequestError("BadField", field, field + " must be a positive integer");
  }

  static CandidateSet parse_candidate_field(const nlohmann::json& j) {
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      if (s == "all" || s == "geo" || s == "type") return parse_candidates(s);
    }
    throw RequestError("BadField", "candidates", "candidates must be \"all\", \"geo\" or \"type\"");
  }

  static std::string query_field(ErrorKind k) {
    switch (k) {
      case ErrorKind::UnknownRelation: return "edges";
      case ErrorKind::UnknownAnchor: return "anchors";
      case ErrorKind::UnknownType: return "target_type";
      default: return "query";
    }
  }

  static Box parse_bbox(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) v.clear();
      } catch (const std::exception&) {
        v.clear();
        break;
      }
    }
    if (v.size() != 4 || v[0] > v[2] || v[1] > v[3]) {
      throw RequestError("BadField", "bbox", "bbox must be xmin,ymin,xmax,ymax with min <= max");
    }
    return {{v[0], v[1]}, {v[2], v[3]}};
  }

  static bool overlaps(const Footprint& fp, const Box& b) {
    if (!fp.box) return b.contains(fp.point);
    return fp.box->min.x <= b.max.x && b.min.x <= fp.box->max.x && fp.box->min.y <= b.max.y && b.min.y <= fp.box->max.y;
  }

  static HttpResult ranked(const Model& m, const RankedAnswers& r) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : r) out.push_back({{"entity", m.vocab().entity_names.at(s.entity)}, {"score", s.score}});
    return {200, {{"ranked", out}}};
  }

  mutable std::mutex mu_;
  std::shared_ptr<const Snapshot> snap_;
};

/// "host:port" -> (host, port).
inline std::pair<std::string, int> parse_address(const std::string& addr) {
  const auto pos = addr.rfind(':');
  require(pos != std::string::npos && pos + 1 < addr.size(), ErrorKind::BadArgument, "address must be HOST:PORT");
  int port = 0;
  try {
    port = std::stoi(addr.substr(pos + 1));
  } catch (const std::exception&) {
    fail(ErrorKind::BadArgument, "bad port in " + addr);
  }
  require(port > 0 && port < 65536, ErrorKind::BadArgument, "port out of range");
  return {addr.substr(0, pos), port};
}

}  // namespace sekge
