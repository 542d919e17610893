#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "sekge/geokg.hpp"
#include "sekge/rng.hpp"

namespace sekge {

struct SynthConfig {
  std::size_t n_regions = 16;
  std::size_t n_places = 120;
  std::size_t n_agents = 64;
  StudyArea area{{0.0, 0.0}, {1.0e6, 1.0e6}};
  std::size_t knows_per_agent = 4;
  std::size_t nearby_per_place = 2;
};

struct SynthKG {
  std::vector<EntityRecord> entities;
  std::vector<RawTriple> triples;
  StudyArea area;
};

namespace detail {
inline std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", prefix, i);
  return buf;
}

inline double dist2(Point2 a, Point2 b) { return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y); }
}  // namespace detail

/// Places ordered by distance from place i (excluding i), ties broken by index.
inline std::vector<std::size_t> places_by_distance(const std::vector<Point2>& pts, std::size_t i) {
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < pts.size(); ++j)
    if (j != i) order.push_back(j);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detail::dist2(pts[i], pts[a]) < detail::dist2(pts[i], pts[b]);
  });
  return order;
}

/// Deterministic desk-scale geographic KG:
///  - Region: boxes tiling the study area on a grid; adjacentTo between grid neighbors;
///    capital -> the region's place closest to its centroid.
///  - Place: points inside a region; isPartOf -> that region; nearestCity -> the
///    nearest other place; nearbyPlace -> the next nearest places.
///  - Agent: non-geographic; hometown -> place; residence -> mostly a place in the
///    hometown's region; knows -> agents, mostly from the same region.
inline SynthKG synth_geokg(const SynthConfig& cfg, std::uint64_t seed) {
  require(cfg.n_regions >= 1 && cfg.n_places >= 1 && cfg.n_agents >= 1, ErrorKind::BadArgument,
          "synthetic KG counts must be >= 1");
  require(cfg.area.valid(), ErrorKind::BadArgument, "study area requires min < max");
  Rng rng(seed);
  SynthKG kg;
  kg.area = cfg.area;

  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cfg.n_regions))));
  const std::size_t rows = (cfg.n_regions + cols - 1) / cols;
  const double w = (cfg.area.max.x - cfg.area.min.x) / static_cast<double>(cols);
  const double h = (cfg.area.max.y - cfg.area.min.y) / static_cast<double>(rows);

  std::vector<Box> regions;
  for (std::size_t i = 0; i < cfg.n_regions; ++i) {
    const std::size_t r = i / cols;
    const std::size_t c = i % cols;
    Box b{{cfg.area.min.x + w * static_cast<double>(c), cfg.area.min.y + h * static_cast<double>(r)},
          {cfg.area.min.x + w * static_cast<double>(c + 1), cfg.area.min.y + h * static_cast<double>(r + 1)}};
    regions.push_back(b);
    kg.entities.push_back({detail::numbered("region", i), "Region", b.centroid(), b});
  }

  std::vector<Point2> places;
  std::vector<std::size_t> place_region;
  for (std::size_t i = 0; i < cfg.n_places; ++i) {
    const std::size_t reg = i % cfg.n_regions;
    const Box& b = regions[reg];
    // inset keeps points strictly interior so containment is unambiguous
    const double ix = 0.02 * (b.max.x - b.min.x);
    const double iy = 0.02 * (b.max.y - b.min.y);
    Point2 p{rng.uniform(b.min.x + ix, b.max.x - ix), rng.uniform(b.min.y + iy, b.max.y - iy)};
    places.push_back(p);
    place_region.push_back(reg);
    kg.entities.push_back({detail::numbered("place", i), "Place", p, std::nullopt});
  }
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    kg.entities.push_back({detail::numbered("agent", i), "Agent", std::nullopt, std::nullopt});
  }

  auto region = [&](std::size_t i) { return detail::numbered("region", i); };
  auto place = [&](std::size_t i) { return detail::numbered("place", i); };
  auto agent = [&](std::size_t i) { return detail::numbered("agent", i); };

  for (std::size_t i = 0; i < cfg.n_regions; ++i) {
    const std::size_t r = i / cols;
    const std::size_t c = i % cols;
    auto link = [&](std::size_t j) {
      if (j < cfg.n_regions) kg.triples.push_back({region(i), "adjacentTo", region(j)});
    };
    if (c > 0) link(i - 1);
    if (c + 1 < cols) link(i + 1);
    if (r > 0) link(i - cols);
    if (r + 1 < rows) link(i + cols);
  }

  std::vector<std::vector<std::size_t>> region_places(cfg.n_regions);
  for (std::size_t i = 0; i < cfg.n_places; ++i) region_places[place_region[i]].push_back(i);
  for (std::size_t reg = 0; reg < cfg.n_regions; ++reg) {
    if (region_places[reg].empty()) continue;
    const Point2 c = regions[reg].centroid();
    std::size_t best = region_places[reg].front();
    for (std::size_t p : region_places[reg])
      if (detail::dist2(places[p], c) < detail::dist2(places[best], c)) best = p;
    kg.triples.push_back({region(reg), "capital", place(best)});
  }

  for (std::size_t i = 0; i < cfg.n_places; ++i) {
    kg.triples.push_back({place(i), "isPartOf", region(place_region[i])});
    const auto order = places_by_distance(places, i);
    if (!order.empty()) kg.triples.push_back({place(i), "nearestCity", place(order[0])});
    for (std::size_t k = 1; k <= cfg.nearby_per_place && k < order.size(); ++k) {
      kg.triples.push_back({place(i), "nearbyPlace", place(order[k])});
    }
  }

  std::vector<std::size_t> agent_region(cfg.n_agents);
  for (std::size_t i = 0; i < cfg.n_agents; ++i) {
    const std::size_t home = rng.index(cfg.n_places);
    agent_region[i] = place_region[home];
    kg.triples.push_back({agent(i), "hometown", place(home)});
    const auto& local = region_places[agent_region[i]];
    const std::size_t res = rng.uniform() < 0.8 ? local[rng.index(local.size())] : rng.index(cfg.n_places);
    kg.triples.push_back({agent(i), "residence", place(res)});
  }
  if (cfg.n_agents > 1) {
    for (std::size_t i = 0; i < cfg.n_agents; ++i) {
      std::vector<std::size_t> same, other;
      for (std::size_t j = 0; j < cfg.n_agents; ++j) {
        if (j == i) continue;
        (agent_region[j] == agent_region[i] ? same : other).push_back(j);
      }
      std::vector<std::size_t> chosen;
      for (std::size_t k = 0; k < cfg.knows_per_agent && chosen.size() + 1 < cfg.n_agents; ++k) {
        const bool local = !same.empty() && (other.empty() || rng.uniform() < 0.75);
        auto& pool = local ? same : other;
        const std::size_t pick = rng.index(pool.size());
        chosen.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        kg.triples.push_back({agent(i), "knows", agent(chosen.back())});
      }
    }
  }
  return kg;
}

}  // namespace sekge
