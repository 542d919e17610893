#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "json.hpp"
#include "sekge/entity_encoder.hpp"
#include "sekge/error.hpp"
#include "sekge/model.hpp"
#include "sekge/tensor.hpp"

namespace sekge {

struct Merge {
  std::size_t a = 0;  // representative cluster ids (original point indices)
  std::size_t b = 0;
  double height = 0.0;
};

/// Average-linkage agglomerative clustering by the nearest-neighbor chain
/// algorithm over a full distance matrix. Returns n - 1 merges sorted by height.
inline std::vector<Merge> average_linkage(std::vector<double> dist, std::size_t n) {
  require(dist.size() == n * n, ErrorKind::DimensionMismatch, "distance matrix must be n x n");
  std::vector<Merge> merges;
  if (n < 2) return merges;
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  std::vector<std::size_t> chain;
  auto d = [&](std::size_t i, std::size_t j) -> double& { return dist[i * n + j]; };
  std::size_t remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        if (active[i]) {
          chain.push_back(i);
          break;
        }
      }
    }
    const std::size_t a = chain.back();
    const std::size_t prev = chain.size() > 1 ? chain[chain.size() - 2] : n;
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!active[j] || j == a) continue;
      // prefer the previous chain element on ties so the chain terminates
      if (d(a, j) < best_d || (d(a, j) == best_d && j == prev)) {
        best_d = d(a, j);
        best = j;
      }
    }
    if (best == prev) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t keep = std::min(a, best);
      const std::size_t gone = std::max(a, best);
      merges.push_back({keep, gone, best_d});
      for (std::size_t k = 0; k < n; ++k) {
        if (!active[k] || k == keep || k == gone) continue;
        const double nd = (static_cast<double>(size[keep]) * d(keep, k) + static_cast<double>(size[gone]) * d(gone, k)) /
                          static_cast<double>(size[keep] + size[gone]);
        d(keep, k) = d(k, keep) = nd;
      }
      size[keep] += size[gone];
      active[gone] = false;
      --remaining;
    } else {
      chain.push_back(best);
    }
  }
  std::stable_sort(merges.begin(), merges.end(), [](const Merge& x, const Merge& y) { return x.height < y.height; });
  return merges;
}

/// Labels 0..k-1 after applying the lowest merges. Zero-height merges are
/// always applied so identical points share a label.
inline std::vector<int> cut_dendrogram(const std::vector<Merge>& merges, std::size_t n, std::size_t k) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t clusters = n;
  for (const auto& m : merges) {
    if (clusters <= k && m.height > 0.0) break;
    const auto ra = find(m.a);
    const auto rb = find(m.b);
    if (ra == rb) continue;
    parent[std::max(ra, rb)] = std::min(ra, rb);
    --clusters;
  }
  std::vector<int> label(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    label[i] = root_label[r];
  }
  return label;
}

inline double cosine_distance(const Vec& a, const Vec& b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return na == nb ? 0.0 : 1.0;
  return 1.0 - dot(a, b) / (na * nb);
}

inline std::vector<int> cluster_embeddings(const std::vector<Vec>& xs, std::size_t k) {
  require(k >= 2, ErrorKind::BadArgument, "need at least two clusters");
  const std::size_t n = xs.size();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = std::max(0.0, cosine_distance(xs[i], xs[j]));
  }
  return cut_dendrogram(average_linkage(std::move(dist), n), n, k);
}

struct GridCell {
  Point2 center;
  double cell_m = 0.0;
  int cluster = 0;
};

/// Encodes the center of every cell of a regular grid over the study area
/// and clusters the location embeddings.
inline std::vector<GridCell> grid_cluster_export(const Model& m, double cell_m = 20000.0, std::size_t k = 8) {
  require(m.config().has_space, ErrorKind::NoLocationEncoder, std::string(to_string(m.config().mode)) + " has no location encoder");
  require(k >= 2, ErrorKind::BadArgument, "need at least two clusters");
  require(cell_m > 0.0 && std::isfinite(cell_m), ErrorKind::BadArgument, "cell size must be positive");
  const auto& area = m.vocab().area;
  const auto nx = static_cast<std::size_t>(std::ceil((area.max.x - area.min.x) / cell_m));
  const auto ny = static_cast<std::size_t>(std::ceil((area.max.y - area.min.y) / cell_m));
  std::vector<GridCell> cells;
  std::vector<Vec> embs;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      Point2 c{area.min.x + (static_cast<double>(i) + 0.5) * cell_m, area.min.y + (static_cast<double>(j) + 0.5) * cell_m};
      cells.push_back({c, cell_m, 0});
      embs.push_back(encode_location(m.params(), m.config().loc, c));
    }
  }
  const auto labels = cluster_embeddings(embs, k);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i].cluster = labels[i];
  return cells;
}

inline nlohmann::json grid_cell_json(const GridCell& c) {
  return {{"center", {c.center.x, c.center.y}}, {"cell_m", c.cell_m}, {"cluster", c.cluster}};
}

}  // namespace sekge
