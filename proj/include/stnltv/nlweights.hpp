#pragma once
// Non-local neighborhood estimation: Gaussian-windowed patch distances,
// per-pixel neighbor selection and weight normalization.

#include <algorithm>
#include <cmath>
#include <vector>

#include "stnltv/core.hpp"

namespace stnltv {

struct PatchSpec {
  int patch_side = 5;        // odd
  double bandwidth = 35.0;   // similarity bandwidth (delta)
  int search_side = 11;      // search window side
  int max_neighbors = 14;    // kept neighbors per pixel
  double gaussian_std = 0.0; // 0 = auto: (patch_side - 1) / 4

  double effective_std() const {
    return gaussian_std > 0.0 ? gaussian_std : (patch_side - 1) / 4.0;
  }
  void validate() const {
    if (patch_side < 1 || patch_side % 2 == 0)
      throw std::invalid_argument("PatchSpec: patch side must be odd and >= 1");
    if (max_neighbors < 1) throw std::invalid_argument("PatchSpec: max_neighbors must be >= 1");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("PatchSpec: bandwidth must be > 0");
    if (search_side < 2) throw std::invalid_argument("PatchSpec: search side must be >= 2");
  }
};

// Sparse per-pixel neighbor lists with normalized positive weights.
// Neighbor indices are stored in ascending pixel order within each pixel.
struct NeighborhoodGraph {
  int pixels = 0;
  std::vector<int> offset;     // size pixels+1
  std::vector<int> neighbor;   // concatenated neighbor indices
  std::vector<double> weight;  // aligned with neighbor, sums to 1 per pixel

  int degree(int l) const { return offset[l + 1] - offset[l]; }
  int max_degree() const {
    int d = 0;
    for (int l = 0; l < pixels; ++l) d = std::max(d, degree(l));
    return d;
  }
};

// Squared distance between the Gaussian-windowed patches centered at pixels
// l and n, summed over all bands. Borders are mirrored.
inline double patch_distance(const MultibandImage& x, int l, int n, const PatchSpec& spec) {
  const int q = spec.patch_side;
  const int h = (q - 1) / 2;
  const double sigma = spec.effective_std();
  const double inv2s2 = sigma > 0.0 ? 1.0 / (2.0 * sigma * sigma) : 0.0;
  const int lr = l / x.width, lc = l % x.width;
  const int nr = n / x.width, nc = n % x.width;
  double acc = 0.0;
  for (int dr = -h; dr <= h; ++dr) {
    const int lrr = mirror_index(lr + dr, x.height);
    const int nrr = mirror_index(nr + dr, x.height);
    for (int dc = -h; dc <= h; ++dc) {
      const int lcc = mirror_index(lc + dc, x.width);
      const int ncc = mirror_index(nc + dc, x.width);
      const double g = sigma > 0.0 ? std::exp(-(dr * dr + dc * dc) * inv2s2) : 1.0;
      const int lp = lrr * x.width + lcc;
      const int np = nrr * x.width + ncc;
      for (int r = 0; r < x.bands; ++r) {
        const double d = g * (x.at(r, lp) - x.at(r, np));
        acc += d * d;
      }
    }
  }
  return acc;
}

// Build the neighborhood graph from a pilot image: for each pixel, rank the
// (deduplicated, mirrored) search-window candidates by patch distance, keep
// the max_neighbors closest (ties to the smaller pixel index) and normalize
// exp(-dist/delta^2) weights to sum 1.
inline NeighborhoodGraph build_graph(const MultibandImage& x, const PatchSpec& spec) {
  spec.validate();
  if (!detail::all_finite(x.data))
    throw std::invalid_argument("build_graph: image contains non-finite samples");
  const int n_pixels = x.pixels();
  const int q = spec.search_side;
  const int h0 = (q % 2 == 1) ? -(q - 1) / 2 : 0;

  NeighborhoodGraph g;
  g.pixels = n_pixels;
  g.offset.assign(n_pixels + 1, 0);

  std::vector<int> cand;
  std::vector<std::pair<double, int>> ranked;  // (distance, pixel index)
  std::vector<std::vector<int>> kept(n_pixels);
  std::vector<std::vector<double>> kw(n_pixels);

  const double inv_d2 = 1.0 / (spec.bandwidth * spec.bandwidth);
  for (int l = 0; l < n_pixels; ++l) {
    const int row = l / x.width, col = l % x.width;
    cand.clear();
    for (int dr = 0; dr < q; ++dr) {
      const int rr = mirror_index(row + h0 + dr, x.height);
      for (int dc = 0; dc < q; ++dc) {
        const int cc = mirror_index(col + h0 + dc, x.width);
        const int p = rr * x.width + cc;
        if (p != l) cand.push_back(p);
      }
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    ranked.clear();
    for (int p : cand) ranked.emplace_back(patch_distance(x, l, p, spec), p);
    const int keep = std::min<int>(spec.max_neighbors, static_cast<int>(ranked.size()));
    std::partial_sort(ranked.begin(), ranked.begin() + keep, ranked.end());

    // Stable weights: shift by the smallest kept distance so the largest
    // unnormalized weight is exactly 1.
    double dmin = keep > 0 ? ranked[0].first : 0.0;
    std::vector<std::pair<int, double>> sel;  // (pixel, unnormalized weight)
    double sum = 0.0;
    for (int k = 0; k < keep; ++k) {
      const double w = std::exp(-(ranked[k].first - dmin) * inv_d2);
      sel.emplace_back(ranked[k].second, w);
      sum += w;
    }
    std::sort(sel.begin(), sel.end());
    kept[l].reserve(keep);
    kw[l].reserve(keep);
    for (auto& [p, w] : sel) {
      kept[l].push_back(p);
      kw[l].push_back(w / sum);
    }
    g.offset[l + 1] = g.offset[l] + keep;
  }

  g.neighbor.reserve(g.offset[n_pixels]);
  g.weight.reserve(g.offset[n_pixels]);
  for (int l = 0; l < n_pixels; ++l) {
    g.neighbor.insert(g.neighbor.end(), kept[l].begin(), kept[l].end());
    g.weight.insert(g.weight.end(), kw[l].begin(), kw[l].end());
  }
  return g;
}

}  // namespace stnltv
