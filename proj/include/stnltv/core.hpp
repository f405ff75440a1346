#pragma once
// Multiband image container, degraded observations, and windowed block
// extraction with symmetric border handling.
//
// Conventions used throughout the library:
//   - a pixel index l is row-major: l = row * width + col, 0-based;
//   - image samples are stored band-major (band-sequential), row-major
//     within each band;
//   - out-of-range coordinates fold back by half-sample symmetric
//     reflection, edge sample included once: n, n+1, ... map to
//     n-1, n-2, ...

#include <cassert>
#include <vector>

#include "stnltv/common.hpp"

namespace stnltv {

// Fold an arbitrary index into [0, n) by symmetric reflection.
// Total function; periodic with period 2n.
inline int mirror_index(long long i, int n) {
  assert(n >= 1);
  const long long period = 2LL * n;
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<int>(m < n ? m : period - 1 - m);
}

struct MultibandImage {
  int width = 0;   // N1
  int height = 0;  // N2
  int bands = 0;   // R
  std::vector<double> data;  // band-major, size width*height*bands

  MultibandImage() = default;
  MultibandImage(int width, int height, int bands)
      : width(width), height(height), bands(bands) {
    if (width < 1 || height < 1 || bands < 1)
      throw std::invalid_argument("MultibandImage: dimensions must be positive");
    data.assign(static_cast<std::size_t>(width) * height * bands, 0.0);
  }

  int pixels() const { return width * height; }
  std::size_t size() const { return data.size(); }

  double at(int band, int pixel) const {
    return data[static_cast<std::size_t>(band) * pixels() + pixel];
  }
  double& at(int band, int pixel) {
    return data[static_cast<std::size_t>(band) * pixels() + pixel];
  }
  double at(int band, int row, int col) const { return at(band, row * width + col); }
  double& at(int band, int row, int col) { return at(band, row * width + col); }

  const double* band(int r) const { return data.data() + static_cast<std::size_t>(r) * pixels(); }
  double* band(int r) { return data.data() + static_cast<std::size_t>(r) * pixels(); }

  bool same_shape(const MultibandImage& o) const {
    return width == o.width && height == o.height && bands == o.bands;
  }
};

// Decimated, noisy measurements z together with the sampling masks that
// produced them. Enough provenance (blur, sigma) is kept to rebuild the
// forward operator.
struct DegradedObservation {
  int width = 0;
  int height = 0;
  int bands = 0;  // S
  int kept = 0;   // K, identical for every band
  int blur = 1;   // uniform blur side used before decimation (1 = none)
  double sigma = 0.0;  // noise std used when simulating (provenance only)
  std::vector<std::vector<int>> masks;  // per band, strictly increasing pixel indices
  std::vector<double> values;           // band-major, size bands*kept

  void validate() const {
    const int n = width * height;
    if (width < 1 || height < 1 || bands < 1)
      throw std::invalid_argument("DegradedObservation: bad dimensions");
    if (kept < 1 || kept > n)
      throw std::invalid_argument("DegradedObservation: kept count out of range");
    if (static_cast<int>(masks.size()) != bands)
      throw std::invalid_argument("DegradedObservation: mask count != bands");
    for (const auto& m : masks) {
      if (static_cast<int>(m.size()) != kept)
        throw std::invalid_argument("DegradedObservation: mask size != kept");
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] < 0 || m[i] >= n)
          throw std::invalid_argument("DegradedObservation: mask index out of range");
        if (i > 0 && m[i] <= m[i - 1])
          throw std::invalid_argument("DegradedObservation: mask not strictly increasing");
      }
    }
    if (values.size() != static_cast<std::size_t>(bands) * kept)
      throw std::invalid_argument("DegradedObservation: value count mismatch");
  }
};

// Square analysis window. Odd sides are centered on the pixel; even sides
// anchor the pixel at the top-left corner of the cell.
struct WindowSpec {
  int side = 2;  // Q >= 2
  explicit WindowSpec(int side) : side(side) {
    if (side < 2) throw std::invalid_argument("WindowSpec: side must be >= 2");
  }
};

struct BoxConstraint {
  double lo = 0.0;
  double hi = 255.0;
  BoxConstraint() = default;
  BoxConstraint(double lo, double hi) : lo(lo), hi(hi) {
    if (!(lo < hi)) throw std::invalid_argument("BoxConstraint: lo must be < hi");
  }
};

// Extract the Q x Q window around pixel l as a Q^2 x R row-major matrix.
// Rows follow raster order of the window positions; borders are mirrored.
inline std::vector<double> extract_window(const MultibandImage& x, int pixel,
                                          const WindowSpec& w) {
  assert(pixel >= 0 && pixel < x.pixels());
  const int q = w.side;
  const int row = pixel / x.width;
  const int col = pixel % x.width;
  const int r0 = (q % 2 == 1) ? row - (q - 1) / 2 : row;
  const int c0 = (q % 2 == 1) ? col - (q - 1) / 2 : col;
  std::vector<double> out(static_cast<std::size_t>(q) * q * x.bands);
  std::size_t j = 0;
  for (int dr = 0; dr < q; ++dr) {
    const int rr = mirror_index(r0 + dr, x.height);
    for (int dc = 0; dc < q; ++dc) {
      const int cc = mirror_index(c0 + dc, x.width);
      const int p = rr * x.width + cc;
      for (int r = 0; r < x.bands; ++r) out[j * x.bands + r] = x.at(r, p);
      ++j;
    }
  }
  return out;
}

}  // namespace stnltv
