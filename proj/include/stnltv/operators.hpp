#pragma once
// Linear degradation operator (uniform blur followed by per-band decimation)
// and analysis operators mapping an image to its stacked per-pixel difference
// matrices. All adjoints are exact transposes of the forward maps.

#include <algorithm>
#include <random>

#include "stnltv/core.hpp"
#include "stnltv/nlweights.hpp"

namespace stnltv {

namespace detail {

// out = uniform b x b blur of in, with mirrored borders. b odd; b == 1 copies.
inline void blur_band(const double* in, double* out, int width, int height, int b) {
  if (b == 1) {
    std::copy(in, in + static_cast<std::size_t>(width) * height, out);
    return;
  }
  const int h = (b - 1) / 2;
  const double inv = 1.0 / (b * b);
  for (int row = 0; row < height; ++row)
    for (int col = 0; col < width; ++col) {
      double acc = 0.0;
      for (int dr = -h; dr <= h; ++dr) {
        const int rr = mirror_index(row + dr, height);
        for (int dc = -h; dc <= h; ++dc)
          acc += in[rr * width + mirror_index(col + dc, width)];
      }
      out[row * width + col] = acc * inv;
    }
}

// Exact transpose of blur_band: scatter each output sample back over its taps.
inline void blur_band_adjoint(const double* in, double* out, int width, int height, int b) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (b == 1) {
    std::copy(in, in + n, out);
    return;
  }
  std::fill(out, out + n, 0.0);
  const int h = (b - 1) / 2;
  const double inv = 1.0 / (b * b);
  for (int row = 0; row < height; ++row)
    for (int col = 0; col < width; ++col) {
      const double v = in[row * width + col] * inv;
      for (int dr = -h; dr <= h; ++dr) {
        const int rr = mirror_index(row + dr, height);
        for (int dc = -h; dc <= h; ++dc)
          out[rr * width + mirror_index(col + dc, width)] += v;
      }
    }
}

}  // namespace detail

// A = per-band (decimation o uniform blur); bands are degraded independently.
class DegradationOperator {
 public:
  DegradationOperator(int width, int height, int bands, int blur,
                      std::vector<std::vector<int>> masks)
      : width_(width), height_(height), bands_(bands), blur_(blur), masks_(std::move(masks)) {
    if (width < 1 || height < 1 || bands < 1)
      throw std::invalid_argument("DegradationOperator: bad dimensions");
    if (blur < 1 || blur % 2 == 0)
      throw std::invalid_argument("DegradationOperator: blur side must be odd and >= 1");
    if (static_cast<int>(masks_.size()) != bands)
      throw std::invalid_argument("DegradationOperator: need one mask per band");
    const int n = width * height;
    kept_ = static_cast<int>(masks_[0].size());
    for (const auto& m : masks_) {
      if (static_cast<int>(m.size()) != kept_)
        throw std::invalid_argument("DegradationOperator: masks must share one size");
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] < 0 || m[i] >= n)
          throw std::invalid_argument("DegradationOperator: mask index out of range");
        if (i > 0 && m[i] <= m[i - 1])
          throw std::invalid_argument("DegradationOperator: mask not strictly increasing");
      }
    }
    if (kept_ < 1) throw std::invalid_argument("DegradationOperator: empty mask");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int bands() const { return bands_; }
  int blur() const { return blur_; }
  int kept() const { return kept_; }
  int domain_size() const { return width_ * height_ * bands_; }
  int range_size() const { return bands_ * kept_; }
  const std::vector<std::vector<int>>& masks() const { return masks_; }

  // out (bands*kept, band-major) = A x
  void apply(const MultibandImage& x, std::vector<double>& out) const {
    if (x.width != width_ || x.height != height_ || x.bands != bands_)
      throw std::invalid_argument("DegradationOperator::apply: image shape mismatch");
    out.resize(static_cast<std::size_t>(bands_) * kept_);
    std::vector<double> tmp(static_cast<std::size_t>(width_) * height_);
    for (int r = 0; r < bands_; ++r) {
      detail::blur_band(x.band(r), tmp.data(), width_, height_, blur_);
      double* o = out.data() + static_cast<std::size_t>(r) * kept_;
      for (int k = 0; k < kept_; ++k) o[k] = tmp[masks_[r][k]];
    }
  }

  // A^T y: zero-fill at dropped indices, then the transpose of the blur.
  void adjoint(std::span<const double> y, MultibandImage& out) const {
    if (y.size() != static_cast<std::size_t>(bands_) * kept_)
      throw std::invalid_argument("DegradationOperator::adjoint: measurement size mismatch");
    if (out.width != width_ || out.height != height_ || out.bands != bands_)
      out = MultibandImage(width_, height_, bands_);
    std::vector<double> tmp(static_cast<std::size_t>(width_) * height_, 0.0);
    for (int r = 0; r < bands_; ++r) {
      std::fill(tmp.begin(), tmp.end(), 0.0);
      const double* yi = y.data() + static_cast<std::size_t>(r) * kept_;
      for (int k = 0; k < kept_; ++k) tmp[masks_[r][k]] = yi[k];
      detail::blur_band_adjoint(tmp.data(), out.band(r), width_, height_, blur_);
    }
  }

  MultibandImage adjoint(std::span<const double> y) const {
    MultibandImage out(width_, height_, bands_);
    adjoint(y, out);
    return out;
  }

 private:
  int width_, height_, bands_, blur_, kept_;
  std::vector<std::vector<int>> masks_;
};

enum class Regularizer { ST_TV, ST_NLTV, CC_TV, CC_NLTV };

inline bool is_nonlocal(Regularizer r) {
  return r == Regularizer::ST_NLTV || r == Regularizer::CC_NLTV;
}
inline bool is_channel_by_channel(Regularizer r) {
  return r == Regularizer::CC_TV || r == Regularizer::CC_NLTV;
}

// Ragged stack of per-pixel matrices X^(l), each rows(l) x cols, row-major.
struct TensorField {
  int cols = 0;
  std::vector<int> offset;    // per-pixel row offsets, size pixels+1
  std::vector<double> value;  // size offset.back() * cols

  int blocks() const { return static_cast<int>(offset.size()) - 1; }
  int rows(int l) const { return offset[l + 1] - offset[l]; }
  int total_rows() const { return offset.back(); }
  double* block(int l) { return value.data() + static_cast<std::size_t>(offset[l]) * cols; }
  const double* block(int l) const {
    return value.data() + static_cast<std::size_t>(offset[l]) * cols;
  }
  bool same_shape(const TensorField& o) const {
    return cols == o.cols && offset == o.offset;
  }
};

// Phi: image -> TensorField. TV variants stack the horizontal and vertical
// forward differences (2 rows per pixel, zero rows where the neighbor mirrors
// back onto the pixel); NLTV variants stack weighted differences against the
// graph neighbors. The channel-by-channel variants share the same linear map;
// they differ only in how downstream constraints group the entries.
class AnalysisOperator {
 public:
  AnalysisOperator(Regularizer kind, int width, int height, int bands,
                   const NeighborhoodGraph* graph = nullptr, int window = 0)
      : kind_(kind), width_(width), height_(height), bands_(bands), graph_(graph) {
    if (width < 1 || height < 1 || bands < 1)
      throw std::invalid_argument("AnalysisOperator: bad dimensions");
    const int n = pixels();
    if (is_nonlocal(kind_)) {
      if (graph_ == nullptr)
        throw ConfigError("AnalysisOperator: NLTV variant requires a neighborhood graph");
      if (graph_->pixels != n)
        throw ConfigError("AnalysisOperator: graph pixel count mismatch");
      window_ = window > 0 ? window : 11;
    } else {
      graph_ = nullptr;
      window_ = 2;
    }
    offset_.assign(n + 1, 0);
    for (int l = 0; l < n; ++l)
      offset_[l + 1] = offset_[l] + (graph_ ? graph_->degree(l) : 2);
  }

  Regularizer kind() const { return kind_; }
  bool nonlocal() const { return graph_ != nullptr; }
  bool channel_by_channel() const { return is_channel_by_channel(kind_); }
  int width() const { return width_; }
  int height() const { return height_; }
  int bands() const { return bands_; }
  int pixels() const { return width_ * height_; }
  int window() const { return window_; }
  int total_rows() const { return offset_.back(); }
  int rows(int l) const { return offset_[l + 1] - offset_[l]; }
  const std::vector<int>& offsets() const { return offset_; }
  const NeighborhoodGraph* graph() const { return graph_; }

  TensorField create_field() const {
    TensorField f;
    f.cols = bands_;
    f.offset = offset_;
    f.value.assign(static_cast<std::size_t>(total_rows()) * bands_, 0.0);
    return f;
  }

  void analyze(const MultibandImage& x, TensorField& out) const {
    if (x.width != width_ || x.height != height_ || x.bands != bands_)
      throw std::invalid_argument("AnalysisOperator::analyze: image shape mismatch");
    if (out.cols != bands_ || out.offset != offset_) out = create_field();
    const int n = pixels();
    if (graph_) {
      for (int l = 0; l < n; ++l) {
        double* b = out.block(l);
        const int deg = graph_->degree(l);
        const int g0 = graph_->offset[l];
        for (int k = 0; k < deg; ++k) {
          const int nb = graph_->neighbor[g0 + k];
          const double w = graph_->weight[g0 + k];
          for (int r = 0; r < bands_; ++r)
            b[static_cast<std::size_t>(k) * bands_ + r] = w * (x.at(r, l) - x.at(r, nb));
        }
      }
    } else {
      for (int l = 0; l < n; ++l) {
        const int row = l / width_, col = l % width_;
        const int n1 = row * width_ + mirror_index(col + 1, width_);
        const int n2 = mirror_index(row + 1, height_) * width_ + col;
        double* b = out.block(l);
        for (int r = 0; r < bands_; ++r) {
          b[r] = x.at(r, l) - x.at(r, n1);
          b[bands_ + r] = x.at(r, l) - x.at(r, n2);
        }
      }
    }
  }

  TensorField analyze(const MultibandImage& x) const {
    TensorField f = create_field();
    analyze(x, f);
    return f;
  }

  void adjoint(const TensorField& X, MultibandImage& out) const {
    if (X.cols != bands_ || X.offset != offset_)
      throw std::invalid_argument("AnalysisOperator::adjoint: field shape mismatch");
    if (out.width != width_ || out.height != height_ || out.bands != bands_)
      out = MultibandImage(width_, height_, bands_);
    else
      std::fill(out.data.begin(), out.data.end(), 0.0);
    const int n = pixels();
    if (graph_) {
      for (int l = 0; l < n; ++l) {
        const double* b = X.block(l);
        const int deg = graph_->degree(l);
        const int g0 = graph_->offset[l];
        for (int k = 0; k < deg; ++k) {
          const int nb = graph_->neighbor[g0 + k];
          const double w = graph_->weight[g0 + k];
          for (int r = 0; r < bands_; ++r) {
            const double v = w * b[static_cast<std::size_t>(k) * bands_ + r];
            out.at(r, l) += v;
            out.at(r, nb) -= v;
          }
        }
      }
    } else {
      for (int l = 0; l < n; ++l) {
        const int row = l / width_, col = l % width_;
        const int n1 = row * width_ + mirror_index(col + 1, width_);
        const int n2 = mirror_index(row + 1, height_) * width_ + col;
        const double* b = X.block(l);
        for (int r = 0; r < bands_; ++r) {
          out.at(r, l) += b[r];
          out.at(r, n1) -= b[r];
          out.at(r, l) += b[bands_ + r];
          out.at(r, n2) -= b[bands_ + r];
        }
      }
    }
  }

  MultibandImage adjoint(const TensorField& X) const {
    MultibandImage out(width_, height_, bands_);
    adjoint(X, out);
    return out;
  }

 private:
  Regularizer kind_;
  int width_, height_, bands_;
  const NeighborhoodGraph* graph_;
  int window_ = 2;
  std::vector<int> offset_;
};

struct NormEstimate {
  double value = 0.0;  // inflated bound: raw * 1.01
  double raw = 0.0;    // power-iteration estimate of the spectral norm
  int iterations = 0;
  bool converged = false;
};

// Spectral norm estimate by power iteration on op^T op, from a seeded random
// start. The returned bound carries a 1% inflation so downstream step-size
// conditions survive the estimation error.
template <class Apply, class Adjoint>
NormEstimate operator_norm(Apply&& apply, Adjoint&& adjoint, int domain_dim, int range_dim,
                           double tol = 1e-4, int max_iter = 1000, std::uint64_t seed = 1234) {
  std::mt19937_64 gen(seed);
  std::vector<double> v(domain_dim), w(range_dim), u(domain_dim);
  for (double& e : v)
    e = static_cast<double>(gen() >> 11) * (2.0 / 9007199254740992.0) - 1.0;
  double nv = detail::norm2(v);
  if (nv == 0.0) v[0] = nv = 1.0;
  detail::scale(v, 1.0 / nv);

  NormEstimate est;
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    apply(v, w);
    adjoint(w, u);
    const double next = detail::norm2(u);  // ||op^T op v|| -> top eigenvalue
    est.iterations = it + 1;
    if (next == 0.0) {
      est.raw = 0.0;
      est.value = 0.0;
      est.converged = true;
      return est;
    }
    const bool done = std::abs(next - lambda) <= tol * next;
    lambda = next;
    detail::scale(u, 1.0 / next);
    v.swap(u);
    if (done) {
      est.converged = true;
      break;
    }
  }
  est.raw = std::sqrt(lambda);
  est.value = est.raw * 1.01;
  return est;
}

inline NormEstimate operator_norm(const DegradationOperator& a, double tol = 1e-4,
                                  int max_iter = 1000, std::uint64_t seed = 1234) {
  const int w = a.width(), h = a.height(), r = a.bands();
  auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
    MultibandImage img(w, h, r);
    img.data = in;
    a.apply(img, out);
  };
  auto adjoint = [&](const std::vector<double>& in, std::vector<double>& out) {
    out = a.adjoint(in).data;
  };
  return operator_norm(apply, adjoint, a.domain_size(), a.range_size(), tol, max_iter, seed);
}

inline NormEstimate operator_norm(const AnalysisOperator& phi, double tol = 1e-4,
                                  int max_iter = 1000, std::uint64_t seed = 1234) {
  const int w = phi.width(), h = phi.height(), r = phi.bands();
  TensorField f = phi.create_field();
  auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
    MultibandImage img(w, h, r);
    img.data = in;
    phi.analyze(img, f);
    out = f.value;
  };
  auto adjoint = [&](const std::vector<double>& in, std::vector<double>& out) {
    TensorField g = phi.create_field();
    g.value = in;
    out = phi.adjoint(g).data;
  };
  return operator_norm(apply, adjoint, w * h * r,
                       phi.total_rows() * r, tol, max_iter, seed);
}

}  // namespace stnltv
