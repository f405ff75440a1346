#pragma once
// Primal-dual solvers for
//
//   minimize ||A x - z||^2  subject to  x in [lo,hi]^(N*R),  Phi x in D,
//   D = { X : sum_l tau_l ||X^(l)||_p <= eta }.
//
// Two algorithms, each in two modes:
//   - mlfbf_solve: a forward-backward-forward primal-dual iteration needing
//     only operator applications, adjoints and projections;
//   - sdmm_solve: an ADMM-style splitting whose x-update solves
//     H x = rhs with H = Id + G^T G + A^T A by warm-started CG, where
//     Phi = (weighted row selection) o G and G stacks all in-window
//     difference operators.
// Mode Epigraphical rewrites the D constraint as per-group epigraphs plus one
// half-space; mode Direct projects onto D itself via ball projectors.

#include <chrono>

#include "stnltv/projections.hpp"

namespace stnltv {

struct ProblemInstance {
  const DegradedObservation* obs = nullptr;
  const DegradationOperator* A = nullptr;
  const AnalysisOperator* Phi = nullptr;
  ConstraintSpec constraint;

  void validate() const {
    if (!obs || !A || !Phi) throw ConfigError("ProblemInstance: missing component");
    obs->validate();
    if (obs->bands != A->bands() || obs->kept != A->kept() || obs->width != A->width() ||
        obs->height != A->height())
      throw ConfigError("ProblemInstance: observation/operator shape mismatch");
    if (A->width() != Phi->width() || A->height() != Phi->height() ||
        A->bands() != Phi->bands())
      throw ConfigError("ProblemInstance: degradation/analysis shape mismatch");
    constraint.validate(Phi->pixels());
  }
};

enum class SolverMode { Epigraphical, Direct };

struct SolverConfig {
  int max_iter = 1000;
  double stop_tol = 1e-5;   // relative change ||x+ - x|| <= stop_tol ||x||
  double epsilon = 0.01;    // step margin; must satisfy 0 < eps < 1/(theta+1)
  double gamma = 1.0;       // SDMM penalty parameter
  SolverMode mode = SolverMode::Epigraphical;
  std::uint64_t seed = 1234;  // power-iteration start
  double cg_tol = 1e-8;
  int cg_max_iter = 500;
  int log_stride = 0;  // 0 = auto: 1, or 10 beyond 1e5 unknowns
  const MultibandImage* reference = nullptr;  // optional: track error against it
};

struct SolverTrace {
  std::vector<int> iteration;
  std::vector<double> seconds;
  std::vector<double> rel_change;
  std::vector<double> feasibility_gap;  // g(x) - eta
  std::vector<double> fidelity;         // ||A x - z||^2
  std::vector<double> reference_error;  // filled only when a reference is set
};

struct SolverResult {
  MultibandImage x;
  SolverTrace trace;
  int iterations = 0;
  bool converged = false;
  double seconds = 0.0;
  double theta = 0.0;  // operator-norm bound used for the step size
};

// prox of gamma*||. - z||^2 : closed form (y + 2 gamma z) / (1 + 2 gamma).
inline void prox_quadratic(std::span<double> y, std::span<const double> z, double gamma) {
  assert(y.size() == z.size());
  if (!(gamma > 0.0)) throw std::invalid_argument("prox_quadratic: gamma must be > 0");
  const double a = 2.0 * gamma;
  const double inv = 1.0 / (1.0 + a);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (y[i] + a * z[i]) * inv;
}

inline std::vector<double> relative_error_trace(std::span<const MultibandImage> iterates,
                                                const MultibandImage& ref) {
  const double nr = detail::norm2(ref.data);
  if (nr == 0.0) throw std::invalid_argument("relative_error_trace: zero reference");
  std::vector<double> out;
  out.reserve(iterates.size());
  std::vector<double> diff(ref.data.size());
  for (const auto& it : iterates) {
    if (!it.same_shape(ref))
      throw std::invalid_argument("relative_error_trace: shape mismatch");
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = it.data[i] - ref.data[i];
    out.push_back(detail::norm2(diff) / nr);
  }
  return out;
}

namespace detail {

inline int auto_stride(int unknowns, int requested) {
  if (requested > 0) return requested;
  return unknowns > 100000 ? 10 : 1;
}

inline double relative_to(double num, double den) {
  return den > 0.0 ? num / den : num;
}

struct StepLog {
  SolverTrace* trace;
  std::chrono::steady_clock::time_point start;
  const MultibandImage* reference;
  double ref_norm = 0.0;

  void log(int iter, double rel, double gap, double fid, const MultibandImage& cand) {
    trace->iteration.push_back(iter);
    trace->seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    trace->rel_change.push_back(rel);
    trace->feasibility_gap.push_back(gap);
    trace->fidelity.push_back(fid);
    if (reference) {
      double acc = 0.0;
      for (std::size_t i = 0; i < cand.data.size(); ++i) {
        const double d = cand.data[i] - reference->data[i];
        acc += d * d;
      }
      trace->reference_error.push_back(std::sqrt(acc) / ref_norm);
    }
  }
};

}  // namespace detail

inline SolverResult mlfbf_solve(const ProblemInstance& prob, const SolverConfig& cfg) {
  prob.validate();
  if (cfg.max_iter < 1 || !(cfg.stop_tol > 0.0))
    throw ConfigError("mlfbf_solve: bad stopping configuration");
  const auto t0 = std::chrono::steady_clock::now();
  const DegradationOperator& A = *prob.A;
  const AnalysisOperator& Phi = *prob.Phi;
  const ConstraintSpec& cs = prob.constraint;
  const int n = Phi.pixels();
  const int nr = n * Phi.bands();
  const bool epi = cfg.mode == SolverMode::Epigraphical;
  const std::vector<double>& z = prob.obs->values;

  const NormEstimate na = operator_norm(A, 1e-4, 1000, cfg.seed);
  const NormEstimate nphi = operator_norm(Phi, 1e-4, 1000, cfg.seed + 1);
  const double theta =
      std::sqrt(na.value * na.value + std::max(nphi.value * nphi.value, 1.0));
  if (!(cfg.epsilon > 0.0) || !(cfg.epsilon < 1.0 / (theta + 1.0)))
    throw ConfigError("mlfbf_solve: step margin must lie in (0, 1/(theta+1)), theta = " +
                      std::to_string(theta));
  const double gamma = (1.0 - cfg.epsilon) / theta;
  assert(gamma >= cfg.epsilon && gamma <= (1.0 - cfg.epsilon) / theta);

  // Auxiliary-variable layout and per-entry half-space weights.
  EpiLayout layout;
  std::vector<double> wzeta;
  if (epi) {
    layout = make_epi_layout(Phi, cs.p);
    wzeta.resize(layout.total());
    for (int l = 0; l < n; ++l)
      std::fill(wzeta.begin() + layout.offset[l], wzeta.begin() + layout.offset[l + 1],
                cs.tau_at(l));
  }
  const int L = epi ? layout.total() : 0;

  // State.
  MultibandImage x = A.adjoint(z);
  project_box(x.data, cs.box);
  TensorField PhiX = Phi.analyze(x);
  std::vector<double> zeta(L, 0.0);
  if (epi) fill_group_norms(PhiX, Phi, cs.p, layout, zeta);
  TensorField Y1 = Phi.create_field();
  std::vector<double> nu1(L, 0.0);
  std::vector<double> y2(z.size(), 0.0);

  // Buffers.
  MultibandImage img1(x.width, x.height, x.bands), img2 = img1;
  MultibandImage xhat = img1, p = img1, xt = img1;
  TensorField PhiP = Phi.create_field(), Yhat = Phi.create_field(), Epr = Phi.create_field();
  std::vector<double> zhat(L), rho(L), nuhat(L), ezeta(L);
  std::vector<double> Ax(z.size()), Ap(z.size()), yhat2(z.size());

  SolverResult res;
  res.theta = theta;
  detail::StepLog logger{&res.trace, t0, cfg.reference, 0.0};
  if (cfg.reference) {
    if (!cfg.reference->same_shape(x))
      throw ConfigError("mlfbf_solve: reference shape mismatch");
    logger.ref_norm = detail::norm2(cfg.reference->data);
    if (logger.ref_norm == 0.0) throw ConfigError("mlfbf_solve: zero reference");
  }
  const int stride = detail::auto_stride(nr, cfg.log_stride);
  int streak = 0;

  for (int t = 0; t < cfg.max_iter; ++t) {
    Phi.analyze(x, PhiX);
    A.apply(x, Ax);

    // Primal forward step and projections.
    Phi.adjoint(Y1, img1);
    A.adjoint(y2, img2);
    for (int i = 0; i < nr; ++i) xhat.data[i] = x.data[i] - gamma * (img1.data[i] + img2.data[i]);
    p.data = xhat.data;
    project_box(p.data, cs.box);
    if (epi) {
      for (int i = 0; i < L; ++i) zhat[i] = zeta[i] - gamma * nu1[i];
      rho = zhat;
      project_halfspace(rho, wzeta, cs.eta);
    }

    // Dual step for the analysis block, with the scaled projection.
    for (std::size_t i = 0; i < Yhat.value.size(); ++i)
      Yhat.value[i] = Y1.value[i] + gamma * PhiX.value[i];
    for (std::size_t i = 0; i < Epr.value.size(); ++i) Epr.value[i] = Yhat.value[i] / gamma;
    if (epi) {
      for (int i = 0; i < L; ++i) {
        nuhat[i] = nu1[i] + gamma * zeta[i];
        ezeta[i] = nuhat[i] / gamma;
      }
      project_epi_field(Epr, ezeta, Phi, cs.p, layout);
    } else {
      project_D_direct(Epr, Phi, cs);
    }
    for (std::size_t i = 0; i < Yhat.value.size(); ++i)
      Yhat.value[i] -= gamma * Epr.value[i];  // Yhat now holds the corrected dual
    if (epi)
      for (int i = 0; i < L; ++i) nuhat[i] -= gamma * ezeta[i];

    Phi.analyze(p, PhiP);
    for (std::size_t i = 0; i < Y1.value.size(); ++i)
      Y1.value[i] = Yhat.value[i] + gamma * (PhiP.value[i] - PhiX.value[i]);
    if (epi)
      for (int i = 0; i < L; ++i) nu1[i] = nuhat[i] + gamma * (rho[i] - zeta[i]);

    // Dual step for the data-fidelity block.
    A.apply(p, Ap);
    const double invg = 1.0 / gamma;
    const double c = 2.0 * invg;
    for (std::size_t i = 0; i < y2.size(); ++i) {
      yhat2[i] = y2[i] + gamma * Ax[i];
      const double w = (yhat2[i] * invg + c * z[i]) / (1.0 + c);
      yhat2[i] -= gamma * w;  // yhat2 now holds the corrected dual
      y2[i] = yhat2[i] + gamma * (Ap[i] - Ax[i]);
    }

    // Second primal step and the correction update.
    Phi.adjoint(Yhat, img1);
    A.adjoint(yhat2, img2);
    double dn = 0.0, xn = 0.0;
    for (int i = 0; i < nr; ++i) {
      xt.data[i] = p.data[i] - gamma * (img1.data[i] + img2.data[i]);
      const double d = xt.data[i] - xhat.data[i];
      dn += d * d;
      xn += x.data[i] * x.data[i];
      x.data[i] += d;
    }
    if (epi)
      for (int i = 0; i < L; ++i) zeta[i] += (rho[i] - gamma * nuhat[i]) - zhat[i];

    const double rel = detail::relative_to(std::sqrt(dn), std::sqrt(xn));
    if (!std::isfinite(rel))
      throw NumericalError("mlfbf_solve: divergence detected at iteration " + std::to_string(t + 1),
                           t + 1);
    res.iterations = t + 1;
    // The auxiliary blocks feed back into x with a short lag, so require the
    // x-change criterion to hold on a few consecutive iterations.
    streak = rel <= cfg.stop_tol ? streak + 1 : 0;
    const bool stop = streak >= 3 || t + 1 == cfg.max_iter;
    if ((t + 1) % stride == 0 || stop) {
      double fid = 0.0;
      for (std::size_t i = 0; i < Ap.size(); ++i) {
        const double d = Ap[i] - z[i];
        fid += d * d;
      }
      logger.log(t + 1, rel, g_value(PhiP, Phi, cs) - cs.eta, fid, p);
    }
    if (streak >= 3) {
      res.converged = true;
      break;
    }
  }
  res.x = p;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

namespace detail {

// SDMM splitting Phi = Omega o G: G stacks one mirrored difference operator
// per non-center window offset; Omega selects the graph rows with their
// weights. qmap/wrow align each field row with its G row.
struct SdmmSplitting {
  int parts = 0;                      // number of difference operators
  std::vector<std::vector<int>> target;  // per part, per pixel: mirrored neighbor
  std::vector<int> qmap;              // per field row: part index
  std::vector<double> wrow;           // per field row: selection weight

  SdmmSplitting(const AnalysisOperator& op) {
    const int q = op.window();
    const int w = op.width(), h = op.height();
    const int npix = op.pixels();
    const int h0 = (q % 2 == 1) ? -(q - 1) / 2 : 0;
    std::vector<std::pair<int, int>> offs;
    for (int dr = 0; dr < q; ++dr)
      for (int dc = 0; dc < q; ++dc)
        if (!(h0 + dr == 0 && h0 + dc == 0)) offs.emplace_back(h0 + dr, h0 + dc);
    parts = static_cast<int>(offs.size());
    target.assign(parts, std::vector<int>(npix));
    for (int p = 0; p < parts; ++p)
      for (int l = 0; l < npix; ++l) {
        const int row = l / w, col = l % w;
        target[p][l] =
            mirror_index(row + offs[p].first, h) * w + mirror_index(col + offs[p].second, w);
      }
    qmap.assign(op.total_rows(), -1);
    wrow.assign(op.total_rows(), 1.0);
    const NeighborhoodGraph* g = op.graph();
    for (int l = 0; l < npix; ++l) {
      const int base = op.offsets()[l];
      if (g) {
        for (int k = 0; k < g->degree(l); ++k) {
          const int nb = g->neighbor[g->offset[l] + k];
          int part = -1;
          for (int p = 0; p < parts; ++p)
            if (target[p][l] == nb) {
              part = p;
              break;
            }
          if (part < 0)
            throw ConfigError("sdmm_solve: graph neighbor outside the analysis window");
          qmap[base + k] = part;
          wrow[base + k] = g->weight[g->offset[l] + k];
        }
      } else {
        // TV rows: horizontal then vertical difference, both unit weight.
        qmap[base + 0] = 0;  // offset (0,1)
        qmap[base + 1] = 1;  // offset (1,0)
      }
    }
  }
};

}  // namespace detail

inline SolverResult sdmm_solve(const ProblemInstance& prob, const SolverConfig& cfg) {
  prob.validate();
  if (cfg.max_iter < 1 || !(cfg.stop_tol > 0.0) || !(cfg.gamma > 0.0))
    throw ConfigError("sdmm_solve: bad configuration");
  const auto t0 = std::chrono::steady_clock::now();
  const DegradationOperator& A = *prob.A;
  const AnalysisOperator& Phi = *prob.Phi;
  const ConstraintSpec& cs = prob.constraint;
  const int n = Phi.pixels();
  const int npix_r = n * Phi.bands();
  const int R = Phi.bands();
  const bool epi = cfg.mode == SolverMode::Epigraphical;
  const std::vector<double>& z = prob.obs->values;

  detail::SdmmSplitting split(Phi);
  const std::size_t gsize = static_cast<std::size_t>(split.parts) * npix_r;

  // G x: per part, band-major difference images.
  auto apply_G = [&](const std::vector<double>& in, std::vector<double>& out) {
    out.resize(gsize);
    for (int p = 0; p < split.parts; ++p) {
      const std::vector<int>& tg = split.target[p];
      double* o = out.data() + static_cast<std::size_t>(p) * npix_r;
      for (int r = 0; r < R; ++r) {
        const double* xr = in.data() + static_cast<std::size_t>(r) * n;
        double* orr = o + static_cast<std::size_t>(r) * n;
        for (int l = 0; l < n; ++l) orr[l] = xr[l] - xr[tg[l]];
      }
    }
  };
  auto apply_Gt_accum = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (int p = 0; p < split.parts; ++p) {
      const std::vector<int>& tg = split.target[p];
      const double* i0 = in.data() + static_cast<std::size_t>(p) * npix_r;
      for (int r = 0; r < R; ++r) {
        const double* ir = i0 + static_cast<std::size_t>(r) * n;
        double* orr = out.data() + static_cast<std::size_t>(r) * n;
        for (int l = 0; l < n; ++l) {
          orr[l] += ir[l];
          orr[tg[l]] -= ir[l];
        }
      }
    }
  };

  MultibandImage imgbuf(Phi.width(), Phi.height(), R), imgbuf2 = imgbuf;
  std::vector<double> obsbuf(z.size());
  // H v = v + G^T G v + A^T A v
  auto apply_H = [&](const std::vector<double>& in, std::vector<double>& out) {
    out = in;
    for (int p = 0; p < split.parts; ++p) {
      const std::vector<int>& tg = split.target[p];
      for (int r = 0; r < R; ++r) {
        const double* ir = in.data() + static_cast<std::size_t>(r) * n;
        double* orr = out.data() + static_cast<std::size_t>(r) * n;
        for (int l = 0; l < n; ++l) {
          const double d = ir[l] - ir[tg[l]];
          orr[l] += d;
          orr[tg[l]] -= d;
        }
      }
    }
    imgbuf.data = in;
    A.apply(imgbuf, obsbuf);
    A.adjoint(obsbuf, imgbuf2);
    for (int i = 0; i < npix_r; ++i) out[i] += imgbuf2.data[i];
  };

  // Warm-started conjugate gradient on the SPD system H x = rhs.
  std::vector<double> cg_r(npix_r), cg_p(npix_r), cg_hp(npix_r);
  auto cg_solve = [&](const std::vector<double>& rhs, std::vector<double>& xv) {
    apply_H(xv, cg_hp);
    for (int i = 0; i < npix_r; ++i) cg_r[i] = rhs[i] - cg_hp[i];
    const double nb = detail::norm2(rhs);
    double rs = detail::dot(cg_r, cg_r);
    if (std::sqrt(rs) <= cfg.cg_tol * std::max(nb, 1e-300)) return;
    cg_p = cg_r;
    for (int it = 0; it < cfg.cg_max_iter; ++it) {
      apply_H(cg_p, cg_hp);
      const double alpha = rs / detail::dot(cg_p, cg_hp);
      for (int i = 0; i < npix_r; ++i) {
        xv[i] += alpha * cg_p[i];
        cg_r[i] -= alpha * cg_hp[i];
      }
      const double rs2 = detail::dot(cg_r, cg_r);
      if (std::sqrt(rs2) <= cfg.cg_tol * std::max(nb, 1e-300)) return;
      const double beta = rs2 / rs;
      rs = rs2;
      for (int i = 0; i < npix_r; ++i) cg_p[i] = cg_r[i] + beta * cg_p[i];
    }
    throw NumericalError("sdmm_solve: CG stalled, residual " +
                         std::to_string(std::sqrt(rs) / std::max(nb, 1e-300)));
  };

  // Epigraphical layout.
  EpiLayout layout;
  std::vector<double> wzeta;
  if (epi) {
    layout = make_epi_layout(Phi, cs.p);
    wzeta.resize(layout.total());
    for (int l = 0; l < n; ++l)
      std::fill(wzeta.begin() + layout.offset[l], wzeta.begin() + layout.offset[l + 1],
                cs.tau_at(l));
  }
  const int L = epi ? layout.total() : 0;

  // Initialization: start every block consistently from the clamped
  // back-projection, so the first x-update reproduces it exactly.
  MultibandImage x0img = A.adjoint(z);
  project_box(x0img.data, cs.box);
  std::vector<double> x = x0img.data, xprev = x;
  std::vector<double> y1 = x, b1(npix_r, 0.0);
  std::vector<double> Y2, B2(gsize, 0.0), Gx;
  apply_G(x, Y2);
  Gx = Y2;
  std::vector<double> y3(z.size()), b3(z.size(), 0.0), Ax(z.size());
  imgbuf.data = x;
  A.apply(imgbuf, y3);
  TensorField phi0 = Phi.analyze(x0img);
  TensorField chiD = phi0, bchiD = Phi.create_field();   // D- or E-side dual for xi
  TensorField chiV = phi0, bchiV = Phi.create_field();   // V-side dual for xi
  TensorField xi = phi0, fieldbuf = Phi.create_field();
  std::vector<double> thE(L), bthE(L, 0.0), thW(L), bthW(L, 0.0), zv(L), zbuf(L);
  if (epi) {
    fill_group_norms(phi0, Phi, cs.p, layout, thE);
    thW = thE;
  }

  SolverResult res;
  detail::StepLog logger{&res.trace, t0, cfg.reference, 0.0};
  if (cfg.reference) {
    if (!cfg.reference->same_shape(x0img))
      throw ConfigError("sdmm_solve: reference shape mismatch");
    logger.ref_norm = detail::norm2(cfg.reference->data);
    if (logger.ref_norm == 0.0) throw ConfigError("sdmm_solve: zero reference");
  }
  const int stride = detail::auto_stride(npix_r, cfg.log_stride);
  int streak = 0;
  std::vector<double> rhs(npix_r);
  MultibandImage y1img = x0img;
  TensorField phiy1 = Phi.create_field();

  // G rows referenced by the selection operator; the rest project onto
  // themselves in P_V.
  std::vector<unsigned char> selected(gsize, 0);
  for (int l = 0; l < n; ++l) {
    const int base = Phi.offsets()[l];
    for (int k = 0; k < Phi.rows(l); ++k) {
      const int part = split.qmap[base + k];
      for (int r = 0; r < R; ++r)
        selected[static_cast<std::size_t>(part) * npix_r + static_cast<std::size_t>(r) * n + l] = 1;
    }
  }

  for (int t = 0; t < cfg.max_iter; ++t) {
    // x-update: H x = (y1 - b1) + G^T (Y2 - B2) + A^T (y3 - b3)
    for (int i = 0; i < npix_r; ++i) rhs[i] = y1[i] - b1[i];
    {
      std::vector<double> gdiff(gsize);
      for (std::size_t i = 0; i < gsize; ++i) gdiff[i] = Y2[i] - B2[i];
      apply_Gt_accum(gdiff, rhs);
      for (std::size_t i = 0; i < z.size(); ++i) obsbuf[i] = y3[i] - b3[i];
      A.adjoint(obsbuf, imgbuf2);
      for (int i = 0; i < npix_r; ++i) rhs[i] += imgbuf2.data[i];
    }
    cg_solve(rhs, x);

    // xi-update and, in epigraphical mode, the zeta-update.
    for (std::size_t i = 0; i < xi.value.size(); ++i)
      xi.value[i] = 0.5 * (chiD.value[i] - bchiD.value[i]) + 0.5 * (chiV.value[i] - bchiV.value[i]);
    if (epi)
      for (int i = 0; i < L; ++i) zv[i] = 0.5 * (thE[i] - bthE[i]) + 0.5 * (thW[i] - bthW[i]);

    apply_G(x, Gx);
    imgbuf.data = x;
    A.apply(imgbuf, Ax);

    // Proximity/projection updates followed by the multiplier updates.
    for (int i = 0; i < npix_r; ++i) y1img.data[i] = x[i] + b1[i];
    project_box(y1img.data, cs.box);
    for (int i = 0; i < npix_r; ++i) {
      b1[i] += x[i] - y1img.data[i];
      y1[i] = y1img.data[i];
    }

    for (std::size_t i = 0; i < fieldbuf.value.size(); ++i)
      fieldbuf.value[i] = xi.value[i] + bchiD.value[i];
    if (epi) {
      for (int i = 0; i < L; ++i) zbuf[i] = zv[i] + bthE[i];
      project_epi_field(fieldbuf, zbuf, Phi, cs.p, layout);
      for (int i = 0; i < L; ++i) {
        bthE[i] += zv[i] - zbuf[i];
        thE[i] = zbuf[i];
      }
    } else {
      project_D_direct(fieldbuf, Phi, cs);
    }
    for (std::size_t i = 0; i < fieldbuf.value.size(); ++i) {
      bchiD.value[i] += xi.value[i] - fieldbuf.value[i];
      chiD.value[i] = fieldbuf.value[i];
    }

    // P_V: couple each selected G row with its field row in closed form.
    for (int l = 0; l < n; ++l) {
      const int base = Phi.offsets()[l];
      const int rows = Phi.rows(l);
      for (int k = 0; k < rows; ++k) {
        const int part = split.qmap[base + k];
        const double w = split.wrow[base + k];
        const double denom = 1.0 / (1.0 + w * w);
        double* grow = Y2.data() + static_cast<std::size_t>(part) * npix_r;
        const double* gxrow = Gx.data() + static_cast<std::size_t>(part) * npix_r;
        const double* brow = B2.data() + static_cast<std::size_t>(part) * npix_r;
        double* frow = chiV.value.data() + static_cast<std::size_t>(base + k) * R;
        double* bfrow = bchiV.value.data() + static_cast<std::size_t>(base + k) * R;
        const double* xirow = xi.value.data() + static_cast<std::size_t>(base + k) * R;
        for (int r = 0; r < R; ++r) {
          const std::size_t gi = static_cast<std::size_t>(r) * n + l;
          const double u = gxrow[gi] + brow[gi];
          const double v = xirow[r] + bfrow[r];
          const double unew = (u + w * v) * denom;
          const double vnew = w * unew;
          grow[gi] = unew;
          bfrow[r] += xirow[r] - vnew;
          frow[r] = vnew;
        }
      }
    }
    // Unselected G rows project to themselves; finish the Y2/B2 update.
    for (std::size_t i = 0; i < gsize; ++i) {
      if (!selected[i]) Y2[i] = Gx[i] + B2[i];
      B2[i] += Gx[i] - Y2[i];
    }

    for (std::size_t i = 0; i < z.size(); ++i) obsbuf[i] = Ax[i] + b3[i];
    prox_quadratic(obsbuf, z, cfg.gamma);
    for (std::size_t i = 0; i < z.size(); ++i) {
      b3[i] += Ax[i] - obsbuf[i];
      y3[i] = obsbuf[i];
    }

    if (epi) {
      for (int i = 0; i < L; ++i) zbuf[i] = zv[i] + bthW[i];
      project_halfspace(zbuf, wzeta, cs.eta);
      for (int i = 0; i < L; ++i) {
        bthW[i] += zv[i] - zbuf[i];
        thW[i] = zbuf[i];
      }
    }

    double dn = 0.0, xn = 0.0;
    for (int i = 0; i < npix_r; ++i) {
      const double d = x[i] - xprev[i];
      dn += d * d;
      xn += xprev[i] * xprev[i];
    }
    xprev = x;
    const double rel = t == 0 ? 1.0 : detail::relative_to(std::sqrt(dn), std::sqrt(xn));
    if (!std::isfinite(rel) || !std::isfinite(detail::norm2(x)))
      throw NumericalError("sdmm_solve: divergence detected at iteration " + std::to_string(t + 1),
                           t + 1);
    res.iterations = t + 1;
    // Multiplier blocks reach x only through the next linear solve; ask for a
    // few consecutive quiet iterations before declaring convergence.
    streak = (t > 0 && rel <= cfg.stop_tol) ? streak + 1 : 0;
    const bool stop = streak >= 3 || t + 1 == cfg.max_iter;
    if ((t + 1) % stride == 0 || stop) {
      Phi.analyze(y1img, phiy1);
      A.apply(y1img, obsbuf);
      double fid = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = obsbuf[i] - z[i];
        fid += d * d;
      }
      logger.log(t + 1, rel, g_value(phiy1, Phi, cs) - cs.eta, fid, y1img);
    }
    if (streak >= 3) {
      res.converged = true;
      break;
    }
  }
  res.x = y1img;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline SolverConfig bootstrap_defaults() {
  SolverConfig cfg;
  cfg.max_iter = 300;
  cfg.stop_tol = 1e-4;
  return cfg;
}

// First step of the two-step non-local weight estimation: a TV-constrained
// restoration whose result seeds the patch-similarity weights.
inline MultibandImage bootstrap_estimate(const DegradedObservation& obs,
                                         const DegradationOperator& A,
                                         const ConstraintSpec& constraint,
                                         const SolverConfig& cfg = bootstrap_defaults()) {
  AnalysisOperator tv(Regularizer::ST_TV, A.width(), A.height(), A.bands());
  ProblemInstance prob;
  prob.obs = &obs;
  prob.A = &A;
  prob.Phi = &tv;
  prob.constraint = constraint;
  return mlfbf_solve(prob, cfg).x;
}

}  // namespace stnltv
