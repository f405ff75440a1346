#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "oracles.hpp"
#include "stnltv/operators.hpp"

using namespace stnltv;

namespace {

std::mt19937 gen(11);

double urand(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(gen);
}

MultibandImage random_image(int w, int h, int r) {
  MultibandImage img(w, h, r);
  for (double& v : img.data) v = urand(-2, 2);
  return img;
}

std::vector<std::vector<int>> random_masks(int n, int k, int bands) {
  std::vector<std::vector<int>> masks(bands);
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (auto& m : masks) {
    std::shuffle(pool.begin(), pool.end(), gen);
    m.assign(pool.begin(), pool.begin() + k);
    std::sort(m.begin(), m.end());
  }
  return masks;
}

NeighborhoodGraph hand_graph_3x3() {
  // Two neighbors per pixel with fixed (0.6, 0.4) weights: next and
  // next-next pixel cyclically.
  NeighborhoodGraph g;
  g.pixels = 9;
  g.offset.assign(10, 0);
  for (int l = 0; l < 9; ++l) {
    int a = (l + 1) % 9, b = (l + 2) % 9;
    if (a > b) std::swap(a, b);
    g.neighbor.push_back(a);
    g.neighbor.push_back(b);
    g.weight.push_back(0.6);
    g.weight.push_back(0.4);
    g.offset[l + 1] = 2 * (l + 1);
  }
  return g;
}

}  // namespace

TEST(Degradation, IdentityOperator) {
  const int n = 12;
  std::vector<std::vector<int>> full(2);
  for (auto& m : full) {
    m.resize(n);
    std::iota(m.begin(), m.end(), 0);
  }
  DegradationOperator a(4, 3, 2, 1, full);
  const MultibandImage x = random_image(4, 3, 2);
  std::vector<double> y;
  a.apply(x, y);
  ASSERT_EQ(y.size(), x.data.size());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], x.data[i]);
  const MultibandImage back = a.adjoint(y);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(back.data[i], x.data[i]);
}

TEST(Degradation, BlurPreservesConstants) {
  MultibandImage x(5, 5, 1);
  std::fill(x.data.begin(), x.data.end(), 3.5);
  DegradationOperator a(5, 5, 1, 3, random_masks(25, 7, 1));
  std::vector<double> y;
  a.apply(x, y);
  for (double v : y) EXPECT_NEAR(v, 3.5, 1e-12);
}

TEST(Degradation, MatchesDenseMatrix) {
  MultibandImage x(4, 4, 1);
  for (int l = 0; l < 16; ++l) x.at(0, l) = l + 1;
  DegradationOperator a(4, 4, 1, 3, random_masks(16, 4, 1));
  const Eigen::MatrixXd M = oracle::materialize_degradation(a);
  Eigen::VectorXd xv(16);
  for (int i = 0; i < 16; ++i) xv[i] = x.data[i];
  const Eigen::VectorXd want = M * xv;
  std::vector<double> y;
  a.apply(x, y);
  for (int i = 0; i < want.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-12);

  // Adjoint against the dense transpose.
  std::vector<double> u(a.range_size());
  for (double& v : u) v = urand(-1, 1);
  Eigen::VectorXd uv(a.range_size());
  for (int i = 0; i < a.range_size(); ++i) uv[i] = u[i];
  const Eigen::VectorXd wantT = M.transpose() * uv;
  const MultibandImage at = a.adjoint(u);
  for (int i = 0; i < wantT.size(); ++i) EXPECT_NEAR(at.data[i], wantT[i], 1e-12);
}

TEST(Degradation, AdjointIdentityRandomized) {
  for (int blur : {1, 3, 5}) {
    DegradationOperator a(6, 5, 3, blur, random_masks(30, 11, 3));
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const MultibandImage x = random_image(6, 5, 3);
      std::vector<double> y(a.range_size());
      for (double& v : y) v = urand(-1, 1);
      std::vector<double> ax;
      a.apply(x, ax);
      const MultibandImage aty = a.adjoint(y);
      const double lhs = detail::dot(ax, y);
      const double rhs = detail::dot(x.data, aty.data);
      worst = std::max(worst, std::fabs(lhs - rhs) / std::max(1.0, std::fabs(lhs)));
    }
    EXPECT_LE(worst, 1e-10);
  }
}

TEST(Analysis, ConstantImageGivesZeroField) {
  for (Regularizer kind : {Regularizer::ST_TV, Regularizer::CC_TV}) {
    MultibandImage x(3, 3, 2);
    std::fill(x.data.begin(), x.data.end(), 4.0);
    AnalysisOperator phi(kind, 3, 3, 2);
    const TensorField f = phi.analyze(x);
    for (double v : f.value) EXPECT_EQ(v, 0.0);
  }
}

TEST(Analysis, TvRowsOnTwoPixelImage) {
  // 2x1 single-band image (a, b): horizontal difference row then a zero
  // vertical row (the lower neighbor mirrors onto the pixel itself).
  MultibandImage x(2, 1, 1);
  x.at(0, 0) = 5.0;  // a
  x.at(0, 1) = 2.0;  // b
  AnalysisOperator phi(Regularizer::ST_TV, 2, 1, 1);
  const TensorField f = phi.analyze(x);
  ASSERT_EQ(f.rows(0), 2);
  EXPECT_EQ(f.block(0)[0], 3.0);  // a - b
  EXPECT_EQ(f.block(0)[1], 0.0);
  // Second pixel: right neighbor mirrors to itself, lower mirrors to itself.
  EXPECT_EQ(f.block(1)[0], 0.0);
  EXPECT_EQ(f.block(1)[1], 0.0);
}

TEST(Analysis, NltvMatchesHandComputation) {
  const NeighborhoodGraph g = hand_graph_3x3();
  MultibandImage x(3, 3, 1);
  for (int l = 0; l < 9; ++l) x.at(0, l) = (l * 7) % 5 - 1.5;
  AnalysisOperator phi(Regularizer::ST_NLTV, 3, 3, 1, &g);
  const TensorField f = phi.analyze(x);
  for (int l = 0; l < 9; ++l) {
    ASSERT_EQ(f.rows(l), 2);
    for (int k = 0; k < 2; ++k) {
      const int nb = g.neighbor[g.offset[l] + k];
      const double w = g.weight[g.offset[l] + k];
      EXPECT_NEAR(f.block(l)[k], w * (x.at(0, l) - x.at(0, nb)), 1e-14);
    }
  }
}

TEST(Analysis, MissingGraphIsConfigError) {
  EXPECT_THROW(AnalysisOperator(Regularizer::ST_NLTV, 3, 3, 1), ConfigError);
}

TEST(Analysis, AdjointZeroAndRandomizedIdentity) {
  const NeighborhoodGraph g = hand_graph_3x3();
  std::vector<AnalysisOperator> ops;
  ops.emplace_back(Regularizer::ST_TV, 3, 3, 2);
  ops.emplace_back(Regularizer::CC_TV, 3, 3, 2);
  ops.emplace_back(Regularizer::ST_NLTV, 3, 3, 2, &g);
  for (const auto& phi : ops) {
    TensorField zero = phi.create_field();
    const MultibandImage z = phi.adjoint(zero);
    for (double v : z.data) EXPECT_EQ(v, 0.0);

    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const MultibandImage x = random_image(3, 3, 2);
      TensorField f = phi.create_field();
      for (double& v : f.value) v = urand(-1, 1);
      const TensorField phix = phi.analyze(x);
      const MultibandImage phit = phi.adjoint(f);
      const double lhs = detail::dot(phix.value, f.value);
      const double rhs = detail::dot(x.data, phit.data);
      worst = std::max(worst, std::fabs(lhs - rhs) / std::max(1.0, std::fabs(lhs)));
    }
    EXPECT_LE(worst, 1e-10);
  }
}

TEST(Analysis, AdjointMatchesDenseTranspose) {
  AnalysisOperator phi(Regularizer::ST_TV, 3, 3, 2);
  const Eigen::MatrixXd M = oracle::materialize_analysis(phi);
  TensorField f = phi.create_field();
  for (double& v : f.value) v = urand(-1, 1);
  Eigen::VectorXd fv(static_cast<int>(f.value.size()));
  for (std::size_t i = 0; i < f.value.size(); ++i) fv[static_cast<int>(i)] = f.value[i];
  const Eigen::VectorXd want = M.transpose() * fv;
  const MultibandImage at = phi.adjoint(f);
  for (int i = 0; i < want.size(); ++i) EXPECT_NEAR(at.data[i], want[i], 1e-12);
}

TEST(Analysis, LinearityOfAnalyze) {
  AnalysisOperator phi(Regularizer::ST_TV, 4, 3, 2);
  const MultibandImage x = random_image(4, 3, 2);
  const MultibandImage y = random_image(4, 3, 2);
  const double a = 1.7, b = -0.4;
  MultibandImage comb(4, 3, 2);
  for (std::size_t i = 0; i < comb.data.size(); ++i)
    comb.data[i] = a * x.data[i] + b * y.data[i];
  const TensorField fx = phi.analyze(x), fy = phi.analyze(y), fc = phi.analyze(comb);
  for (std::size_t i = 0; i < fc.value.size(); ++i)
    EXPECT_NEAR(fc.value[i], a * fx.value[i] + b * fy.value[i], 1e-12);
}

TEST(Analysis, ChannelVariantsShareTheLinearMap) {
  const NeighborhoodGraph g = hand_graph_3x3();
  const MultibandImage x = random_image(3, 3, 2);
  AnalysisOperator st(Regularizer::ST_NLTV, 3, 3, 2, &g);
  AnalysisOperator cc(Regularizer::CC_NLTV, 3, 3, 2, &g);
  const TensorField a = st.analyze(x), b = cc.analyze(x);
  ASSERT_EQ(a.value.size(), b.value.size());
  for (std::size_t i = 0; i < a.value.size(); ++i) EXPECT_EQ(a.value[i], b.value[i]);
}

TEST(OperatorNorm, IdentityAndDiagonal) {
  auto id = [](const std::vector<double>& in, std::vector<double>& out) { out = in; };
  const NormEstimate e = operator_norm(id, id, 5, 5);
  EXPECT_TRUE(e.converged);
  EXPECT_NEAR(e.raw, 1.0, 1e-3);
  EXPECT_NEAR(e.value, e.raw * 1.01, 1e-12);

  auto diag = [](const std::vector<double>& in, std::vector<double>& out) {
    out = in;
    out[1] *= 2.0;
    out[2] *= 3.0;
  };
  const NormEstimate d = operator_norm(diag, diag, 3, 3, 1e-6, 5000);
  EXPECT_TRUE(d.converged);
  EXPECT_NEAR(d.raw, 3.0, 1e-2);
}

TEST(OperatorNorm, MatchesDenseSvdForTv) {
  AnalysisOperator phi(Regularizer::ST_TV, 8, 8, 1);
  const NormEstimate e = operator_norm(phi, 1e-6, 20000);
  const Eigen::MatrixXd M = oracle::materialize_analysis(phi);
  const double truth = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()[0];
  EXPECT_NEAR(e.raw, truth, 0.01 * truth);
  EXPECT_GE(e.value, truth);  // inflated bound dominates the true norm
}
