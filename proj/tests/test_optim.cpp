#include <cmath>

#include <gtest/gtest.h>

#include "genrec/optim.hpp"
#include "test_util.hpp"

using namespace genrec;

namespace {

// Scalar reference: clip by global norm, Adam moments with bias correction,
// decoupled decay for tensors with more than one row.
struct RefAdam {
  AdamWConfig cfg;
  std::vector<std::vector<double>> m, v;
  int t = 0;

  void step(std::vector<MatD>& p, const std::vector<MatD>& g, double grad_scale) {
    if (m.empty())
      for (const auto& x : p) m.emplace_back(x.size(), 0.0), v.emplace_back(x.size(), 0.0);
    double sq = 0;
    for (const auto& x : g)
      for (Eigen::Index i = 0; i < x.size(); ++i) sq += x.data()[i] * x.data()[i];
    double s = grad_scale;
    const double norm = std::sqrt(sq) * std::abs(s);
    if (cfg.clip_norm > 0 && norm > cfg.clip_norm) s *= cfg.clip_norm / norm;
    ++t;
    for (size_t k = 0; k < p.size(); ++k)
      for (Eigen::Index i = 0; i < p[k].size(); ++i) {
        const double gi = g[k].data()[i] * s;
        auto& mi = m[k][static_cast<size_t>(i)];
        auto& vi = v[k][static_cast<size_t>(i)];
        mi = cfg.beta1 * mi + (1 - cfg.beta1) * gi;
        vi = cfg.beta2 * vi + (1 - cfg.beta2) * gi * gi;
        const double mh = mi / (1 - std::pow(cfg.beta1, t));
        const double vh = vi / (1 - std::pow(cfg.beta2, t));
        double& x = p[k].data()[i];
        if (p[k].rows() > 1) x -= cfg.lr * cfg.weight_decay * x;
        x -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
      }
  }
};

}  // namespace

TEST(AdamW, FirstStepByHand) {
  ParameterSet<double> p;
  p.add("w", MatD::Constant(1, 1, 1.0));
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0;
  cfg.clip_norm = 0;
  AdamW<double> opt(p, cfg);
  GradSet<double> g(p);
  g.grads[0](0, 0) = 0.5;
  opt.step(p, g);
  // Bias-corrected first step moves by lr * g / (|g| + eps).
  EXPECT_NEAR(p.tensors[0].value(0, 0), 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamW, MatchesScalarReferenceOverManySteps) {
  Rng rng(4);
  ParameterSet<double> p;
  p.add("matrix", MatD::Random(3, 4));
  p.add("bias", MatD::Random(1, 4));
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  cfg.clip_norm = 0.8;
  AdamW<double> opt(p, cfg);
  RefAdam ref{cfg, {}, {}, 0};
  std::vector<MatD> rp = {p.tensors[0].value, p.tensors[1].value};
  for (int step = 0; step < 25; ++step) {
    GradSet<double> g(p);
    for (auto& x : g.grads)
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal() * (step % 3 + 0.1);
    const double scale = 1.0 / (1 + step % 4);
    opt.step(p, g, scale);
    ref.step(rp, g.grads, scale);
  }
  EXPECT_LT((p.tensors[0].value - rp[0]).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p.tensors[1].value - rp[1]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdamW, DecayOnlyTouchesMatrices) {
  ParameterSet<double> p;
  p.add("matrix", MatD::Ones(2, 2));
  p.add("bias", MatD::Ones(1, 2));
  AdamWConfig cfg;
  cfg.lr = 0.5;
  cfg.weight_decay = 0.2;
  AdamW<double> opt(p, cfg);
  opt.step(p, GradSet<double>(p));  // zero gradient: only decay acts
  EXPECT_DOUBLE_EQ(p.tensors[0].value(0, 0), 0.9);
  EXPECT_DOUBLE_EQ(p.tensors[1].value(0, 0), 1.0);
}

TEST(AdamW, ClippingBoundsTheEffectiveGradient) {
  // With clipping, scaling the gradient by any factor above the threshold
  // yields the same update.
  auto run = [](double mag) {
    ParameterSet<double> p;
    p.add("w", MatD::Zero(1, 3));
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.clip_norm = 1.0;
    cfg.beta2 = 0.5;
    AdamW<double> opt(p, cfg);
    GradSet<double> g(p);
    g.grads[0] << 3 * mag, 4 * mag, 0;
    opt.step(p, g);
    g.grads[0] << 0.3, -0.4, 0.1;
    opt.step(p, g);
    return p.tensors[0].value;
  };
  EXPECT_LT((run(10) - run(1000)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((run(10) - run(0.01)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AdamW, NonFiniteGradientLeavesParametersUntouched) {
  ParameterSet<double> p;
  p.add("ok", MatD::Ones(2, 2));
  p.add("broken", MatD::Ones(1, 2));
  AdamW<double> opt(p, {});
  GradSet<double> g(p);
  g.grads[0].setConstant(0.1);
  g.grads[1](0, 1) = std::nan("");
  try {
    opt.step(p, g);
    FAIL() << "expected non_finite_gradient";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "non_finite_gradient");
    EXPECT_NE(std::string(e.what()).find("broken"), std::string::npos);
  }
  EXPECT_EQ(p.tensors[0].value, MatD::Ones(2, 2));
  EXPECT_EQ(opt.steps(), 0);
  GradSet<double> wrong;
  wrong.grads.push_back(MatD::Zero(2, 2));
  EXPECT_GENREC_ERROR(opt.step(p, wrong), "shape_mismatch");
  AdamWConfig bad;
  bad.beta1 = 1.0;
  EXPECT_GENREC_ERROR(AdamW<double>(p, bad), "invalid_config");
}
