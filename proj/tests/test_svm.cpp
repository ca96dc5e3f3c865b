#include "aura/classifiers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace aura;
using namespace aura::classify;

namespace {

struct Dataset {
  Eigen::MatrixXd X;
  std::vector<Label> labels;
};

Dataset clusters(int per_class, double separation, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.X.resize(2 * per_class, 2);
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool pos = i < per_class;
    d.X(i, 0) = (pos ? separation : -separation) + 0.3 * rng.normal();
    d.X(i, 1) = 0.3 * rng.normal();
    d.labels.push_back(pos ? Positive : Negative);
  }
  return d;
}

Eigen::MatrixXd grid() {
  Eigen::MatrixXd g(121, 2);
  int k = 0;
  for (int i = -5; i <= 5; ++i)
    for (int j = -5; j <= 5; ++j) {
      g(k, 0) = 0.5 * i;
      g(k, 1) = 0.5 * j;
      ++k;
    }
  return g;
}

}  // namespace

TEST(Svm, SeparatedClustersFitPerfectly) {
  const auto d = clusters(40, 2.0, 1);
  const auto m = train_svm(d.X, d.labels, {});
  for (Eigen::Index i = 0; i < d.X.rows(); ++i)
    EXPECT_EQ(m.margin(d.X.row(i).transpose()) > 0, d.labels[static_cast<std::size_t>(i)] == Positive);
  // Boundary between the cluster means.
  Vector left(2), right(2);
  left << -1.0, 0.0;
  right << 1.0, 0.0;
  EXPECT_LT(m.margin(left), 0.0);
  EXPECT_GT(m.margin(right), 0.0);
  for (Eigen::Index i = 0; i < m.coef.size(); ++i) EXPECT_LE(std::abs(m.coef(i)), m.C + 1e-12);
}

TEST(Svm, DuplicatedDataGivesSameDecisionFunction) {
  const auto d = clusters(20, 1.0, 2);
  Dataset dd;
  dd.X.resize(2 * d.X.rows(), 2);
  dd.X << d.X, d.X;
  dd.labels = d.labels;
  dd.labels.insert(dd.labels.end(), d.labels.begin(), d.labels.end());
  SvmTrainConfig cfg;
  cfg.tolerance = 1e-6;
  cfg.C = 1.0;
  const auto a = train_svm(d.X, d.labels, cfg);
  cfg.C = 0.5;  // each copy carries half the weight
  const auto b = train_svm(dd.X, dd.labels, cfg);
  const auto g = grid();
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    EXPECT_NEAR(a.margin(g.row(i).transpose()), b.margin(g.row(i).transpose()), 1e-3);
}

TEST(Svm, DuplicatedDataSameCIsClose) {
  const auto d = clusters(20, 3.0, 3);
  Dataset dd;
  dd.X.resize(2 * d.X.rows(), 2);
  dd.X << d.X, d.X;
  dd.labels = d.labels;
  dd.labels.insert(dd.labels.end(), d.labels.begin(), d.labels.end());
  SvmTrainConfig cfg;
  cfg.tolerance = 1e-6;
  const auto a = train_svm(d.X, d.labels, cfg);
  const auto b = train_svm(dd.X, dd.labels, cfg);
  const auto g = grid();
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    EXPECT_NEAR(a.margin(g.row(i).transpose()), b.margin(g.row(i).transpose()), 1e-3) << i;
}

TEST(Svm, SinglePairMidpointScoresOneHalf) {
  Eigen::MatrixXd X(2, 3);
  X << 1.0, 2.0, -1.0, 3.0, 0.0, 1.0;
  const auto m = train_svm(X, {Positive, Negative}, {});
  const Vector mid = (X.row(0) + X.row(1)).transpose() / 2.0;
  EXPECT_EQ(m.predict(mid), 0.5);
  EXPECT_GT(m.predict(X.row(0).transpose()), 0.5);
}

TEST(Svm, SigmoidMapping) {
  const auto d = clusters(30, 3.0, 4);
  const auto m = train_svm(d.X, d.labels, {});
  for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
    const double mg = m.margin(d.X.row(i).transpose());
    const double s = m.predict(d.X.row(i).transpose());
    EXPECT_NEAR(s, 1.0 / (1.0 + std::exp(-mg)), 1e-15);
    if (mg > 1.0) EXPECT_GT(s, 0.73);
    EXPECT_EQ(s > 0.5, mg > 0.0);
  }
}

TEST(Svm, SupportOrderDoesNotMatter) {
  const auto d = clusters(25, 1.0, 5);
  auto m = train_svm(d.X, d.labels, {});
  auto r = m;
  r.support = m.support.colwise().reverse();
  r.coef = m.coef.reverse();
  const auto g = grid();
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    EXPECT_NEAR(m.margin(g.row(i).transpose()), r.margin(g.row(i).transpose()), 1e-12);
}

TEST(Svm, LabelFlipNegatesMargins) {
  const auto d = clusters(25, 0.8, 6);
  auto flipped = d.labels;
  for (auto& l : flipped) l = l == Positive ? Negative : Positive;
  SvmTrainConfig cfg;
  cfg.tolerance = 1e-6;
  const auto a = train_svm(d.X, d.labels, cfg);
  const auto b = train_svm(d.X, flipped, cfg);
  const auto g = grid();
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    EXPECT_NEAR(a.margin(g.row(i).transpose()), -b.margin(g.row(i).transpose()), 1e-3);
    EXPECT_NEAR(a.predict(g.row(i).transpose()), 1.0 - b.predict(g.row(i).transpose()), 1e-3);
  }
}

TEST(Svm, ErrorsAreReported) {
  const auto d = clusters(5, 1.0, 7);
  const auto m = train_svm(d.X, d.labels, {});
  EXPECT_THROW(m.margin(Vector::Zero(3)), ConfigError);
  std::vector<Label> one_class(d.labels.size(), Positive);
  EXPECT_THROW(train_svm(d.X, one_class, {}), TrainingError);
  SvmTrainConfig tight;
  tight.max_iterations = 1;
  tight.tolerance = 1e-12;
  const auto hard = clusters(50, 0.1, 8);
  EXPECT_THROW(train_svm(hard.X, hard.labels, tight), TrainingError);
}

TEST(Svm, ScoresFiniteOnRandomInputs) {
  const auto d = clusters(10, 1.0, 9);
  const auto m = train_svm(d.X, d.labels, {});
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    Vector x(2);
    x << 1e3 * rng.normal(), 1e3 * rng.normal();
    const double s = m.predict(x);
    EXPECT_TRUE(std::isfinite(m.margin(x)));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Features, ModulatedEnvelope) {
  Vector env(28800);
  for (Eigen::Index i = 0; i < env.size(); ++i) env(i) = 1.0 + 0.1 * std::sin(2.0 * M_PI * 20.0 * i / 96000.0);
  const auto f = envelope_features(env);
  ASSERT_EQ(f.size(), kFeatureCount);
  EXPECT_NEAR(f(0), 0.0, 1e-9);
  EXPECT_NEAR(f(1), 1.0, 0.01);
  EXPECT_NEAR(f(3), std::sqrt(2.0), 0.01);
  EXPECT_EQ(f(4), 6.0);
  EXPECT_NEAR(f(5), 20.0, 1e-9);
  EXPECT_NEAR(f(7), 0.0, 5.0);
}

TEST(Features, ScaleAndOffsetInvariant) {
  Rng rng(11);
  Vector env(28800);
  for (Eigen::Index i = 0; i < env.size(); ++i) env(i) = rng.normal();
  const auto a = envelope_features(env);
  const auto b = envelope_features((3.0 * env.array() + 7.0).matrix());
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Features, SlopeOfRamp) {
  Vector env(28800);
  for (Eigen::Index i = 0; i < env.size(); ++i) env(i) = static_cast<double>(i);
  const auto f = envelope_features(env);
  // z-scored ramp over 0.3 s: std of uniform ramp is range / sqrt(12).
  EXPECT_NEAR(f(7), std::sqrt(12.0) / 0.3, 0.05);
  EXPECT_EQ(f(4), 0.0);
}
