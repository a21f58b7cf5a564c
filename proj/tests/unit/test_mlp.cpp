#include "fbsdej/mlp.hpp"
#include "fbsdej/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace fbsdej;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  RandomStream s(seed, StreamPurpose::test, 0, 0);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * s.normal();
  }
  return m;
}

double loss_at(const Mlp& net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& T) {
  Mlp::Cache cache;
  Eigen::MatrixXd Y;
  net.forward(X, Y, cache);
  return (Y - T).rowwise().squaredNorm().mean();
}

// Largest relative deviation between the analytic gradient and central
// differences, measured in the Euclidean norm over all parameters.
double gradient_error(Mlp net, const Eigen::MatrixXd& X, const Eigen::MatrixXd& T) {
  Mlp::Cache cache;
  Eigen::MatrixXd Y;
  Eigen::VectorXd grad;
  net.forward(X, Y, cache);
  net.gradient(Y, T, cache, grad);
  Eigen::VectorXd fd(grad.size());
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double keep = net.parameters()[i];
    net.parameters()[i] = keep + h;
    const double up = loss_at(net, X, T);
    net.parameters()[i] = keep - h;
    const double down = loss_at(net, X, T);
    net.parameters()[i] = keep;
    fd[i] = (up - down) / (2.0 * h);
  }
  return (grad - fd).norm() / std::max(fd.norm(), 1e-12);
}

}  // namespace

TEST(Mlp, ParameterLayout) {
  const Mlp plain({2, 4, 3, 1}, false);
  EXPECT_EQ(plain.parameter_count(), 2u * 4 + 4 + 4 * 3 + 3 + 3 * 1 + 1);
  const Mlp bn({2, 4, 3, 1}, true);
  EXPECT_EQ(bn.parameter_count(), plain.parameter_count() + 2u * (4 + 3));
  EXPECT_EQ(bn.output_dim(), 1);
  EXPECT_THROW(Mlp({2}, false), ConfigError);
}

TEST(Mlp, InitializationIsHeUniformAndDeterministic) {
  Mlp a({10, 20, 1}, true), b({10, 20, 1}, true), c({10, 20, 1}, true);
  a.initialize(1, 0);
  b.initialize(1, 0);
  c.initialize(1, 1);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_NE(a.parameters(), c.parameters());
  const double bound = std::sqrt(6.0 / 10.0);
  EXPECT_LE(a.weight(0).cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(a.bias(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(a.bn_scale(0), Eigen::VectorXd::Ones(20));
  EXPECT_EQ(a.bn_shift(0), Eigen::VectorXd::Zero(20));
}

TEST(Mlp, GradientMatchesFiniteDifferences) {
  for (bool bn : {false, true}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Mlp net({2, 4, 3, 1}, bn);
      net.initialize(100 + seed, 0);
      // Randomize every parameter, including scales and shifts.
      const Eigen::MatrixXd noise = random_matrix(static_cast<Eigen::Index>(net.parameter_count()), 1, 200 + seed, 0.3);
      net.parameters() += noise.col(0);
      const Eigen::MatrixXd X = random_matrix(16, 2, 300 + seed);
      const Eigen::MatrixXd T = random_matrix(16, 1, 400 + seed);
      EXPECT_LE(gradient_error(net, X, T), 1e-4) << "bn=" << bn << " seed=" << seed;
    }
  }
}

TEST(Mlp, GradientMultiOutput) {
  Mlp net({3, 5, 4}, true);
  net.initialize(7, 0);
  const Eigen::MatrixXd X = random_matrix(12, 3, 8);
  const Eigen::MatrixXd T = random_matrix(12, 4, 9);
  EXPECT_LE(gradient_error(net, X, T), 1e-4);
}

TEST(Mlp, EvaluateUsesRunningMoments) {
  Mlp net({1, 6, 1}, true);
  net.initialize(3, 0);
  const Eigen::MatrixXd X = random_matrix(64, 1, 4, 2.0);
  Mlp::Cache cache;
  Eigen::MatrixXd Y_train, Y_eval;
  net.forward(X, Y_train, cache);
  // Drive the running moments to the batch moments.
  for (int i = 0; i < 400; ++i) net.update_running_moments(cache);
  net.evaluate(X, Y_eval);
  // Unbiased vs biased variance: the outputs agree up to that factor's effect.
  EXPECT_LE((Y_train - Y_eval).cwiseAbs().maxCoeff(), 0.05 * (1.0 + Y_train.cwiseAbs().maxCoeff()));
  RowMatrix Xr = X, Yr;
  net.evaluate(Xr, Yr);
  EXPECT_EQ(Eigen::MatrixXd(Yr), Y_eval);
}

TEST(Adam, MatchesHandComputedSteps) {
  Eigen::VectorXd p(2);
  p << 1.0, -2.0;
  AdamState st(2);
  const Eigen::VectorXd g1 = (Eigen::VectorXd(2) << 0.5, -0.1).finished();
  const Eigen::VectorXd g2 = (Eigen::VectorXd(2) << -0.2, 0.3).finished();
  adam_step(p, g1, st, 0.01);
  adam_step(p, g2, st, 0.01);
  Eigen::VectorXd expected(2);
  for (int i = 0; i < 2; ++i) {
    double m = 0, v = 0, x = i == 0 ? 1.0 : -2.0;
    int t = 0;
    for (double g : {g1[i], g2[i]}) {
      ++t;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
      x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    expected[i] = x;
  }
  EXPECT_NEAR(p[0], expected[0], 1e-15);
  EXPECT_NEAR(p[1], expected[1], 1e-15);
  EXPECT_EQ(st.step, 2);
}

TEST(TrainSchedule, PiecewiseRates) {
  TrainSchedule s;
  s.steps = 100;
  EXPECT_EQ(s.rate(0), 1e-2);
  EXPECT_EQ(s.rate(30), 1e-2);
  EXPECT_EQ(s.rate(31), 1e-3);
  EXPECT_EQ(s.rate(60), 1e-3);
  EXPECT_EQ(s.rate(61), 1e-4);
  EXPECT_EQ(s.rate(99), 1e-4);
}

TEST(PairTrainer, LearnsSmoothFunction) {
  Mlp u({1, 16, 16, 1}, true), v({1, 16, 16, 1}, true);
  u.initialize(5, 0);
  v.initialize(5, 1);
  PairTrainer trainer(std::move(u), std::move(v));
  TrainSchedule schedule;
  schedule.steps = 600;
  schedule.batch_size = 256;
  train_pair(trainer, [&](int j) {
    Minibatch b;
    b.x = random_matrix(256, 1, 1000 + static_cast<std::uint64_t>(j));
    b.u_targets = b.x.array().sin().matrix();
    b.v_targets = b.x.array().square().matrix();
    return b;
  }, schedule);
  const auto& losses = trainer.losses();
  ASSERT_EQ(losses.size(), 600u);
  double head = 0, tail = 0;
  for (int i = 0; i < 20; ++i) {
    head += losses[static_cast<std::size_t>(i)];
    tail += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
  }
  EXPECT_LT(tail, 0.1 * head);
  const Eigen::MatrixXd X = random_matrix(500, 1, 99);
  Eigen::MatrixXd Y;
  trainer.u().evaluate(X, Y);
  EXPECT_LT((Y - Eigen::MatrixXd(X.array().sin())).cwiseAbs().mean(), 0.1);
}

TEST(PairTrainer, NonFiniteLossIsReported) {
  Mlp u({1, 4, 1}, false), v({1, 4, 1}, false);
  u.initialize(1, 0);
  v.initialize(1, 1);
  PairTrainer trainer(std::move(u), std::move(v));
  TrainSchedule schedule;
  schedule.steps = 5;
  try {
    train_pair(trainer, [](int j) {
      Minibatch b;
      b.x = Eigen::MatrixXd::Ones(4, 1);
      b.u_targets = Eigen::MatrixXd::Ones(4, 1) * (j == 3 ? std::nan("") : 1.0);
      b.v_targets = Eigen::MatrixXd::Ones(4, 1);
      return b;
    }, schedule);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Mlp, CheckpointRoundTrip) {
  Mlp net({3, 7, 2}, true);
  net.initialize(8, 0);
  net.running_moments().setRandom();
  net.running_moments() = net.running_moments().cwiseAbs();
  const auto path = std::filesystem::temp_directory_path() / "fbsdej_net.bin";
  net.save(path.string());
  const Mlp back = Mlp::load(path.string());
  EXPECT_EQ(back.layer_sizes(), net.layer_sizes());
  EXPECT_EQ(back.batch_norm(), net.batch_norm());
  EXPECT_EQ(back.parameters(), net.parameters());
  EXPECT_EQ(back.running_moments(), net.running_moments());
  const Eigen::MatrixXd X = random_matrix(10, 3, 4);
  Eigen::MatrixXd a, b;
  net.evaluate(X, a);
  back.evaluate(X, b);
  EXPECT_EQ(a, b);
  {
    std::ofstream out(path, std::ios::binary);
    out << "garbage!";
  }
  EXPECT_THROW(Mlp::load(path.string()), Error);
  std::filesystem::remove(path);
}
