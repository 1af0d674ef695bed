#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mdpa/checks.hpp"
#include "mdpa/optimizer.hpp"

using namespace mdpa;

namespace {

const NoiseSchedule& schedule() {
  static const NoiseSchedule s = build_cosine_schedule(1000);
  return s;
}

const ConditionModel& model() {
  static const ConditionModel m = make_condition_model(default_model_spec(8, 3));
  return m;
}

}  // namespace

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 engine(3);
  std::normal_distribution<double> normal(0.0, 1.5);
  const std::size_t sizes[] = {3, 4, 6};
  const int times[] = {980, 700, 400, 100, 20};
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = model_instance(model(), schedule(), sizes[i % 3], times[i % 5], derive_seed(77, 1, i));
    std::vector<double> z(inst.preds.size() - 2);
    for (double& v : z) v = normal(engine);
    ControlConfig control;
    control.lambda_mode = i % 2 ? LambdaMode::Posterior : LambdaMode::Unit;
    worst = std::max(worst, gradient_fd_error(inst, z, control, schedule()));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Gradient, OmegaGradientOfSyntheticInstance) {
  const auto inst = interior_instance(5, 6, 2, 300, 4);
  const std::vector<double> omega = {0, 0.2, 0.5, 0.8, 1};
  const auto g = energy_gradient_omega(omega, inst.preds, inst.x_t, 300, ControlConfig{}, schedule());
  for (std::size_t k = 1; k < 4; ++k) {
    auto up = omega;
    auto down = omega;
    up[k] += 1e-6;
    down[k] -= 1e-6;
    const double fd = (control_energy(inst.x_t, inst.preds, up, 300, ControlConfig{}, schedule()).total -
                       control_energy(inst.x_t, inst.preds, down, 300, ControlConfig{}, schedule()).total) /
                      2e-6;
    EXPECT_NEAR(g[k], fd, 1e-6 * (1 + std::abs(fd)));
  }
}

TEST(Gradient, SizeErrors) {
  const auto inst = interior_instance(4, 6, 2, 300, 4);
  const std::vector<double> wrong = {0.0};
  EXPECT_THROW(energy_gradient(wrong, inst.preds, inst.x_t, 300, ControlConfig{}, schedule()), Error);
}

TEST(Oracle, MatchesOneDimensionalGridSearch) {
  int compared = 0;
  for (std::uint64_t seed = 0; compared < 5 && seed < 40; ++seed) {
    const auto inst = model_instance(model(), schedule(), 3, 500, seed);
    const auto oracle = closed_form_oracle(inst.preds, inst.x_t, 500, ControlConfig{}, schedule());
    ASSERT_TRUE(oracle.has_value());
    double best_w = 0;
    double best_e = INFINITY;
    for (int i = 0; i <= 10000; ++i) {
      const double w = i * 1e-4;
      const std::vector<double> omega = {0, w, 1};
      const double e = control_energy(inst.x_t, inst.preds, omega, 500, ControlConfig{}, schedule()).total;
      if (e < best_e) {
        best_e = e;
        best_w = w;
      }
    }
    const double w_star = (*oracle)[1];
    if (w_star > 1e-3 && w_star < 1 - 1e-3) {
      EXPECT_NEAR(w_star, best_w, 2e-4) << seed;
      ++compared;
    }
  }
  EXPECT_EQ(compared, 5);
}

TEST(Oracle, SymmetricInstanceGivesHalf) {
  auto inst = interior_instance(3, 6, 2, 400, 9);
  for (auto& p : inst.preds) p.uncond = axpby(0.5, p.source, 0.5, p.target);
  ControlConfig control;
  control.terminal_weight = 0;
  const auto oracle = closed_form_oracle(inst.preds, inst.x_t, 400, control, schedule());
  ASSERT_TRUE(oracle.has_value());
  EXPECT_NEAR((*oracle)[1], 0.5, 1e-12);
  const auto found = optimize_mixing(inst.preds, inst.x_t, 400, OptimizerConfig{}, control, schedule());
  EXPECT_EQ(found.omega[1], 0.5);
}

TEST(Oracle, SingularAndSmallK) {
  auto inst = interior_instance(3, 6, 2, 400, 9);
  inst.preds[1].target = inst.preds[1].source;
  ControlConfig control;
  control.terminal_weight = 0;
  EXPECT_FALSE(closed_form_oracle(inst.preds, inst.x_t, 400, control, schedule()).has_value());
  const auto two = interior_instance(2, 6, 2, 400, 9);
  EXPECT_THROW(closed_form_oracle(two.preds, two.x_t, 400, control, schedule()), Error);
}

TEST(Optimizer, ConvergesToOracleWithJ500) {
  OptimizerConfig opt;
  opt.inner_steps = 500;
  opt.learning_rate = 0.05;
  int used = 0;
  for (std::uint64_t i = 0; used < 20 && i < 400; ++i) {
    const auto inst = interior_instance(3 + i % 4, 8, 3, 200 + 100 * (i % 6), derive_seed(5, 2, i));
    const auto oracle = closed_form_oracle(inst.preds, inst.x_t, inst.t, ControlConfig{}, schedule());
    if (!oracle) continue;
    bool interior = true;
    for (std::size_t k = 1; k + 1 < oracle->size(); ++k) interior = interior && (*oracle)[k] > 0.15 && (*oracle)[k] < 0.85;
    if (!interior) continue;
    ++used;
    const double target = control_energy(inst.x_t, inst.preds, *oracle, inst.t, ControlConfig{}, schedule()).total;
    const auto found = optimize_mixing(inst.preds, inst.x_t, inst.t, opt, ControlConfig{}, schedule());
    const double got = found.trace[found.best_iteration].energy.total;
    EXPECT_LE(std::abs(got - target) / target, 1e-6) << i;
    EXPECT_GE(got, target * (1 - 1e-12));
  }
  EXPECT_EQ(used, 20);
}

TEST(Optimizer, BestIterateNeverWorseThanInit) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = model_instance(model(), schedule(), 3 + seed % 4, 50 + 31 * seed, seed);
    const auto found = optimize_mixing(inst.preds, inst.x_t, inst.t, OptimizerConfig{}, ControlConfig{}, schedule());
    ASSERT_EQ(found.trace.size(), 21u);
    EXPECT_LE(found.trace[found.best_iteration].energy.total, found.trace.front().energy.total);
    for (const auto& entry : found.trace) {
      EXPECT_EQ(entry.omega.front(), 0.0);
      EXPECT_EQ(entry.omega.back(), 1.0);
    }
    const auto e = control_energy(inst.x_t, inst.preds, found.omega, inst.t, ControlConfig{}, schedule());
    EXPECT_EQ(e.total, found.trace[found.best_iteration].energy.total);
  }
}

TEST(Optimizer, BestEnergyMonotoneInJ) {
  const auto inst = model_instance(model(), schedule(), 4, 300, 12);
  double previous = INFINITY;
  for (int j : {0, 1, 5, 20, 60}) {
    OptimizerConfig opt;
    opt.inner_steps = j;
    const auto found = optimize_mixing(inst.preds, inst.x_t, 300, opt, ControlConfig{}, schedule());
    const double e = found.trace[found.best_iteration].energy.total;
    EXPECT_LE(e, previous);
    previous = e;
  }
}

TEST(Optimizer, InitialLatentAndTwoSegments) {
  const auto inst = model_instance(model(), schedule(), 4, 300, 12);
  OptimizerConfig opt;
  opt.inner_steps = 0;
  const std::vector<double> start = {1.0, -2.0};
  const auto found = optimize_mixing(inst.preds, inst.x_t, 300, opt, ControlConfig{}, schedule(), &start);
  EXPECT_EQ(found.latent, start);
  EXPECT_EQ(found.omega[1], sigmoid(1.0));
  const std::vector<double> bad = {1.0};
  EXPECT_THROW(optimize_mixing(inst.preds, inst.x_t, 300, opt, ControlConfig{}, schedule(), &bad), Error);

  const auto two = model_instance(model(), schedule(), 2, 300, 12);
  const auto pinned = optimize_mixing(two.preds, two.x_t, 300, OptimizerConfig{}, ControlConfig{}, schedule());
  EXPECT_EQ(pinned.omega, (std::vector<double>{0.0, 1.0}));
  EXPECT_TRUE(pinned.latent.empty());
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  OptimizerConfig opt;
  auto state = AdamState::fresh({0.0, 0.0, 0.0});
  const std::vector<double> g = {3.0, -0.001, 0.0};
  state = adam_update(std::move(state), g, opt);
  EXPECT_NEAR(state.params[0], -0.01, 1e-9);
  EXPECT_NEAR(state.params[1], 0.01, 1e-5);
  EXPECT_EQ(state.params[2], 0.0);
  EXPECT_EQ(state.step, 1);
  const std::vector<double> wrong = {1.0};
  EXPECT_THROW(adam_update(state, wrong, opt), Error);
}

TEST(Adam, MinimizesQuadratic) {
  OptimizerConfig opt;
  opt.learning_rate = 0.05;
  auto state = AdamState::fresh({4.0});
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> g = {2.0 * (state.params[0] - 1.0)};
    state = adam_update(std::move(state), g, opt);
  }
  EXPECT_NEAR(state.params[0], 1.0, 1e-3);
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig c;
  c.inner_steps = -1;
  EXPECT_THROW(c.validate(), Error);
  c = OptimizerConfig{};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), Error);
  c = OptimizerConfig{};
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), Error);
}
