#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rbrn/errors.hpp"
#include "rbrn/metrics.hpp"
#include "rbrn/problems.hpp"
#include "rbrn/reduced_basis.hpp"
#include "rbrn/resnet.hpp"
#include "rbrn/rng.hpp"
#include "rbrn/training.hpp"

using namespace rbrn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                              std::uint64_t seed) {
  Eigen::MatrixXd m(rows, cols);
  CounterRng rng(seed, 0);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.next_gaussian();
  return m;
}

bool same_coeffs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.rows() == 0 || (a - b).cwiseAbs().maxCoeff() == 0.0);
}

bool same_layers(const ResNetModel& a, const ResNetModel& b) {
  if (a.depth() != b.depth()) return false;
  for (Eigen::Index l = 0; l < a.depth(); ++l) {
    if (!same_coeffs(a.layers[l].w0, b.layers[l].w0)) return false;
    if (!same_coeffs(a.layers[l].b, b.layers[l].b)) return false;
    if (!same_coeffs(a.layers[l].w1, b.layers[l].w1)) return false;
  }
  return true;
}

// Exactly affine data y = x * a^T + offset^T, representable by a
// zero-layer model with a learned prolongation.
SampleSet affine_set(Eigen::Index n, std::uint64_t seed) {
  SampleSet set;
  set.inputs = random_matrix(n, 3, seed);
  Eigen::MatrixXd a(2, 3);
  a << 0.7, -0.3, 0.1, 0.2, 0.5, -0.4;
  Eigen::RowVector2d offset(0.2, -0.1);
  set.outputs = (set.inputs * a.transpose()).rowwise() + offset;
  set.seed = seed;
  set.problem_tag = "affine-test";
  return set;
}

// Pure noise: outputs are independent of inputs, so any fit overfits.
SampleSet noise_set(Eigen::Index n, std::uint64_t seed) {
  SampleSet set;
  set.inputs = random_matrix(n, 4, seed);
  set.outputs = random_matrix(n, 3, seed + 1);
  set.seed = seed;
  set.problem_tag = "noise-test";
  return set;
}

ResNetModel affine_probe_model(std::uint64_t seed) {
  LearnedProlongation lp;
  lp.p = 0.1 * random_matrix(2, 3, seed);
  lp.c = Eigen::VectorXd::Zero(2);
  return make_model(lp, Eigen::MatrixXd::Identity(2, 2),
                    Eigen::VectorXd::Zero(2));
}

ResNetModel two_layer_model(std::uint64_t seed) {
  ResNetModel model = affine_probe_model(seed);
  model = append_layer(model, 2, AppendInit::PaperGlorot, seed + 1);
  model = append_layer(model, 2, AppendInit::PaperGlorot, seed + 2);
  return model;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("adam leaves weights untouched on a zero gradient") {
  TrainConfig cfg;
  AdamState state = AdamState::zeros(3);
  Eigen::VectorXd w = random_matrix(3, 1, 5).col(0);
  const Eigen::VectorXd before = w;
  adam_step(state, w, Eigen::VectorXd::Zero(3), cfg);
  CHECK((w - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK(state.t == 1);
}

TEST_CASE("the first adam step is alpha times the gradient sign") {
  TrainConfig cfg;
  AdamState state = AdamState::zeros(2);
  Eigen::VectorXd w(2);
  w << 1.0, -2.0;
  Eigen::VectorXd g(2);
  g << 0.5, -3.0;
  adam_step(state, w, g, cfg);
  // Bias correction at t=1 collapses to -alpha * g / (|g| + eps).
  CHECK(std::abs(w[0] - (1.0 - cfg.alpha)) <= 1e-6 * cfg.alpha);
  CHECK(std::abs(w[1] - (-2.0 + cfg.alpha)) <= 1e-6 * cfg.alpha);
}

TEST_CASE("adam and config validation reject bad constants") {
  TrainConfig cfg;
  AdamState state = AdamState::zeros(1);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd g = Eigen::VectorXd::Ones(1);

  TrainConfig bad = cfg;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(adam_step(state, w, g, bad), ConfigError);
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.beta2 = -0.1;
  CHECK_THROWS_AS(adam_step(state, w, g, bad), ConfigError);

  bad = cfg;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.total_epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.patience = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.val_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.layer_rank = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.overfit_gap = -0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  AdamState mismatched = AdamState::zeros(2);
  CHECK_THROWS_AS(adam_step(mismatched, w, g, cfg), ShapeError);
}

TEST_CASE("zero requested epochs is a bit-exact no-op") {
  SampleSet data = affine_set(10, 7);
  ResNetModel model = two_layer_model(11);
  TrainConfig cfg;
  EpochRunResult run =
      train_epochs(model, data.inputs, data.outputs, cfg, 0,
                   TrainableSelector::all_unfrozen(), 1);
  CHECK(run.losses.empty());
  CHECK(!run.aborted_non_finite);
  CHECK(same_layers(run.model, model));
  CHECK(same_coeffs(run.model.output_bias, model.output_bias));
}

TEST_CASE("adam on affine data converges monotonically to the optimum") {
  SampleSet data = affine_set(16, 21);
  ResNetModel model = affine_probe_model(22);
  TrainConfig cfg;
  cfg.alpha = 0.005;
  cfg.batch_size = 2;
  EpochRunResult run =
      train_epochs(model, data.inputs, data.outputs, cfg, 200,
                   TrainableSelector::all_unfrozen(), 3);
  REQUIRE(run.losses.size() == 200);
  const double initial = mean_squared_loss(model, data.inputs, data.outputs);
  CHECK(run.losses.front() < initial);
  for (std::size_t e = 1; e < run.losses.size(); ++e)
    CHECK(run.losses[e] <= run.losses[e - 1] * (1.0 + 1e-12) + 1e-15);
  // The data is exactly representable, so the optimum loss is zero.
  CHECK(run.losses.back() < 1e-6);
}

TEST_CASE("training is a pure function of model, data, config and seed") {
  SampleSet data = affine_set(12, 31);
  ResNetModel model = two_layer_model(32);
  TrainConfig cfg;
  EpochRunResult a = train_epochs(model, data.inputs, data.outputs, cfg, 5,
                                  TrainableSelector::all_unfrozen(), 9);
  EpochRunResult b = train_epochs(model, data.inputs, data.outputs, cfg, 5,
                                  TrainableSelector::all_unfrozen(), 9);
  CHECK(same_layers(a.model, b.model));
  CHECK(same_coeffs(a.model.output_bias, b.model.output_bias));
  CHECK(a.losses == b.losses);

  EpochRunResult c = train_epochs(model, data.inputs, data.outputs, cfg, 5,
                                  TrainableSelector::all_unfrozen(), 10);
  CHECK(!same_layers(a.model, c.model));
}

TEST_CASE("selectors restrict which blocks move") {
  SampleSet data = affine_set(12, 41);
  ResNetModel model = two_layer_model(42);
  TrainConfig cfg;

  EpochRunResult only = train_epochs(model, data.inputs, data.outputs, cfg, 3,
                                     TrainableSelector::only_layer(1), 11);
  CHECK(same_coeffs(only.model.layers[0].w0, model.layers[0].w0));
  CHECK(same_coeffs(only.model.output_bias, model.output_bias));
  CHECK(same_coeffs(std::get<LearnedProlongation>(only.model.input_map).p,
                    std::get<LearnedProlongation>(model.input_map).p));
  CHECK(!same_coeffs(only.model.layers[1].w0, model.layers[1].w0));

  ResNetModel frozen = model;
  frozen.frozen[0] = true;
  EpochRunResult all = train_epochs(frozen, data.inputs, data.outputs, cfg, 3,
                                    TrainableSelector::all_unfrozen(), 11);
  CHECK(same_coeffs(all.model.layers[0].w0, model.layers[0].w0));
  CHECK(!same_coeffs(all.model.layers[1].w0, model.layers[1].w0));
  CHECK(!same_coeffs(all.model.output_bias, model.output_bias));

  CHECK_THROWS_AS(train_epochs(frozen, data.inputs, data.outputs, cfg, 1,
                               TrainableSelector::only_layer(0), 1),
                  UsageError);
  CHECK_THROWS_AS(train_epochs(model, data.inputs, data.outputs, cfg, 1,
                               TrainableSelector::only_layer(7), 1),
                  UsageError);
}

TEST_CASE("a diverging run aborts with the best model seen") {
  SampleSet data = affine_set(8, 51);
  ResNetModel model = two_layer_model(52);
  TrainConfig cfg;
  cfg.alpha = 1e200;  // one step overflows the forward pass
  EpochRunResult run = train_epochs(model, data.inputs, data.outputs, cfg, 4,
                                    TrainableSelector::all_unfrozen(), 13);
  CHECK(run.aborted_non_finite);
  CHECK(run.losses.size() < 4);
  CHECK(same_layers(run.model, model));
  CHECK(same_coeffs(run.model.output_bias, model.output_bias));
}

TEST_CASE("the data split is seeded, disjoint and exhaustive") {
  SampleSet data = affine_set(40, 61);
  // Tag rows by a unique leading coordinate to track the permutation.
  for (Eigen::Index i = 0; i < 40; ++i) data.inputs(i, 0) = i;
  DataSplit split = split_data(data, 0.1, 5);
  CHECK(split.val_x.rows() == 4);
  CHECK(split.train_x.rows() == 36);
  std::vector<int> seen(40, 0);
  for (Eigen::Index i = 0; i < 4; ++i)
    seen[static_cast<int>(split.val_x(i, 0))] += 1;
  for (Eigen::Index i = 0; i < 36; ++i)
    seen[static_cast<int>(split.train_x(i, 0))] += 1;
  for (int count : seen) CHECK(count == 1);

  DataSplit again = split_data(data, 0.1, 5);
  CHECK(same_coeffs(again.train_x, split.train_x));
  DataSplit other = split_data(data, 0.1, 6);
  CHECK(!same_coeffs(other.train_x, split.train_x));

  CHECK_THROWS_AS(split_data(data, 0.0, 1), ConfigError);
  SampleSet tiny = affine_set(1, 62);
  CHECK_THROWS_AS(split_data(tiny, 0.5, 1), ConfigError);
}

TEST_CASE("zero growth budget trains the affine model") {
  SampleSet data = affine_set(40, 71);
  TrainConfig cfg;
  cfg.max_depth = 0;
  cfg.total_epochs = 20;
  cfg.alpha = 0.02;
  TrainOutcome out = adaptive_construct(data, std::nullopt,
                                        Eigen::MatrixXd::Identity(2, 2), cfg);
  CHECK(out.model.depth() == 0);
  CHECK(out.report.stages.empty());
  CHECK(out.report.stopping_reason == StoppingReason::MaxDepth);
  CHECK(out.report.epochs_consumed == 20);

  // The bias moved away from the raw training-output mean.
  DataSplit split = split_data(data, cfg.val_fraction, cfg.seed);
  Eigen::VectorXd mean = split.train_y.colwise().mean().transpose();
  CHECK(!same_coeffs(out.model.output_bias, mean));
  CHECK(out.report.final_accuracy > 0.9);
}

TEST_CASE("adaptive stages are continuous across zero-output appends") {
  auto problem = make_problem("ridge-cubic");
  SampleSet data = problem.sample_batch(64, 81);
  ReducedBasis pod = compute_pod(data.outputs, 4);
  TrainConfig cfg;
  cfg.max_depth = 3;
  cfg.total_epochs = 12;
  cfg.patience = 100;
  cfg.overfit_gap = 1e9;
  TrainOutcome out =
      adaptive_construct(data, std::nullopt, pod.vectors, cfg);
  REQUIRE(out.report.stages.size() == 3);
  for (std::size_t s = 1; s < out.report.stages.size(); ++s)
    CHECK(out.report.stages[s].post_append_loss ==
          out.report.stages[s - 1].train_loss);
  for (std::size_t s = 0; s < out.report.stages.size(); ++s) {
    CHECK(out.report.stages[s].depth == static_cast<Eigen::Index>(s + 1));
    CHECK(out.report.stages[s].epochs_run == 4);
  }
  CHECK(out.report.epochs_consumed == 12);
  CHECK(out.report.stopping_reason == StoppingReason::MaxDepth);
}

TEST_CASE("explicit stage budgets leave the remainder to the final pass") {
  SampleSet data = affine_set(30, 91);
  TrainConfig cfg;
  cfg.max_depth = 2;
  cfg.total_epochs = 50;
  cfg.stage_epochs = 3;
  cfg.patience = 100;
  cfg.overfit_gap = 1e9;
  cfg.layer_rank = 2;
  TrainOutcome out = adaptive_construct(data, std::nullopt,
                                        Eigen::MatrixXd::Identity(2, 2), cfg);
  REQUIRE(out.report.stages.size() == 2);
  CHECK(out.report.stages[0].epochs_run == 3);
  CHECK(out.report.stages[1].epochs_run == 3);
  // 50 total: 6 consumed by stages, 44 in the end-to-end finish.
  CHECK(out.report.epochs_consumed == 50);
}

TEST_CASE("sequential overfit freezes layers instead of stopping") {
  SampleSet data = noise_set(12, 102);
  TrainConfig base;
  base.mode = TrainMode::AdaptiveSequential;
  base.max_depth = 3;
  base.stage_epochs = 5;
  base.patience = 100;
  base.overfit_gap = 1e-12;
  base.layer_rank = 2;
  base.val_fraction = 0.2;
  base.alpha = 0.02;

  TrainConfig shorter = base;
  shorter.total_epochs = 20;
  TrainConfig longer = base;
  longer.total_epochs = 40;

  Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(3, 2);
  TrainOutcome a = adaptive_construct(data, std::nullopt, basis, shorter);
  TrainOutcome b = adaptive_construct(data, std::nullopt, basis, longer);

  // Overfit on noise is immediate, so construction still reaches full
  // depth and every layer ends up frozen.
  CHECK(a.report.stages.size() == 3);
  CHECK(a.report.stopping_reason == StoppingReason::MaxDepth);
  for (Eigen::Index l = 0; l < a.model.depth(); ++l)
    CHECK(a.model.frozen[l]);

  // Frozen layers are bit-identical across different final-stage
  // budgets; only the affine parts kept training.
  CHECK(same_layers(a.model, b.model));
  CHECK(!same_coeffs(a.model.output_bias, b.model.output_bias));
}

TEST_CASE("overfit stops construction outright in all-layers mode") {
  SampleSet data = noise_set(12, 111);
  TrainConfig cfg;
  cfg.mode = TrainMode::AdaptiveAll;
  cfg.max_depth = 4;
  cfg.stage_epochs = 5;
  cfg.total_epochs = 30;
  cfg.patience = 100;
  cfg.overfit_gap = 1e-12;
  cfg.layer_rank = 2;
  cfg.val_fraction = 0.2;
  cfg.alpha = 0.02;
  TrainOutcome out = adaptive_construct(data, std::nullopt,
                                        Eigen::MatrixXd::Identity(3, 2), cfg);
  CHECK(out.report.stopping_reason == StoppingReason::OverfitDetected);
  CHECK(out.report.stages.size() < 4);
}

TEST_CASE("affine data stalls validation early at high accuracy") {
  // The target map is the model's own projection plus an offset, so the
  // affine model is exact and extra layers cannot help validation.
  Eigen::MatrixXd g = random_matrix(3, 2, 132);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd v = qr.householderQ() * Eigen::MatrixXd::Identity(3, 2);
  SampleSet data;
  data.inputs = random_matrix(60, 3, 1132);
  data.outputs =
      (data.inputs * v).rowwise() + Eigen::RowVector2d(0.3, -0.2);
  data.problem_tag = "projected-affine";

  TrainConfig cfg;
  cfg.max_depth = 8;
  cfg.stage_epochs = 25;
  cfg.total_epochs = 100;
  cfg.patience = 2;
  cfg.layer_rank = 2;
  TrainOutcome out =
      adaptive_construct(data, v, Eigen::MatrixXd::Identity(2, 2), cfg);
  CHECK(out.report.stopping_reason == StoppingReason::ValidationStalled);
  CHECK(out.report.stages.size() < 8);
  CHECK(out.report.final_accuracy > 0.999);
}

TEST_CASE("depth-zero end-to-end equals a zero-budget adaptive run") {
  SampleSet data = affine_set(30, 131);
  TrainConfig cfg;
  cfg.max_depth = 0;
  cfg.total_epochs = 15;
  TrainOutcome adaptive = adaptive_construct(
      data, std::nullopt, Eigen::MatrixXd::Identity(2, 2), cfg);
  TrainOutcome endtoend = end_to_end_train(
      data, std::nullopt, Eigen::MatrixXd::Identity(2, 2), 0, cfg);
  CHECK(same_coeffs(adaptive.model.output_bias, endtoend.model.output_bias));
  CHECK(same_coeffs(std::get<LearnedProlongation>(adaptive.model.input_map).p,
                    std::get<LearnedProlongation>(endtoend.model.input_map).p));
  CHECK(same_coeffs(std::get<LearnedProlongation>(adaptive.model.input_map).c,
                    std::get<LearnedProlongation>(endtoend.model.input_map).c));
  CHECK(adaptive.report.final_accuracy == endtoend.report.final_accuracy);
}

TEST_CASE("end-to-end training cuts the cubic ridge loss by 10x") {
  auto problem = make_problem("ridge-cubic");
  SampleSet data = problem.sample_batch(512, 141);
  ReducedBasis pod = compute_pod(data.outputs, 4);
  TrainConfig cfg;
  TrainOutcome out = end_to_end_train(data, std::nullopt, pod.vectors, 5, cfg);
  REQUIRE(out.report.stages.size() == 1);
  const auto& rec = out.report.stages[0];
  CHECK(rec.depth == 5);
  CHECK(rec.epochs_run == 50);
  CHECK(rec.train_loss < rec.post_append_loss / 10.0);
}

TEST_CASE("basis rank mismatches are rejected") {
  SampleSet data = affine_set(20, 151);
  TrainConfig cfg;
  Eigen::MatrixXd in_basis = random_matrix(3, 1, 152);
  Eigen::MatrixXd out_basis = Eigen::MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(
      adaptive_construct(data, in_basis, out_basis, cfg), RankError);
  Eigen::MatrixXd wrong_rows = random_matrix(5, 2, 153);
  CHECK_THROWS_AS(
      adaptive_construct(data, wrong_rows, out_basis, cfg), ShapeError);

  // A layer rank above the latent width is refused at the first append.
  TrainConfig wide;
  wide.max_depth = 1;
  wide.layer_rank = 4;
  CHECK_THROWS_AS(
      adaptive_construct(data, std::nullopt, out_basis, wide), RankError);
  CHECK_THROWS_AS(
      end_to_end_train(data, std::nullopt, out_basis, 1, wide), RankError);
}

TEST_CASE("run_training dispatches on the configured mode") {
  SampleSet data = affine_set(24, 161);
  TrainConfig cfg;
  cfg.max_depth = 1;
  cfg.total_epochs = 6;
  cfg.layer_rank = 2;
  cfg.mode = TrainMode::EndToEnd;
  TrainOutcome direct = end_to_end_train(data, std::nullopt,
                                         Eigen::MatrixXd::Identity(2, 2), 1,
                                         cfg);
  TrainOutcome routed = run_training(data, std::nullopt,
                                     Eigen::MatrixXd::Identity(2, 2), cfg);
  CHECK(routed.report.final_accuracy == direct.report.final_accuracy);
  CHECK(same_layers(routed.model, direct.model));
  CHECK_THROWS_AS(adaptive_construct(data, std::nullopt,
                                     Eigen::MatrixXd::Identity(2, 2), cfg),
                  ConfigError);

  cfg.mode = TrainMode::AdaptiveAll;
  TrainOutcome adaptive = run_training(data, std::nullopt,
                                       Eigen::MatrixXd::Identity(2, 2), cfg);
  CHECK(adaptive.report.stages.size() <= 1);
}

TEST_CASE("mode and stopping reason names round-trip") {
  CHECK(parse_train_mode("adaptive-all") == TrainMode::AdaptiveAll);
  CHECK(parse_train_mode("adaptive-sequential") ==
        TrainMode::AdaptiveSequential);
  CHECK(parse_train_mode("end2end") == TrainMode::EndToEnd);
  CHECK(to_string(TrainMode::EndToEnd) == "end2end");
  CHECK_THROWS_AS(parse_train_mode("sgd"), UsageError);
  CHECK(to_string(StoppingReason::ValidationStalled) == "ValidationStalled");
  CHECK(to_string(StoppingReason::OverfitDetected) == "OverfitDetected");
  CHECK(to_string(StoppingReason::MaxDepth) == "MaxDepth");
}

TEST_SUITE_END();
