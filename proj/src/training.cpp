#include "rbrn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "rbrn/errors.hpp"
#include "rbrn/metrics.hpp"
#include "rbrn/rng.hpp"

namespace rbrn {

namespace {

// Seed-stream tags keeping the split, prolongation init, per-stage
// appends/shuffles, and the final pass statistically independent.
constexpr std::uint64_t kSplitTag = 0x53504C49;    // "SPLI"
constexpr std::uint64_t kProlongTag = 0x50524F4C;  // "PROL"
constexpr std::uint64_t kAppendTag = 0x41505044;   // "APPD"
constexpr std::uint64_t kStageTag = 0x53544147;    // "STAG"
constexpr std::uint64_t kFinalTag = 0x46494E4C;    // "FINL"

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::AdaptiveAll: return "adaptive-all";
    case TrainMode::AdaptiveSequential: return "adaptive-sequential";
    case TrainMode::EndToEnd: return "end2end";
  }
  throw UsageError("unknown training mode value");
}

TrainMode parse_train_mode(const std::string& text) {
  if (text == "adaptive-all") return TrainMode::AdaptiveAll;
  if (text == "adaptive-sequential" || text == "adaptive-seq")
    return TrainMode::AdaptiveSequential;
  if (text == "end2end") return TrainMode::EndToEnd;
  throw UsageError("unknown training mode '" + text +
                   "' (expected adaptive-all, adaptive-seq, or end2end)");
}

std::string to_string(StoppingReason reason) {
  switch (reason) {
    case StoppingReason::MaxDepth: return "MaxDepth";
    case StoppingReason::OverfitDetected: return "OverfitDetected";
    case StoppingReason::ValidationStalled: return "ValidationStalled";
  }
  throw UsageError("unknown stopping reason value");
}

StoppingReason parse_stopping_reason(const std::string& text) {
  if (text == "MaxDepth") return StoppingReason::MaxDepth;
  if (text == "OverfitDetected") return StoppingReason::OverfitDetected;
  if (text == "ValidationStalled") return StoppingReason::ValidationStalled;
  throw UsageError("unknown stopping reason '" + text + "'");
}

void TrainConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ConfigError("alpha must be positive and finite");
  if (!(beta1 >= 0.0 && beta1 < 1.0))
    throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta2 must lie in [0, 1)");
  if (!(eps_adam > 0.0)) throw ConfigError("eps_adam must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (total_epochs < 1) throw ConfigError("total_epochs must be at least 1");
  if (max_depth < 0) throw ConfigError("max_depth must be nonnegative");
  if (stage_epochs < 0) throw ConfigError("stage_epochs must be nonnegative");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (!(overfit_gap >= 0.0) || !std::isfinite(overfit_gap))
    throw ConfigError("overfit_gap must be nonnegative and finite");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in (0, 1)");
  if (layer_rank < 1) throw ConfigError("layer_rank must be at least 1");
}

Eigen::Index TrainConfig::effective_stage_epochs() const {
  if (stage_epochs > 0) return stage_epochs;
  if (max_depth < 1) return 0;
  return std::max<Eigen::Index>(1, total_epochs / max_depth);
}

AdamState AdamState::zeros(Eigen::Index n) {
  AdamState state;
  state.m = Eigen::VectorXd::Zero(n);
  state.v = Eigen::VectorXd::Zero(n);
  return state;
}

void adam_step(AdamState& state, Eigen::VectorXd& weights,
               const Eigen::VectorXd& grads, const TrainConfig& config) {
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (weights.size() != grads.size() || state.m.size() != weights.size() ||
      state.v.size() != weights.size())
    throw ShapeError("adam state does not match the weight vector");
  state.t += 1;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v =
      config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseProduct(grads);
  const double c1 =
      1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 =
      1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  weights.array() -= config.alpha * (state.m.array() / c1) /
                     ((state.v.array() / c2).sqrt() + config.eps_adam);
}

namespace {

struct Block {
  double* data;
  Eigen::Index size;
};

// Blocks in a fixed order (prolongation, its bias, output bias, then
// per-layer w0, b, w1) so packed weights and gradients always align.
std::vector<Block> selected_blocks(ResNetModel& model,
                                   const TrainableSelector& sel) {
  std::vector<Block> blocks;
  if (sel.kind == TrainableSelector::Kind::AllUnfrozen) {
    if (auto* lp = std::get_if<LearnedProlongation>(&model.input_map)) {
      blocks.push_back({lp->p.data(), lp->p.size()});
      blocks.push_back({lp->c.data(), lp->c.size()});
    }
    blocks.push_back({model.output_bias.data(), model.output_bias.size()});
    for (Eigen::Index l = 0; l < model.depth(); ++l) {
      if (model.frozen[l]) continue;
      auto& layer = model.layers[l];
      blocks.push_back({layer.w0.data(), layer.w0.size()});
      blocks.push_back({layer.b.data(), layer.b.size()});
      blocks.push_back({layer.w1.data(), layer.w1.size()});
    }
    return blocks;
  }
  if (sel.layer < 0 || sel.layer >= model.depth())
    throw UsageError("selected layer index out of range");
  if (model.frozen[sel.layer])
    throw UsageError("selected layer is frozen");
  auto& layer = model.layers[sel.layer];
  blocks.push_back({layer.w0.data(), layer.w0.size()});
  blocks.push_back({layer.b.data(), layer.b.size()});
  blocks.push_back({layer.w1.data(), layer.w1.size()});
  return blocks;
}

// Gradient counterparts of selected_blocks, in the identical order.
std::vector<Block> selected_grad_blocks(ModelGradients& grads,
                                        const ResNetModel& model,
                                        const TrainableSelector& sel) {
  std::vector<Block> blocks;
  if (sel.kind == TrainableSelector::Kind::AllUnfrozen) {
    if (model.has_learned_prolongation()) {
      blocks.push_back({grads.prolongation.data(), grads.prolongation.size()});
      blocks.push_back(
          {grads.prolongation_bias.data(), grads.prolongation_bias.size()});
    }
    blocks.push_back({grads.output_bias.data(), grads.output_bias.size()});
    for (Eigen::Index l = 0; l < model.depth(); ++l) {
      if (model.frozen[l]) continue;
      auto& layer = grads.layers[l];
      blocks.push_back({layer.w0.data(), layer.w0.size()});
      blocks.push_back({layer.b.data(), layer.b.size()});
      blocks.push_back({layer.w1.data(), layer.w1.size()});
    }
    return blocks;
  }
  auto& layer = grads.layers[sel.layer];
  blocks.push_back({layer.w0.data(), layer.w0.size()});
  blocks.push_back({layer.b.data(), layer.b.size()});
  blocks.push_back({layer.w1.data(), layer.w1.size()});
  return blocks;
}

Eigen::Index total_size(const std::vector<Block>& blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.size;
  return n;
}

Eigen::VectorXd pack(const std::vector<Block>& blocks) {
  Eigen::VectorXd packed(total_size(blocks));
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    packed.segment(at, b.size) = Eigen::Map<const Eigen::VectorXd>(b.data, b.size);
    at += b.size;
  }
  return packed;
}

void unpack(const Eigen::VectorXd& packed, std::vector<Block>& blocks) {
  Eigen::Index at = 0;
  for (auto& b : blocks) {
    Eigen::Map<Eigen::VectorXd>(b.data, b.size) = packed.segment(at, b.size);
    at += b.size;
  }
}

}  // namespace

EpochRunResult train_epochs(const ResNetModel& model,
                            const Eigen::MatrixXd& inputs,
                            const Eigen::MatrixXd& outputs,
                            const TrainConfig& config, Eigen::Index n_epochs,
                            const TrainableSelector& selector,
                            std::uint64_t shuffle_seed) {
  config.validate();
  if (n_epochs < 0) throw UsageError("epoch count must be nonnegative");
  if (inputs.rows() < 1) throw EmptySample("training set is empty");
  EpochRunResult out;
  out.model = model;
  out.model.check_shapes();
  if (n_epochs == 0) return out;

  auto blocks = selected_blocks(out.model, selector);
  AdamState state = AdamState::zeros(total_size(blocks));

  double best_loss = mean_squared_loss(out.model, inputs, outputs);
  ResNetModel best = out.model;

  const Eigen::Index n = inputs.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd bx, by;
  for (Eigen::Index epoch = 0; epoch < n_epochs; ++epoch) {
    deterministic_shuffle(order, derive_seed(shuffle_seed,
                                             static_cast<std::uint64_t>(epoch)));
    try {
      for (Eigen::Index start = 0; start < n; start += config.batch_size) {
        const Eigen::Index len = std::min(config.batch_size, n - start);
        bx.resize(len, inputs.cols());
        by.resize(len, outputs.cols());
        for (Eigen::Index i = 0; i < len; ++i) {
          bx.row(i) = inputs.row(order[static_cast<std::size_t>(start + i)]);
          by.row(i) = outputs.row(order[static_cast<std::size_t>(start + i)]);
        }
        ModelGradients grads;
        loss_and_grad(out.model, bx, by, grads);
        auto gblocks = selected_grad_blocks(grads, out.model, selector);
        Eigen::VectorXd w = pack(blocks);
        adam_step(state, w, pack(gblocks), config);
        unpack(w, blocks);
      }
      const double epoch_loss = mean_squared_loss(out.model, inputs, outputs);
      out.losses.push_back(epoch_loss);
      if (epoch_loss < best_loss) {
        best_loss = epoch_loss;
        best = out.model;
      }
    } catch (const NonFiniteLoss&) {
      out.model = best;
      out.aborted_non_finite = true;
      break;
    }
  }
  return out;
}

DataSplit split_data(const SampleSet& data, double val_fraction,
                     std::uint64_t seed) {
  data.validate();
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must lie in (0, 1)");
  const Eigen::Index n = data.size();
  const Eigen::Index n_val = static_cast<Eigen::Index>(
      std::ceil(static_cast<double>(n) * val_fraction));
  if (n_val < 1 || n - n_val < 1)
    throw ConfigError("split leaves an empty train or validation set");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  deterministic_shuffle(order, derive_seed(seed, kSplitTag));
  DataSplit split;
  split.val_x.resize(n_val, data.input_dim());
  split.val_y.resize(n_val, data.output_dim());
  split.train_x.resize(n - n_val, data.input_dim());
  split.train_y.resize(n - n_val, data.output_dim());
  for (Eigen::Index i = 0; i < n_val; ++i) {
    split.val_x.row(i) = data.inputs.row(order[static_cast<std::size_t>(i)]);
    split.val_y.row(i) = data.outputs.row(order[static_cast<std::size_t>(i)]);
  }
  for (Eigen::Index i = n_val; i < n; ++i) {
    split.train_x.row(i - n_val) =
        data.inputs.row(order[static_cast<std::size_t>(i)]);
    split.train_y.row(i - n_val) =
        data.outputs.row(order[static_cast<std::size_t>(i)]);
  }
  return split;
}

namespace {

// Affine starting model shared by the adaptive and end-to-end paths:
// output bias = training output mean; identical prolongation init.
ResNetModel initial_model(const DataSplit& split,
                          const std::optional<Eigen::MatrixXd>& input_basis,
                          const Eigen::MatrixXd& output_basis,
                          const TrainConfig& config) {
  const Eigen::Index r = output_basis.cols();
  const Eigen::Index d_m = split.train_x.cols();
  if (r < 1 || r > output_basis.rows())
    throw RankError("output basis rank outside [1, output dimension]");
  InputMap map;
  if (input_basis) {
    if (input_basis->cols() != r)
      throw RankError("input and output basis ranks differ");
    if (input_basis->rows() != d_m)
      throw ShapeError("input basis rows do not match the input dimension");
    map = BasisProjection{*input_basis};
  } else {
    LearnedProlongation lp;
    lp.p.resize(r, d_m);
    const double limit = std::sqrt(6.0 / static_cast<double>(r + d_m));
    CounterRng rng(derive_seed(config.seed, kProlongTag), 0);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < d_m; ++j)
        lp.p(i, j) = (2.0 * rng.next_uniform() - 1.0) * limit;
    lp.c = Eigen::VectorXd::Zero(r);
    map = lp;
  }
  Eigen::VectorXd mean_output = split.train_y.colwise().mean().transpose();
  return make_model(std::move(map), output_basis, std::move(mean_output));
}

double final_train_loss(const EpochRunResult& run, double fallback) {
  return run.losses.empty() ? fallback : run.losses.back();
}

}  // namespace

TrainOutcome adaptive_construct(const SampleSet& data,
                                const std::optional<Eigen::MatrixXd>& input_basis,
                                const Eigen::MatrixXd& output_basis,
                                const TrainConfig& config) {
  config.validate();
  if (config.mode == TrainMode::EndToEnd)
    throw ConfigError("adaptive_construct requires an adaptive mode");
  DataSplit split = split_data(data, config.val_fraction, config.seed);
  ResNetModel model = initial_model(split, input_basis, output_basis, config);
  const Eigen::Index k = config.layer_rank;
  const Eigen::Index stage_epochs = config.effective_stage_epochs();

  TrainReport report;
  Eigen::Index consumed = 0;
  double best_val =
      l2nu_accuracy(model, split.val_x, split.val_y).l2nu_accuracy;
  Eigen::Index stalls = 0;
  bool freezing = false;
  report.stopping_reason = StoppingReason::MaxDepth;

  for (Eigen::Index s = 0; s < config.max_depth; ++s) {
    model = append_layer(model, k, AppendInit::ZeroOutput,
                         derive_seed(derive_seed(config.seed, kAppendTag),
                                     static_cast<std::uint64_t>(s)));
    StageRecord rec;
    rec.depth = model.depth();
    rec.post_append_loss =
        mean_squared_loss(model, split.train_x, split.train_y);
    const TrainableSelector sel =
        config.mode == TrainMode::AdaptiveAll
            ? TrainableSelector::all_unfrozen()
            : TrainableSelector::only_layer(model.depth() - 1);
    EpochRunResult run = train_epochs(
        model, split.train_x, split.train_y, config, stage_epochs, sel,
        derive_seed(derive_seed(config.seed, kStageTag),
                    static_cast<std::uint64_t>(s)));
    model = std::move(run.model);
    rec.epochs_run = static_cast<Eigen::Index>(run.losses.size());
    consumed += rec.epochs_run;
    rec.train_loss = final_train_loss(run, rec.post_append_loss);
    const double train_acc =
        l2nu_accuracy(model, split.train_x, split.train_y).l2nu_accuracy;
    rec.val_accuracy =
        l2nu_accuracy(model, split.val_x, split.val_y).l2nu_accuracy;
    report.stages.push_back(rec);

    if (train_acc - rec.val_accuracy > config.overfit_gap) {
      if (config.mode == TrainMode::AdaptiveAll) {
        report.stopping_reason = StoppingReason::OverfitDetected;
        break;
      }
      // Sequential: freeze what exists and keep building.
      freezing = true;
    }
    if (freezing)
      for (Eigen::Index l = 0; l < model.depth(); ++l) model.frozen[l] = true;

    if (rec.val_accuracy > best_val) {
      best_val = rec.val_accuracy;
      stalls = 0;
    } else if (++stalls >= config.patience) {
      report.stopping_reason = StoppingReason::ValidationStalled;
      break;
    }
  }

  const Eigen::Index remaining =
      std::max<Eigen::Index>(0, config.total_epochs - consumed);
  EpochRunResult fin = train_epochs(model, split.train_x, split.train_y,
                                    config, remaining,
                                    TrainableSelector::all_unfrozen(),
                                    derive_seed(config.seed, kFinalTag));
  model = std::move(fin.model);
  consumed += static_cast<Eigen::Index>(fin.losses.size());
  report.final_accuracy =
      l2nu_accuracy(model, split.val_x, split.val_y).l2nu_accuracy;
  report.epochs_consumed = consumed;
  return {std::move(model), std::move(report)};
}

TrainOutcome end_to_end_train(const SampleSet& data,
                              const std::optional<Eigen::MatrixXd>& input_basis,
                              const Eigen::MatrixXd& output_basis,
                              Eigen::Index depth, const TrainConfig& config) {
  config.validate();
  if (depth < 0) throw ConfigError("depth must be nonnegative");
  DataSplit split = split_data(data, config.val_fraction, config.seed);
  ResNetModel model = initial_model(split, input_basis, output_basis, config);
  const Eigen::Index k = config.layer_rank;
  for (Eigen::Index l = 0; l < depth; ++l)
    model = append_layer(model, k, AppendInit::PaperGlorot,
                         derive_seed(derive_seed(config.seed, kAppendTag),
                                     static_cast<std::uint64_t>(l)));

  StageRecord rec;
  rec.depth = model.depth();
  rec.post_append_loss =
      mean_squared_loss(model, split.train_x, split.train_y);
  EpochRunResult run = train_epochs(model, split.train_x, split.train_y,
                                    config, config.total_epochs,
                                    TrainableSelector::all_unfrozen(),
                                    derive_seed(config.seed, kFinalTag));
  model = std::move(run.model);
  rec.epochs_run = static_cast<Eigen::Index>(run.losses.size());
  rec.train_loss = final_train_loss(run, rec.post_append_loss);
  rec.val_accuracy =
      l2nu_accuracy(model, split.val_x, split.val_y).l2nu_accuracy;

  TrainReport report;
  report.stages.push_back(rec);
  report.stopping_reason = StoppingReason::MaxDepth;
  report.final_accuracy = rec.val_accuracy;
  report.epochs_consumed = rec.epochs_run;
  return {std::move(model), std::move(report)};
}

TrainOutcome run_training(const SampleSet& data,
                          const std::optional<Eigen::MatrixXd>& input_basis,
                          const Eigen::MatrixXd& output_basis,
                          const TrainConfig& config) {
  if (config.mode == TrainMode::EndToEnd)
    return end_to_end_train(data, input_basis, output_basis,
                            config.max_depth, config);
  return adaptive_construct(data, input_basis, output_basis, config);
}

}  // namespace rbrn
