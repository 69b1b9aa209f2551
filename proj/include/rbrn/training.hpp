#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rbrn/problems.hpp"
#include "rbrn/resnet.hpp"

namespace rbrn {

enum class TrainMode {
  AdaptiveAll,         // every stage trains all unfrozen parameters
  AdaptiveSequential,  // every stage trains only the newly added layer
  EndToEnd,            // fixed depth, single training run
};

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);  // UsageError

struct TrainConfig {
  double alpha = 1e-3;     // Adam step length
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  Eigen::Index batch_size = 2;
  Eigen::Index total_epochs = 50;
  Eigen::Index max_depth = 10;
  // Per-stage epoch budget; 0 means total_epochs / max_depth (floored,
  // at least 1).
  Eigen::Index stage_epochs = 0;
  TrainMode mode = TrainMode::AdaptiveAll;
  Eigen::Index patience = 2;   // stages without validation improvement
  double overfit_gap = 0.05;   // train minus validation accuracy
  double val_fraction = 0.1;
  Eigen::Index layer_rank = 4; // must not exceed the latent width
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError on any out-of-range field
  Eigen::Index effective_stage_epochs() const;
};

// First/second gradient moments for one packed parameter vector.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  static AdamState zeros(Eigen::Index n);
};

// One bias-corrected Adam update of `weights` in place. Deterministic;
// a zero gradient leaves the weights untouched.
void adam_step(AdamState& state, Eigen::VectorXd& weights,
               const Eigen::VectorXd& grads, const TrainConfig& config);

// Chooses which parameter blocks an optimization run updates. Frozen
// layers are never selected. AllUnfrozen covers the output bias and a
// learned prolongation as well; OnlyLayer is just that layer's arrays.
struct TrainableSelector {
  enum class Kind { AllUnfrozen, OnlyLayer };
  Kind kind = Kind::AllUnfrozen;
  Eigen::Index layer = -1;

  static TrainableSelector all_unfrozen() { return {}; }
  static TrainableSelector only_layer(Eigen::Index l) {
    return {Kind::OnlyLayer, l};
  }
};

struct EpochRunResult {
  ResNetModel model;
  std::vector<double> losses;  // full-training-set loss after each epoch
  bool aborted_non_finite = false;
};

// n_epochs passes of mini-batch Adam with a fresh optimizer state and a
// per-epoch reshuffled batch order. A non-finite evaluation aborts the
// run and returns the best model seen so far.
EpochRunResult train_epochs(const ResNetModel& model,
                            const Eigen::MatrixXd& inputs,
                            const Eigen::MatrixXd& outputs,
                            const TrainConfig& config, Eigen::Index n_epochs,
                            const TrainableSelector& selector,
                            std::uint64_t shuffle_seed);

enum class StoppingReason { MaxDepth, OverfitDetected, ValidationStalled };

std::string to_string(StoppingReason reason);
StoppingReason parse_stopping_reason(const std::string& text);  // UsageError

struct StageRecord {
  Eigen::Index depth = 0;
  double post_append_loss = 0.0;  // training loss before any step
  double train_loss = 0.0;        // training loss after the stage
  double val_accuracy = 0.0;
  Eigen::Index epochs_run = 0;
};

struct TrainReport {
  std::vector<StageRecord> stages;
  StoppingReason stopping_reason = StoppingReason::MaxDepth;
  double final_accuracy = 0.0;
  Eigen::Index epochs_consumed = 0;
};

// Deterministic train/validation split: the first ceil(N*val_fraction)
// entries of a seeded permutation validate, the rest train.
struct DataSplit {
  Eigen::MatrixXd train_x, train_y;
  Eigen::MatrixXd val_x, val_y;
};

DataSplit split_data(const SampleSet& data, double val_fraction,
                     std::uint64_t seed);

struct TrainOutcome {
  ResNetModel model;
  TrainReport report;
};

// Greedy depth construction: start from the affine model (output bias =
// training output mean; learned prolongation when no input basis is
// given), repeatedly append a zero-output layer and train it for a
// stage, stop on MaxDepth / ValidationStalled / OverfitDetected, then
// spend the remaining epoch budget on one end-to-end training pass. In
// AdaptiveSequential mode an overfit event freezes completed layers and
// construction continues instead of stopping.
TrainOutcome adaptive_construct(const SampleSet& data,
                                const std::optional<Eigen::MatrixXd>& input_basis,
                                const Eigen::MatrixXd& output_basis,
                                const TrainConfig& config);

// Baseline: build the full depth at once (Glorot init) and train every
// parameter for total_epochs. Shares splits, inits and shuffle streams
// with adaptive_construct so depth 0 coincides bit-for-bit.
TrainOutcome end_to_end_train(const SampleSet& data,
                              const std::optional<Eigen::MatrixXd>& input_basis,
                              const Eigen::MatrixXd& output_basis,
                              Eigen::Index depth, const TrainConfig& config);

// Dispatch on config.mode; EndToEnd builds depth = max_depth.
TrainOutcome run_training(const SampleSet& data,
                          const std::optional<Eigen::MatrixXd>& input_basis,
                          const Eigen::MatrixXd& output_basis,
                          const TrainConfig& config);

}  // namespace rbrn
