#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace rbrn {

// Numerically stable ln(1 + e^x): shifted form above 30 avoids overflow,
// and for x = 1000 returns exactly 1000 in double precision.
double softplus(double x);

// d/dx softplus = logistic, always in (0, 1).
double softplus_prime(double x);

// One low-rank residual update z -> z + w1 * softplus(w0 * z + b).
// Rank k satisfies 1 <= k <= r where r is the shared latent width.
struct ResidualLayer {
  Eigen::MatrixXd w0;  // k x r
  Eigen::VectorXd b;   // k
  Eigen::MatrixXd w1;  // r x k

  Eigen::Index rank() const { return w0.rows(); }
};

// Fixed reduction z0 = v^T m with v d_M x r (columns need not be
// orthonormal, though reduced bases are).
struct BasisProjection {
  Eigen::MatrixXd v;
};

// Trainable affine lift z0 = p m + c with p r x d_M.
struct LearnedProlongation {
  Eigen::MatrixXd p;
  Eigen::VectorXd c;
};

using InputMap = std::variant<BasisProjection, LearnedProlongation>;

enum class AppendInit {
  ZeroOutput,   // w1 = 0: appending is an exact identity perturbation
  PaperGlorot,  // Glorot-uniform in all three arrays
};

// Latent-space residual network q_hat = output_basis z_L + output_bias.
// With zero layers it is exactly the affine map through the input map.
// Value-semantic: copies are independent, concurrent reads are safe.
struct ResNetModel {
  InputMap input_map;
  std::vector<ResidualLayer> layers;
  std::vector<bool> frozen;          // per-layer; frozen layers never move
  Eigen::MatrixXd output_basis;      // d_Q x r
  Eigen::VectorXd output_bias;       // d_Q, trainable

  Eigen::Index latent_dim() const { return output_basis.cols(); }
  Eigen::Index output_dim() const { return output_basis.rows(); }
  Eigen::Index input_dim() const;
  Eigen::Index depth() const { return static_cast<Eigen::Index>(layers.size()); }
  bool has_learned_prolongation() const;

  // Trainable weights: 2rk + k per layer plus the prolongation entries
  // when learned. The output bias is counted as part of the affine
  // baseline, not the network.
  Eigen::Index weight_count() const;

  // Throws ShapeError on any internal dimension mismatch, RankError if a
  // layer violates 1 <= k <= r.
  void check_shapes() const;
};

// Validates shapes and fills an all-unfrozen mask.
ResNetModel make_model(InputMap input_map, Eigen::MatrixXd output_basis,
                       Eigen::VectorXd output_bias);

// Intermediate states retained for reverse-mode differentiation.
struct ForwardTrace {
  std::vector<Eigen::VectorXd> z;    // z_0 .. z_L, depth + 1 entries
  std::vector<Eigen::VectorXd> pre;  // w0 z_l + b per layer
  std::vector<Eigen::VectorXd> act;  // softplus(pre) per layer
};

Eigen::VectorXd forward(const ResNetModel& model, const Eigen::VectorXd& m);
Eigen::VectorXd forward(const ResNetModel& model, const Eigen::VectorXd& m,
                        ForwardTrace& trace);

// Row-per-sample evaluation, inputs B x d_M -> outputs B x d_Q.
Eigen::MatrixXd forward_batch(const ResNetModel& model,
                              const Eigen::MatrixXd& inputs);

// Gradient blocks mirroring the trainable parts of a model. Frozen
// layers keep zero blocks of the right shape.
struct ModelGradients {
  Eigen::MatrixXd prolongation;       // r x d_M, empty for BasisProjection
  Eigen::VectorXd prolongation_bias;  // r, empty for BasisProjection
  Eigen::VectorXd output_bias;        // d_Q
  std::vector<ResidualLayer> layers;

  static ModelGradients zeros_like(const ResNetModel& model);
};

// Mean squared empirical risk (1/B) sum ||q_hat_i - q_i||^2 with exact
// reverse-mode gradients accumulated over the batch. Throws
// NonFiniteLoss when any per-sample output is non-finite.
double loss_and_grad(const ResNetModel& model, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& outputs, ModelGradients& grads);

// Loss only; same contract without the gradient work.
double mean_squared_loss(const ResNetModel& model,
                         const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& outputs);

// Returns a copy with one new trainable layer of rank k at the end.
// ZeroOutput leaves every forward output bit-identical; PaperGlorot
// draws all three arrays Glorot-uniform. Throws RankError unless
// 1 <= k <= latent_dim.
ResNetModel append_layer(const ResNetModel& model, Eigen::Index k,
                         AppendInit init, std::uint64_t seed);

}  // namespace rbrn
