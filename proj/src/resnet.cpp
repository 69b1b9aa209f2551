#include "rbrn/resnet.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "rbrn/errors.hpp"
#include "rbrn/rng.hpp"

namespace rbrn {

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double softplus_prime(double x) {
  // Logistic, evaluated on the side that keeps the exponent negative.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::Index ResNetModel::input_dim() const {
  if (const auto* bp = std::get_if<BasisProjection>(&input_map))
    return bp->v.rows();
  return std::get<LearnedProlongation>(input_map).p.cols();
}

bool ResNetModel::has_learned_prolongation() const {
  return std::holds_alternative<LearnedProlongation>(input_map);
}

Eigen::Index ResNetModel::weight_count() const {
  Eigen::Index count = 0;
  for (const auto& layer : layers)
    count += layer.w0.size() + layer.b.size() + layer.w1.size();
  if (const auto* lp = std::get_if<LearnedProlongation>(&input_map))
    count += lp->p.size() + lp->c.size();
  return count;
}

void ResNetModel::check_shapes() const {
  const Eigen::Index r = output_basis.cols();
  if (r < 1) throw ShapeError("model latent width must be at least 1");
  if (output_bias.size() != output_basis.rows())
    throw ShapeError("output bias length does not match output basis rows");
  if (const auto* bp = std::get_if<BasisProjection>(&input_map)) {
    if (bp->v.cols() != r)
      throw ShapeError("input basis columns do not match latent width");
  } else {
    const auto& lp = std::get<LearnedProlongation>(input_map);
    if (lp.p.rows() != r || lp.c.size() != r)
      throw ShapeError("prolongation shape does not match latent width");
  }
  if (frozen.size() != layers.size())
    throw ShapeError("frozen mask length does not match layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const Eigen::Index k = layer.w0.rows();
    if (k < 1 || k > r)
      throw RankError("layer " + std::to_string(l) + " rank " +
                      std::to_string(k) + " outside [1, " + std::to_string(r) +
                      "]");
    if (layer.w0.cols() != r || layer.b.size() != k ||
        layer.w1.rows() != r || layer.w1.cols() != k)
      throw ShapeError("layer " + std::to_string(l) + " has mismatched arrays");
  }
}

ResNetModel make_model(InputMap input_map, Eigen::MatrixXd output_basis,
                       Eigen::VectorXd output_bias) {
  ResNetModel model;
  model.input_map = std::move(input_map);
  model.output_basis = std::move(output_basis);
  model.output_bias = std::move(output_bias);
  model.check_shapes();
  return model;
}

namespace {

Eigen::VectorXd map_input(const ResNetModel& model, const Eigen::VectorXd& m) {
  if (const auto* bp = std::get_if<BasisProjection>(&model.input_map))
    return bp->v.transpose() * m;
  const auto& lp = std::get<LearnedProlongation>(model.input_map);
  return lp.p * m + lp.c;
}

// Core recurrence; trace may be null. Shapes are assumed valid.
Eigen::VectorXd run_forward(const ResNetModel& model, const Eigen::VectorXd& m,
                            ForwardTrace* trace) {
  Eigen::VectorXd z = map_input(model, m);
  if (trace) {
    trace->z.clear();
    trace->pre.clear();
    trace->act.clear();
    trace->z.reserve(model.layers.size() + 1);
    trace->pre.reserve(model.layers.size());
    trace->act.reserve(model.layers.size());
    trace->z.push_back(z);
  }
  for (const auto& layer : model.layers) {
    Eigen::VectorXd pre = layer.w0 * z + layer.b;
    Eigen::VectorXd act = pre.unaryExpr([](double x) { return softplus(x); });
    z += layer.w1 * act;
    if (trace) {
      trace->pre.push_back(std::move(pre));
      trace->act.push_back(std::move(act));
      trace->z.push_back(z);
    }
  }
  return model.output_basis * z + model.output_bias;
}

void check_input_length(const ResNetModel& model, Eigen::Index got) {
  if (got != model.input_dim())
    throw ShapeError("input length " + std::to_string(got) +
                     " does not match model input dimension " +
                     std::to_string(model.input_dim()));
}

void check_batch(const ResNetModel& model, const Eigen::MatrixXd& inputs,
                 const Eigen::MatrixXd& outputs) {
  model.check_shapes();
  check_input_length(model, inputs.cols());
  if (outputs.cols() != model.output_dim())
    throw ShapeError("output width " + std::to_string(outputs.cols()) +
                     " does not match model output dimension " +
                     std::to_string(model.output_dim()));
  if (inputs.rows() != outputs.rows())
    throw ShapeError("batch input and output row counts differ");
  if (inputs.rows() < 1) throw ShapeError("batch must contain a sample");
}

}  // namespace

Eigen::VectorXd forward(const ResNetModel& model, const Eigen::VectorXd& m) {
  model.check_shapes();
  check_input_length(model, m.size());
  return run_forward(model, m, nullptr);
}

Eigen::VectorXd forward(const ResNetModel& model, const Eigen::VectorXd& m,
                        ForwardTrace& trace) {
  model.check_shapes();
  check_input_length(model, m.size());
  return run_forward(model, m, &trace);
}

Eigen::MatrixXd forward_batch(const ResNetModel& model,
                              const Eigen::MatrixXd& inputs) {
  model.check_shapes();
  check_input_length(model, inputs.cols());
  Eigen::MatrixXd out(inputs.rows(), model.output_dim());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i)
    out.row(i) = run_forward(model, inputs.row(i).transpose(), nullptr);
  return out;
}

ModelGradients ModelGradients::zeros_like(const ResNetModel& model) {
  ModelGradients g;
  if (const auto* lp = std::get_if<LearnedProlongation>(&model.input_map)) {
    g.prolongation = Eigen::MatrixXd::Zero(lp->p.rows(), lp->p.cols());
    g.prolongation_bias = Eigen::VectorXd::Zero(lp->c.size());
  }
  g.output_bias = Eigen::VectorXd::Zero(model.output_bias.size());
  g.layers.reserve(model.layers.size());
  for (const auto& layer : model.layers) {
    ResidualLayer zero;
    zero.w0 = Eigen::MatrixXd::Zero(layer.w0.rows(), layer.w0.cols());
    zero.b = Eigen::VectorXd::Zero(layer.b.size());
    zero.w1 = Eigen::MatrixXd::Zero(layer.w1.rows(), layer.w1.cols());
    g.layers.push_back(std::move(zero));
  }
  return g;
}

double loss_and_grad(const ResNetModel& model, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& outputs, ModelGradients& grads) {
  check_batch(model, inputs, outputs);
  grads = ModelGradients::zeros_like(model);
  const Eigen::Index batch = inputs.rows();
  const double coef = 2.0 / static_cast<double>(batch);
  const Eigen::Index depth = model.depth();
  double loss = 0.0;
  ForwardTrace trace;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const Eigen::VectorXd m = inputs.row(i).transpose();
    const Eigen::VectorXd qhat = run_forward(model, m, &trace);
    const Eigen::VectorXd err = qhat - outputs.row(i).transpose();
    if (!err.allFinite())
      throw NonFiniteLoss("non-finite output on sample " + std::to_string(i));
    loss += err.squaredNorm();

    // Reverse sweep: lambda is d(loss)/d(z_l), propagated through every
    // layer; frozen layers pass the adjoint but accumulate nothing.
    Eigen::VectorXd lambda = model.output_basis.transpose() * (coef * err);
    grads.output_bias += coef * err;
    for (Eigen::Index l = depth - 1; l >= 0; --l) {
      const auto& layer = model.layers[l];
      const Eigen::VectorXd v =
          trace.pre[l]
              .unaryExpr([](double x) { return softplus_prime(x); })
              .cwiseProduct(layer.w1.transpose() * lambda);
      if (!model.frozen[l]) {
        auto& g = grads.layers[l];
        g.w1 += lambda * trace.act[l].transpose();
        g.b += v;
        g.w0 += v * trace.z[l].transpose();
      }
      lambda += layer.w0.transpose() * v;
    }
    if (model.has_learned_prolongation()) {
      grads.prolongation += lambda * m.transpose();
      grads.prolongation_bias += lambda;
    }
  }
  loss /= static_cast<double>(batch);
  if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite batch loss");
  return loss;
}

double mean_squared_loss(const ResNetModel& model,
                         const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& outputs) {
  check_batch(model, inputs, outputs);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const Eigen::VectorXd err =
        run_forward(model, inputs.row(i).transpose(), nullptr) -
        outputs.row(i).transpose();
    if (!err.allFinite())
      throw NonFiniteLoss("non-finite output on sample " + std::to_string(i));
    loss += err.squaredNorm();
  }
  loss /= static_cast<double>(inputs.rows());
  if (!std::isfinite(loss)) throw NonFiniteLoss("non-finite batch loss");
  return loss;
}

namespace {

void fill_uniform(Eigen::MatrixXd& m, double limit, std::uint64_t seed,
                  std::uint64_t tag) {
  CounterRng rng(seed, tag);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = (2.0 * rng.next_uniform() - 1.0) * limit;
}

}  // namespace

ResNetModel append_layer(const ResNetModel& model, Eigen::Index k,
                         AppendInit init, std::uint64_t seed) {
  model.check_shapes();
  const Eigen::Index r = model.latent_dim();
  if (k < 1 || k > r)
    throw RankError("appended layer rank " + std::to_string(k) +
                    " outside [1, " + std::to_string(r) + "]");
  ResNetModel grown = model;
  ResidualLayer layer;
  const double glorot = std::sqrt(6.0 / static_cast<double>(r + k));
  const double bias_limit = std::sqrt(3.0 / static_cast<double>(k));
  layer.w0.resize(k, r);
  fill_uniform(layer.w0, glorot, seed, 0);
  Eigen::MatrixXd b(k, 1);
  fill_uniform(b, bias_limit, seed, 1);
  layer.b = b.col(0);
  layer.w1 = Eigen::MatrixXd::Zero(r, k);
  if (init == AppendInit::PaperGlorot) fill_uniform(layer.w1, glorot, seed, 2);
  grown.layers.push_back(std::move(layer));
  grown.frozen.push_back(false);
  return grown;
}

}  // namespace rbrn
