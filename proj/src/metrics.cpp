#include "rbrn/metrics.hpp"

#include <cmath>
#include <iostream>
#include <string>

#include "rbrn/errors.hpp"

namespace rbrn {

EvalResult l2nu_accuracy(const ResNetModel& model,
                         const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& outputs) {
  Eigen::MatrixXd predicted = forward_batch(model, inputs);
  if (outputs.rows() != inputs.rows() ||
      outputs.cols() != model.output_dim())
    throw ShapeError("test outputs do not match model output dimension");
  if (inputs.rows() < 1) throw EmptySample("empty test set");

  EvalResult result;
  result.rel_errors.resize(inputs.rows());
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const double ref = outputs.row(i).norm();
    if (ref == 0.0) {
      ++result.n_skipped;
      continue;
    }
    const double rel = (predicted.row(i) - outputs.row(i)).norm() / ref;
    result.rel_errors[result.n_test++] = rel;
    sum_sq += rel * rel;
  }
  if (result.n_skipped > 0)
    std::cerr << "l2nu_accuracy: skipped " << result.n_skipped
              << " zero-norm reference output(s)\n";
  if (result.n_test == 0)
    throw DegenerateSample("every reference output has zero norm");
  result.rel_errors.conservativeResize(result.n_test);
  result.l2nu_accuracy =
      1.0 - std::sqrt(sum_sq / static_cast<double>(result.n_test));
  return result;
}

double accuracy_gap(const ResNetModel& model, const Eigen::MatrixXd& train_x,
                    const Eigen::MatrixXd& train_y,
                    const Eigen::MatrixXd& val_x,
                    const Eigen::MatrixXd& val_y) {
  return l2nu_accuracy(model, train_x, train_y).l2nu_accuracy -
         l2nu_accuracy(model, val_x, val_y).l2nu_accuracy;
}

}  // namespace rbrn
