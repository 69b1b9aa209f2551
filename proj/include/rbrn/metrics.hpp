#pragma once

#include <Eigen/Dense>

#include "rbrn/resnet.hpp"

namespace rbrn {

// Sample estimate of the relative L2 accuracy of a surrogate over a
// test set: 1 - sqrt(mean of squared relative errors). At most 1;
// negative values mean the surrogate is worse than predicting zero.
struct EvalResult {
  double l2nu_accuracy = 0.0;
  Eigen::VectorXd rel_errors;  // per evaluated sample, nonnegative
  Eigen::Index n_test = 0;     // samples entering the mean
  Eigen::Index n_skipped = 0;  // zero-norm references left out
};

// Relative errors are ||model(m_i) - q_i|| / ||q_i||. Samples whose
// reference output has zero norm are skipped with a warning on stderr;
// if every sample is skipped the estimate is undefined and
// DegenerateSample is thrown.
EvalResult l2nu_accuracy(const ResNetModel& model,
                         const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& outputs);

// Train accuracy minus validation accuracy; positive gaps flag
// overfitting.
double accuracy_gap(const ResNetModel& model, const Eigen::MatrixXd& train_x,
                    const Eigen::MatrixXd& train_y,
                    const Eigen::MatrixXd& val_x,
                    const Eigen::MatrixXd& val_y);

}  // namespace rbrn
