#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "sigpca/neuralnet.hpp"
#include "support.hpp"

namespace testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Entries whose analytic and numeric gradients are both below this scale
/// are compared in absolute terms. Central differences of an O(1) loss carry
/// up to about 1e-10 of rounding noise, visible on biases that feed batch
/// norm, whose exact gradient is zero.
inline constexpr double kGradFloor = 1e-4;

/// Central-difference check of every parameter entry of `model` on (x, y).
inline GradCheck gradient_check(sigpca::neuralnet::MlpModel model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                const sigpca::neuralnet::MaskMatrix* mask = nullptr, double h = 1e-5) {
  using namespace sigpca::neuralnet;
  const auto analytic = mlp_loss_gradient(model, x, y, mask);
  const auto names = parameter_names(model);
  auto params = parameters(model);
  GradCheck out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + h;
      const double up = mlp_loss(model, x, y, Mode::train, mask);
      params[p][i] = saved - h;
      const double down = mlp_loss(model, x, y, Mode::train, mask);
      params[p][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.gradients[p][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradFloor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = names[p] + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

/// Random spec with 1-3 hidden layers; batch norm and output activation
/// vary with the seed. Weights are perturbed away from their init so that
/// biases and batch-norm parameters carry non-trivial gradients.
inline sigpca::neuralnet::MlpModel random_model(std::uint64_t seed) {
  using namespace sigpca::neuralnet;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> layers(1, 3), width(2, 6), dim(1, 4);
  MlpSpec spec;
  spec.input_dim = static_cast<std::size_t>(dim(rng));
  const int L = layers(rng);
  for (int l = 0; l < L; ++l) {
    spec.hidden_widths.push_back(static_cast<std::size_t>(width(rng)));
    spec.batch_norm.push_back(rng() % 2 == 0);
  }
  spec.output_dim = static_cast<std::size_t>(dim(rng));
  spec.output_activation = rng() % 2 == 0 ? OutputActivation::identity : OutputActivation::relu;
  spec.seed = seed;
  auto model = mlp_init(spec);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& layer : model.hidden) {
    for (auto& b : layer.dense.bias) b = n(rng);
    if (layer.norm) {
      for (auto& g : layer.norm->gamma) g = 1.0 + n(rng);
      for (auto& b : layer.norm->beta) b = n(rng);
    }
  }
  // Positive output bias keeps most ReLU outputs active.
  for (auto& b : model.output.bias) b = 0.5 + n(rng);
  return model;
}

}  // namespace testing
