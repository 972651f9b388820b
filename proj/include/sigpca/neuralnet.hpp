#pragma once

// Dense feed-forward regression network: affine -> batch norm -> ReLU per
// hidden layer, affine output with optional ReLU, MSE loss, Adam.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sigpca::neuralnet {

enum class OutputActivation { identity, relu };
enum class Mode { train, eval };

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 1;
  std::vector<bool> batch_norm;  // one flag per hidden layer
  OutputActivation output_activation = OutputActivation::identity;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Dense {
  Eigen::MatrixXd weight;  // fan_in x fan_out
  Eigen::RowVectorXd bias;
};

struct BatchNorm {
  Eigen::RowVectorXd gamma;
  Eigen::RowVectorXd beta;
  Eigen::RowVectorXd running_mean;
  Eigen::RowVectorXd running_var;
  double epsilon = 1e-5;
  double momentum = 0.1;
};

struct HiddenLayer {
  Dense dense;
  std::optional<BatchNorm> norm;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 0.01;
  std::int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

struct MlpModel {
  MlpSpec spec;
  std::vector<HiddenLayer> hidden;
  Dense output;
  AdamState adam;
};

struct TrainConfig {
  std::size_t epochs = 500;
  double learning_rate = 0.01;
  std::size_t batch_size = 256;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

/// He-uniform weights, zero biases, identity batch norm.
MlpModel mlp_init(const MlpSpec& spec);

/// Trainable tensors in a fixed order: per hidden layer weight, bias and
/// (with batch norm) gamma, beta; then output weight and bias.
std::vector<std::span<double>> parameters(MlpModel& model);
std::vector<std::span<const double>> parameters(const MlpModel& model);
std::vector<std::string> parameter_names(const MlpModel& model);

/// Train mode normalises with batch statistics and leaves running statistics
/// untouched; eval mode uses the running statistics.
Eigen::MatrixXd mlp_forward(const MlpModel& model, const Eigen::MatrixXd& x, Mode mode);

Eigen::MatrixXd mlp_predict(const MlpModel& model, const Eigen::MatrixXd& x);

struct LossGradient {
  double loss = 0.0;
  std::vector<std::vector<double>> gradients;  // aligned with parameters()
};

/// Masked MSE over one batch in train mode and its analytic gradient. Masked
/// entries (mask == 0) do not enter the loss, whatever their target value.
LossGradient mlp_loss_gradient(const MlpModel& model, const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& y, const MaskMatrix* mask = nullptr);

double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                Mode mode, const MaskMatrix* mask = nullptr);

/// Minibatch Adam on masked MSE. Returns the mean training loss of each epoch.
std::vector<double> mlp_train(MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                              const TrainConfig& cfg, const MaskMatrix* mask = nullptr);

/// Network plus the affine input and target standardisation it was trained
/// with. Inputs are mapped to (x - input_shift) / input_scale per column,
/// targets to (y - target_shift) / target_scale. A zero target_scale marks
/// constant targets; predictions are then exactly target_shift.
struct ModelBundle {
  MlpModel net;
  Eigen::RowVectorXd input_shift;
  Eigen::RowVectorXd input_scale;
  double target_shift = 0.0;
  double target_scale = 1.0;
  std::vector<double> loss_trace;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& raw_inputs) const;
};

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace sigpca::neuralnet
