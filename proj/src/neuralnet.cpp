#include "sigpca/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sigpca/container.hpp"
#include "sigpca/error.hpp"

namespace sigpca::neuralnet {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw ConfigError("network input and output dims must be >= 1");
  }
  for (auto w : hidden_widths) {
    if (w < 1) throw ConfigError("hidden layer widths must be >= 1");
  }
  if (batch_norm.size() != hidden_widths.size()) {
    throw ConfigError("batch_norm needs one flag per hidden layer");
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

MlpModel mlp_init(const MlpSpec& spec) {
  spec.validate();
  MlpModel model;
  model.spec = spec;
  std::mt19937_64 rng(spec.seed);
  auto dense = [&](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Dense d;
    d.weight.resize(static_cast<Index>(fan_in), static_cast<Index>(fan_out));
    for (Index i = 0; i < d.weight.rows(); ++i) {
      for (Index j = 0; j < d.weight.cols(); ++j) d.weight(i, j) = dist(rng);
    }
    d.bias = RowVectorXd::Zero(static_cast<Index>(fan_out));
    return d;
  };
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden_widths.size(); ++l) {
    HiddenLayer layer;
    const auto width = spec.hidden_widths[l];
    layer.dense = dense(fan_in, width);
    if (spec.batch_norm[l]) {
      BatchNorm bn;
      const auto w = static_cast<Index>(width);
      bn.gamma = RowVectorXd::Ones(w);
      bn.beta = RowVectorXd::Zero(w);
      bn.running_mean = RowVectorXd::Zero(w);
      bn.running_var = RowVectorXd::Ones(w);
      layer.norm = bn;
    }
    model.hidden.push_back(std::move(layer));
    fan_in = width;
  }
  model.output = dense(fan_in, spec.output_dim);
  return model;
}

namespace {

template <typename Model, typename Span>
std::vector<Span> collect(Model& model) {
  std::vector<Span> out;
  auto add = [&](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
  for (auto& layer : model.hidden) {
    add(layer.dense.weight);
    add(layer.dense.bias);
    if (layer.norm) {
      add(layer.norm->gamma);
      add(layer.norm->beta);
    }
  }
  add(model.output.weight);
  add(model.output.bias);
  return out;
}

struct LayerCache {
  MatrixXd input;   // activation entering the affine map
  MatrixXd normed;  // x-hat (batch norm) or pre-activation
  MatrixXd pre_relu;
  RowVectorXd batch_mean;
  RowVectorXd batch_var;
  RowVectorXd inv_std;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  MatrixXd last_hidden;
  MatrixXd output_pre;
};

MatrixXd forward_impl(const MlpModel& model, const MatrixXd& x, Mode mode, ForwardCache* cache) {
  if (static_cast<std::size_t>(x.cols()) != model.spec.input_dim) {
    throw DataError("network input has " + std::to_string(x.cols()) + " columns, expected " +
                    std::to_string(model.spec.input_dim));
  }
  const Index B = x.rows();
  if (B < 1) throw DataError("empty batch");
  MatrixXd a = x;
  if (cache) cache->layers.resize(model.hidden.size());
  for (std::size_t l = 0; l < model.hidden.size(); ++l) {
    const auto& layer = model.hidden[l];
    MatrixXd z = a * layer.dense.weight;
    z.rowwise() += layer.dense.bias;
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->input = a;
    if (layer.norm) {
      const auto& bn = *layer.norm;
      RowVectorXd mean, var;
      if (mode == Mode::train) {
        if (B < 2) throw DataError("batch norm in train mode needs a batch of at least 2 rows");
        mean = z.colwise().mean();
        var = (z.rowwise() - mean).array().square().colwise().mean();
      } else {
        mean = bn.running_mean;
        var = bn.running_var;
      }
      const RowVectorXd inv_std = (var.array() + bn.epsilon).rsqrt();
      MatrixXd xhat = (z.rowwise() - mean).array().rowwise() * inv_std.array();
      z = (xhat.array().rowwise() * bn.gamma.array()).rowwise() + bn.beta.array();
      if (lc) {
        lc->normed = std::move(xhat);
        lc->batch_mean = mean;
        lc->batch_var = var;
        lc->inv_std = inv_std;
      }
    }
    if (lc) lc->pre_relu = z;
    a = z.cwiseMax(0.0);
  }
  MatrixXd o = a * model.output.weight;
  o.rowwise() += model.output.bias;
  if (cache) {
    cache->last_hidden = a;
    cache->output_pre = o;
  }
  if (model.spec.output_activation == OutputActivation::relu) o = o.cwiseMax(0.0);
  return o;
}

void check_targets(const MlpModel& model, const MatrixXd& x, const MatrixXd& y, const MaskMatrix* mask) {
  if (x.rows() != y.rows()) throw DataError("input and target row counts differ");
  if (static_cast<std::size_t>(y.cols()) != model.spec.output_dim) {
    throw DataError("target has " + std::to_string(y.cols()) + " columns, expected " +
                    std::to_string(model.spec.output_dim));
  }
  if (mask && (mask->rows() != y.rows() || mask->cols() != y.cols())) {
    throw DataError("mask shape differs from target shape");
  }
}

// Residual with masked entries forced to zero, plus the count of live entries.
std::pair<MatrixXd, double> masked_residual(const MatrixXd& pred, const MatrixXd& y, const MaskMatrix* mask) {
  MatrixXd r(pred.rows(), pred.cols());
  double count = 0.0;
  for (Index j = 0; j < pred.cols(); ++j) {
    for (Index i = 0; i < pred.rows(); ++i) {
      if (!mask || (*mask)(i, j)) {
        r(i, j) = pred(i, j) - y(i, j);
        count += 1.0;
      } else {
        r(i, j) = 0.0;
      }
    }
  }
  return {std::move(r), count};
}

template <typename M>
void push(std::vector<std::vector<double>>& out, const M& m) {
  out.emplace_back(m.data(), m.data() + m.size());
}

LossGradient loss_gradient_impl(const MlpModel& model, const MatrixXd& x, const MatrixXd& y,
                                const MaskMatrix* mask, ForwardCache& cache) {
  const MatrixXd pred = forward_impl(model, x, Mode::train, &cache);
  auto [residual, count] = masked_residual(pred, y, mask);
  if (count == 0.0) throw DataError("every target entry is masked");
  LossGradient out;
  out.loss = residual.squaredNorm() / count;

  MatrixXd grad = (2.0 / count) * residual;
  if (model.spec.output_activation == OutputActivation::relu) {
    grad = (cache.output_pre.array() > 0.0).select(grad, 0.0);
  }
  // Gradients are produced back to front, then reversed per layer group.
  std::vector<std::vector<std::vector<double>>> groups;
  {
    std::vector<std::vector<double>> g;
    MatrixXd dw = cache.last_hidden.transpose() * grad;
    RowVectorXd db = grad.colwise().sum();
    push(g, dw);
    push(g, db);
    groups.push_back(std::move(g));
  }
  MatrixXd da = grad * model.output.weight.transpose();
  for (std::size_t l = model.hidden.size(); l-- > 0;) {
    const auto& layer = model.hidden[l];
    const auto& lc = cache.layers[l];
    MatrixXd dz = (lc.pre_relu.array() > 0.0).select(da, 0.0);
    std::vector<std::vector<double>> g;
    RowVectorXd dgamma, dbeta;
    if (layer.norm) {
      const double B = static_cast<double>(x.rows());
      dgamma = (dz.array() * lc.normed.array()).colwise().sum();
      dbeta = dz.colwise().sum();
      const MatrixXd dxhat = dz.array().rowwise() * layer.norm->gamma.array();
      const RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const RowVectorXd sum_dxhat_xhat = (dxhat.array() * lc.normed.array()).colwise().sum();
      MatrixXd t = (B * dxhat).rowwise() - sum_dxhat;
      t -= (lc.normed.array().rowwise() * sum_dxhat_xhat.array()).matrix();
      dz = (t.array().rowwise() * (lc.inv_std.array() / B)).matrix();
    }
    MatrixXd dw = lc.input.transpose() * dz;
    RowVectorXd db = dz.colwise().sum();
    push(g, dw);
    push(g, db);
    if (layer.norm) {
      push(g, dgamma);
      push(g, dbeta);
    }
    groups.push_back(std::move(g));
    if (l > 0) da = dz * layer.dense.weight.transpose();
  }
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    for (auto& t : *it) out.gradients.push_back(std::move(t));
  }
  return out;
}

void update_running_stats(MlpModel& model, const ForwardCache& cache, Index batch) {
  const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
  for (std::size_t l = 0; l < model.hidden.size(); ++l) {
    auto& norm = model.hidden[l].norm;
    if (!norm) continue;
    const auto& lc = cache.layers[l];
    norm->running_mean = (1.0 - norm->momentum) * norm->running_mean + norm->momentum * lc.batch_mean;
    norm->running_var =
        (1.0 - norm->momentum) * norm->running_var + (norm->momentum * unbias) * lc.batch_var;
  }
}

void adam_step(MlpModel& model, const std::vector<std::vector<double>>& grads) {
  auto params = parameters(model);
  auto& adam = model.adam;
  if (adam.first_moment.size() != params.size()) {
    adam.first_moment.clear();
    adam.second_moment.clear();
    for (const auto& p : params) {
      adam.first_moment.emplace_back(p.size(), 0.0);
      adam.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  ++adam.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = adam.first_moment[t];
    auto& v = adam.second_moment[t];
    const auto& g = grads[t];
    auto p = params[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= adam.learning_rate * mhat / (std::sqrt(vhat) + adam.epsilon);
    }
  }
}

}  // namespace

std::vector<std::span<double>> parameters(MlpModel& model) {
  return collect<MlpModel, std::span<double>>(model);
}

std::vector<std::span<const double>> parameters(const MlpModel& model) {
  return collect<const MlpModel, std::span<const double>>(model);
}

std::vector<std::string> parameter_names(const MlpModel& model) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < model.hidden.size(); ++l) {
    const auto p = "hidden" + std::to_string(l) + ".";
    names.push_back(p + "weight");
    names.push_back(p + "bias");
    if (model.hidden[l].norm) {
      names.push_back(p + "gamma");
      names.push_back(p + "beta");
    }
  }
  names.emplace_back("output.weight");
  names.emplace_back("output.bias");
  return names;
}

MatrixXd mlp_forward(const MlpModel& model, const MatrixXd& x, Mode mode) {
  return forward_impl(model, x, mode, nullptr);
}

MatrixXd mlp_predict(const MlpModel& model, const MatrixXd& x) {
  return forward_impl(model, x, Mode::eval, nullptr);
}

LossGradient mlp_loss_gradient(const MlpModel& model, const MatrixXd& x, const MatrixXd& y,
                               const MaskMatrix* mask) {
  check_targets(model, x, y, mask);
  ForwardCache cache;
  return loss_gradient_impl(model, x, y, mask, cache);
}

double mlp_loss(const MlpModel& model, const MatrixXd& x, const MatrixXd& y, Mode mode,
                const MaskMatrix* mask) {
  check_targets(model, x, y, mask);
  const MatrixXd pred = forward_impl(model, x, mode, nullptr);
  auto [residual, count] = masked_residual(pred, y, mask);
  if (count == 0.0) throw DataError("every target entry is masked");
  return residual.squaredNorm() / count;
}

std::vector<double> mlp_train(MlpModel& model, const MatrixXd& x, const MatrixXd& y,
                              const TrainConfig& cfg, const MaskMatrix* mask) {
  cfg.validate();
  check_targets(model, x, y, mask);
  const Index N = x.rows();
  const bool any_norm = std::any_of(model.hidden.begin(), model.hidden.end(),
                                    [](const HiddenLayer& l) { return l.norm.has_value(); });
  if (any_norm && N < 2) throw DataError("batch norm training needs at least 2 rows");
  model.adam.learning_rate = cfg.learning_rate;

  // Batch boundaries; a trailing single row joins the previous batch when
  // batch norm is present.
  std::vector<Index> bounds;
  const auto bs = static_cast<Index>(cfg.batch_size);
  for (Index b = 0; b < N; b += bs) bounds.push_back(b);
  bounds.push_back(N);
  if (any_norm && bounds.size() > 2 && bounds[bounds.size() - 1] - bounds[bounds.size() - 2] == 1) {
    bounds.erase(bounds.end() - 2);
  }

  std::mt19937_64 rng(cfg.shuffle_seed);
  std::vector<Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), Index{0});
  std::vector<double> trace;
  trace.reserve(cfg.epochs);
  ForwardCache cache;
  MatrixXd xb, yb;
  MaskMatrix mb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, weight_sum = 0.0;
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      const Index lo = bounds[b], hi = bounds[b + 1], B = hi - lo;
      xb.resize(B, x.cols());
      yb.resize(B, y.cols());
      if (mask) mb.resize(B, y.cols());
      double live = 0.0;
      for (Index r = 0; r < B; ++r) {
        const Index src = order[static_cast<std::size_t>(lo + r)];
        xb.row(r) = x.row(src);
        yb.row(r) = y.row(src);
        if (mask) {
          mb.row(r) = mask->row(src);
          for (Index c = 0; c < y.cols(); ++c) live += (*mask)(src, c) ? 1.0 : 0.0;
        }
      }
      if (!mask) live = static_cast<double>(B * y.cols());
      if (live == 0.0) continue;
      const auto lg = loss_gradient_impl(model, xb, yb, mask ? &mb : nullptr, cache);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      update_running_stats(model, cache, B);
      adam_step(model, lg.gradients);
      loss_sum += lg.loss * live;
      weight_sum += live;
    }
    if (weight_sum == 0.0) throw DataError("every target entry is masked");
    const double epoch_loss = loss_sum / weight_sum;
    if (!std::isfinite(epoch_loss)) {
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
    }
    trace.push_back(epoch_loss);
  }
  return trace;
}

MatrixXd ModelBundle::predict(const MatrixXd& raw_inputs) const {
  if (raw_inputs.cols() != input_shift.size()) {
    throw DataError("bundle input has " + std::to_string(raw_inputs.cols()) + " columns, expected " +
                    std::to_string(input_shift.size()));
  }
  const MatrixXd z =
      (raw_inputs.rowwise() - input_shift).array().rowwise() / input_scale.array();
  MatrixXd out = mlp_predict(net, z);
  return (out.array() * target_scale + target_shift).matrix();
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir) {
  container::Archive a("mlp_bundle");
  const auto& spec = bundle.net.spec;
  auto& meta = a.meta();
  meta["input_dim"] = spec.input_dim;
  meta["hidden_widths"] = spec.hidden_widths;
  meta["output_dim"] = spec.output_dim;
  meta["batch_norm"] = spec.batch_norm;
  meta["output_activation"] = spec.output_activation == OutputActivation::relu ? "relu" : "identity";
  meta["seed"] = spec.seed;
  meta["target_shift"] = bundle.target_shift;
  meta["target_scale"] = bundle.target_scale;
  meta["adam_step"] = bundle.net.adam.step;
  meta["learning_rate"] = bundle.net.adam.learning_rate;
  meta["parameter_names"] = parameter_names(bundle.net);
  auto eps = nlohmann::json::array();
  for (const auto& l : bundle.net.hidden) {
    if (l.norm) eps.push_back({l.norm->epsilon, l.norm->momentum});
    else eps.push_back(nullptr);
  }
  meta["batch_norm_constants"] = eps;
  const auto names = parameter_names(bundle.net);
  const auto params = parameters(bundle.net);
  for (std::size_t i = 0; i < params.size(); ++i) a.put(names[i], params[i]);
  for (std::size_t l = 0; l < bundle.net.hidden.size(); ++l) {
    if (const auto& n = bundle.net.hidden[l].norm) {
      const auto p = "hidden" + std::to_string(l) + ".";
      a.put(p + "running_mean", std::span<const double>(n->running_mean.data(), n->running_mean.size()));
      a.put(p + "running_var", std::span<const double>(n->running_var.data(), n->running_var.size()));
    }
  }
  a.put("input_shift", std::span<const double>(bundle.input_shift.data(), bundle.input_shift.size()));
  a.put("input_scale", std::span<const double>(bundle.input_scale.data(), bundle.input_scale.size()));
  a.put("loss_trace", bundle.loss_trace);
  a.save(dir);
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  const auto a = container::Archive::load(dir, "mlp_bundle");
  const auto& meta = a.meta();
  ModelBundle b;
  try {
    MlpSpec spec;
    spec.input_dim = meta.at("input_dim").get<std::size_t>();
    spec.hidden_widths = meta.at("hidden_widths").get<std::vector<std::size_t>>();
    spec.output_dim = meta.at("output_dim").get<std::size_t>();
    spec.batch_norm = meta.at("batch_norm").get<std::vector<bool>>();
    spec.output_activation =
        meta.at("output_activation") == "relu" ? OutputActivation::relu : OutputActivation::identity;
    spec.seed = meta.at("seed").get<std::uint64_t>();
    b.net = mlp_init(spec);
    b.net.adam.step = meta.at("adam_step").get<std::int64_t>();
    b.net.adam.learning_rate = meta.at("learning_rate").get<double>();
    b.target_shift = meta.at("target_shift").get<double>();
    b.target_scale = meta.at("target_scale").get<double>();
    const auto& eps = meta.at("batch_norm_constants");
    for (std::size_t l = 0; l < b.net.hidden.size(); ++l) {
      if (auto& n = b.net.hidden[l].norm) {
        n->epsilon = eps.at(l).at(0).get<double>();
        n->momentum = eps.at(l).at(1).get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed model bundle in " + dir.string() + ": " + e.what());
  }
  const auto names = parameter_names(b.net);
  auto params = parameters(b.net);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto v = a.vector(names[i]);
    if (v.size() != params[i].size()) throw DataError("bundle tensor " + names[i] + " has wrong size");
    std::copy(v.begin(), v.end(), params[i].begin());
  }
  auto row = [&](const std::string& name) {
    const auto v = a.vector(name);
    return RowVectorXd(Eigen::Map<const RowVectorXd>(v.data(), static_cast<Index>(v.size())));
  };
  for (std::size_t l = 0; l < b.net.hidden.size(); ++l) {
    if (auto& n = b.net.hidden[l].norm) {
      const auto p = "hidden" + std::to_string(l) + ".";
      n->running_mean = row(p + "running_mean");
      n->running_var = row(p + "running_var");
    }
  }
  b.input_shift = row("input_shift");
  b.input_scale = row("input_scale");
  b.loss_trace = a.vector("loss_trace");
  return b;
}

}  // namespace sigpca::neuralnet
