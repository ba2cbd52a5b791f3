#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "sensex/data.hpp"
#include "sensex/errors.hpp"
#include "sensex/feedforward.hpp"
#include "sensex/io.hpp"
#include "sensex/types.hpp"

namespace sensex {

enum class Loss { mae, mse };
enum class Init { nguyen_widrow, uniform_he };

inline std::string_view to_string(Loss l) { return l == Loss::mae ? "mae" : "mse"; }
inline std::string_view to_string(Init i) {
  return i == Init::nguyen_widrow ? "nguyen-widrow" : "uniform-he";
}

inline Loss parse_loss(std::string_view s) {
  if (s == "mae") return Loss::mae;
  if (s == "mse") return Loss::mse;
  throw ParseError("unknown loss '" + std::string(s) + "'");
}

inline Init parse_init(std::string_view s) {
  if (s == "nguyen-widrow" || s == "nguyen_widrow") return Init::nguyen_widrow;
  if (s == "uniform-he" || s == "uniform_he" || s == "he") return Init::uniform_he;
  throw ParseError("unknown initialization '" + std::string(s) + "'");
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  // Cosine decay from learning_rate to learning_rate * final_lr_fraction.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 0;
  Loss loss = Loss::mae;
  Init init = Init::nguyen_widrow;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
      throw ConfigError("final learning-rate fraction must lie in (0, 1]");
    }
  }
};

struct ModelMeta {
  std::string system;
  SensKind kind = SensKind::forward;
  double h = 0.0;
};

/// Learned sensitivity (or inverse sensitivity) network. Inputs are
/// (x0, v, t) of width 2n+1, outputs have width n; normalization maps raw
/// values to and from the [0, 1] scale the network was trained on.
struct Mlp {
  FeedForward net;
  Normalization normalization;
  ModelMeta meta;

  [[nodiscard]] Index state_dimension() const { return net.out_width(); }

  /// Raw forward pass on already-normalized input.
  [[nodiscard]] Vector forward(const Vector& input) const { return net.forward(input); }

  /// De-normalized prediction of Phi(x0, v, t) (or Phi^{-1}).
  [[nodiscard]] Vector predict(const State& x0, const Vector& v, double t) const {
    if (x0.size() != v.size() || 2 * x0.size() + 1 != net.in_width()) {
      throw DimensionError("model expects states of dimension " +
                           std::to_string((net.in_width() - 1) / 2) + ", got " +
                           std::to_string(x0.size()));
    }
    if (normalization.empty()) return forward(record_input(x0, v, t));
    return normalization.denormalize_output(
        forward(normalization.normalize_input(record_input(x0, v, t))));
  }

  [[nodiscard]] Vector operator()(const State& x0, const Vector& v, double t) const {
    return predict(x0, v, t);
  }
};

/// Fully connected net: `input` -> hidden widths -> `output`.
inline FeedForward make_network(Index input, const std::vector<Index>& hidden, Index output,
                                Activation activation, Init init, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Index> widths{input};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output);
  std::vector<Dense> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Index in = widths[l], out = widths[l + 1];
    const bool last = l + 2 == widths.size();
    Dense d{Matrix(out, in), Vector::Zero(out)};
    if (init == Init::nguyen_widrow && !last) {
      // Each neuron's weight row gets norm 0.7 H^{1/in}; biases spread over
      // the same magnitude.
      const double beta = 0.7 * std::pow(static_cast<double>(out), 1.0 / static_cast<double>(in));
      for (Index r = 0; r < out; ++r) {
        for (Index c = 0; c < in; ++c) d.weights(r, c) = uniform(rng, -1.0, 1.0);
        const double norm = d.weights.row(r).norm();
        if (norm > 0.0) d.weights.row(r) *= beta / norm;
        d.bias[r] = uniform(rng, -beta, beta);
      }
    } else {
      const double limit = last ? std::sqrt(3.0 / static_cast<double>(in))
                                : std::sqrt(6.0 / static_cast<double>(in));
      for (Index r = 0; r < out; ++r) {
        for (Index c = 0; c < in; ++c) d.weights(r, c) = uniform(rng, -limit, limit);
      }
    }
    layers.push_back(std::move(d));
  }
  return FeedForward(std::move(layers), activation, Activation::identity);
}

/// Sensitivity model shell for a system of dimension n: input 2n+1,
/// `hidden_layers` layers of `width` neurons, output n.
inline Mlp make_mlp(Index n, std::size_t hidden_layers, Index width, Activation activation,
                    Init init, std::uint64_t seed) {
  Mlp m;
  m.net = make_network(2 * n + 1, std::vector<Index>(hidden_layers, width), n, activation,
                       init, seed);
  return m;
}

/// Parameter gradients, shaped like the network's layers.
struct Gradients {
  std::vector<Dense> layers;
  double loss = 0.0;
};

/// Batch loss on normalized outputs: mean over all batch entries of |e| (mae)
/// or e^2 (mse), e = prediction - target.
inline double batch_loss(const Matrix& prediction, const Matrix& target, Loss loss) {
  const auto diff = (prediction - target).array();
  const double count = static_cast<double>(diff.size());
  return loss == Loss::mae ? diff.abs().sum() / count : diff.square().sum() / count;
}

/// dLoss/dPrediction for `batch_loss`. For mae this is sign(e) / (B n), with
/// sign(0) = 0.
inline Matrix loss_gradient(const Matrix& prediction, const Matrix& target, Loss loss) {
  const double count = static_cast<double>(prediction.size());
  const Matrix diff = prediction - target;
  if (loss == Loss::mse) return (2.0 / count) * diff;
  return diff.unaryExpr([count](double e) { return (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) / count; });
}

/// Exact backpropagated gradient of the batch loss with respect to every
/// weight and bias. Columns of `inputs` / `targets` are samples.
inline Gradients gradient(const FeedForward& net, const Matrix& inputs, const Matrix& targets,
                          Loss loss) {
  const auto& layers = net.layers();
  const std::size_t depth = layers.size();
  if (inputs.cols() == 0) throw ConfigError("gradient of an empty batch");
  if (inputs.rows() != net.in_width() || targets.rows() != net.out_width() ||
      targets.cols() != inputs.cols()) {
    throw DimensionError("batch shape does not match the network");
  }

  std::vector<Matrix> pre(depth), post(depth + 1);
  post[0] = inputs;
  for (std::size_t l = 0; l < depth; ++l) {
    pre[l] = layers[l].weights * post[l];
    pre[l].colwise() += layers[l].bias;
    post[l + 1] = pre[l];
    detail::activate_inplace(post[l + 1], net.activation_of(l));
  }

  Gradients g;
  g.layers.resize(depth);
  g.loss = batch_loss(post[depth], targets, loss);
  Matrix delta = loss_gradient(post[depth], targets, loss);
  for (std::size_t l = depth; l-- > 0;) {
    const auto y = post[l + 1].array();
    switch (net.activation_of(l)) {
      case Activation::identity: break;
      case Activation::relu: delta.array() *= (pre[l].array() > 0.0).cast<double>(); break;
      case Activation::sigmoid: delta.array() *= y * (1.0 - y); break;
      case Activation::tanh: delta.array() *= 1.0 - y.square(); break;
    }
    g.layers[l].weights = delta * post[l].transpose();
    g.layers[l].bias = delta.rowwise().sum();
    if (l > 0) delta = layers[l].weights.transpose() * delta;
  }
  return g;
}

struct TrainResult {
  Mlp model;
  std::vector<double> loss_history;  // mean training loss per epoch
};

/// Minibatch SGD with momentum on a normalized dataset. Shuffling is seeded,
/// so equal inputs give bit-identical parameters.
inline TrainResult train(Mlp model, const Dataset& train_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("cannot train on an empty dataset");
  if (train_set.normalization.empty()) throw ConfigError("training set is not normalized");
  if (model.net.in_width() != 2 * train_set.dimension + 1 ||
      model.net.out_width() != train_set.dimension) {
    throw DimensionError("network shape does not match the dataset dimension");
  }
  model.normalization = train_set.normalization;
  model.meta.system = train_set.system;
  model.meta.kind = train_set.kind;
  model.meta.h = train_set.h;

  const auto [inputs, targets] = to_matrices(train_set);
  const auto total = static_cast<std::size_t>(inputs.cols());
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto& layers = model.net.mutable_layers();
  std::vector<Dense> velocity;
  for (const auto& l : layers) {
    velocity.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()),
                        Vector::Zero(l.bias.size())});
  }

  Rng rng(cfg.seed);
  TrainResult result;
  Matrix batch_in, batch_out;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double progress =
        cfg.epochs > 1 ? static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1) : 0.0;
    const double lr = cfg.learning_rate *
                      (cfg.final_lr_fraction + (1.0 - cfg.final_lr_fraction) * 0.5 *
                                                   (1.0 + std::cos(std::numbers::pi * progress)));
    for (std::size_t i = total - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < total; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, total - start);
      batch_in.resize(inputs.rows(), static_cast<Index>(count));
      batch_out.resize(targets.rows(), static_cast<Index>(count));
      for (std::size_t c = 0; c < count; ++c) {
        batch_in.col(static_cast<Index>(c)) = inputs.col(static_cast<Index>(order[start + c]));
        batch_out.col(static_cast<Index>(c)) = targets.col(static_cast<Index>(order[start + c]));
      }
      const Gradients g = gradient(model.net, batch_in, batch_out, cfg.loss);
      if (!std::isfinite(g.loss)) throw TrainingError("training loss became non-finite", epoch + 1);
      loss_sum += g.loss * static_cast<double>(count);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        velocity[l].weights = cfg.momentum * velocity[l].weights - lr * g.layers[l].weights;
        velocity[l].bias = cfg.momentum * velocity[l].bias - lr * g.layers[l].bias;
        layers[l].weights += velocity[l].weights;
        layers[l].bias += velocity[l].bias;
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(total);
    if (!std::isfinite(epoch_loss)) throw TrainingError("training loss became non-finite", epoch + 1);
    result.loss_history.push_back(epoch_loss);
  }
  result.model = std::move(model);
  return result;
}

struct Metrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mre = 0.0;
  std::size_t count = 0;
};

/// Accuracy on de-normalized outputs. mse averages the per-coordinate squared
/// error per record; mre averages ||y_hat - y|| / max(||y||, 1e-8).
template <typename Predictor>
Metrics evaluate_with(const Predictor& predict, const Dataset& test_set) {
  if (test_set.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  Metrics m;
  m.count = test_set.size();
  for (const auto& r : test_set.records) {
    const Vector err = predict(r.x0, r.v, r.t) - r.target;
    m.mse += err.squaredNorm() / static_cast<double>(err.size());
    m.mre += err.norm() / std::max(r.target.norm(), 1e-8);
  }
  m.mse /= static_cast<double>(m.count);
  m.mre /= static_cast<double>(m.count);
  m.rmse = std::sqrt(m.mse);
  return m;
}

inline Metrics evaluate(const Mlp& model, const Dataset& test_set) {
  if (test_set.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  if (model.normalization.empty()) return evaluate_with(model, test_set);
  // Batched path; identical arithmetic per record to Mlp::predict.
  Matrix in(model.net.in_width(), static_cast<Index>(test_set.size()));
  for (std::size_t c = 0; c < test_set.size(); ++c) {
    const auto& r = test_set.records[c];
    if (2 * r.x0.size() + 1 != model.net.in_width()) {
      throw DimensionError("model and test set dimensions differ");
    }
    in.col(static_cast<Index>(c)) = model.normalization.normalize_input(record_input(r));
  }
  const Matrix out = model.net.forward_batch(in);
  Metrics m;
  m.count = test_set.size();
  for (std::size_t c = 0; c < test_set.size(); ++c) {
    const auto& r = test_set.records[c];
    const Vector err =
        model.normalization.denormalize_output(out.col(static_cast<Index>(c))) - r.target;
    m.mse += err.squaredNorm() / static_cast<double>(err.size());
    m.mre += err.norm() / std::max(r.target.norm(), 1e-8);
  }
  m.mse /= static_cast<double>(m.count);
  m.mre /= static_cast<double>(m.count);
  m.rmse = std::sqrt(m.mse);
  return m;
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"mse", m.mse}, {"rmse", m.rmse}, {"mre", m.mre}, {"count", m.count}};
}

// ---- model files --------------------------------------------------------

inline nlohmann::json model_to_json(const Mlp& m) {
  nlohmann::json j = layers_to_json(m.net);
  j["normalization"] =
      m.normalization.empty() ? nlohmann::json(nullptr) : normalization_to_json(m.normalization);
  j["meta"] = {{"system", m.meta.system},
               {"kind", std::string(to_string(m.meta.kind))},
               {"h", m.meta.h}};
  return j;
}

inline Mlp model_from_json(const nlohmann::json& j) {
  Mlp m;
  m.net = layers_from_json(j);
  try {
    if (j.contains("normalization") && !j.at("normalization").is_null()) {
      m.normalization = normalization_from_json(j.at("normalization"));
      if (m.normalization.input_width() != m.net.in_width() ||
          m.normalization.output_width() != m.net.out_width()) {
        throw DimensionError("model normalization widths do not match the network");
      }
    }
    if (j.contains("meta")) {
      const auto& meta = j.at("meta");
      m.meta.system = meta.value("system", std::string{});
      m.meta.kind = parse_sens_kind(meta.value("kind", std::string("forward")));
      m.meta.h = meta.value("h", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
  return m;
}

inline void save_model(const std::filesystem::path& path, const Mlp& m) {
  write_json(path, model_to_json(m));
}

inline Mlp load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

}  // namespace sensex
