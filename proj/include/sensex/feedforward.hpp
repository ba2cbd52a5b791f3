#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sensex/errors.hpp"
#include "sensex/types.hpp"

namespace sensex {

enum class Activation { identity, relu, sigmoid, tanh };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "identity" || s == "linear") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw ParseError("unknown activation '" + std::string(s) + "'");
}

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <typename Derived>
void activate_inplace(Eigen::MatrixBase<Derived>& z, Activation a) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::sigmoid: z = z.unaryExpr([](double v) { return sigmoid(v); }); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
  }
}

}  // namespace detail

/// Affine layer y = W x + b; W is out x in.
struct Dense {
  Matrix weights;
  Vector bias;

  [[nodiscard]] Index in_width() const { return weights.cols(); }
  [[nodiscard]] Index out_width() const { return weights.rows(); }
};

/// Plain feedforward stack: every layer but the last applies `hidden`, the
/// last applies `output`. Shared by learned sensitivity models and
/// file-loaded feedback controllers.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::vector<Dense> layers, Activation hidden,
              Activation output = Activation::identity)
      : layers_(std::move(layers)), hidden_(hidden), output_(output) {
    validate();
  }

  [[nodiscard]] const std::vector<Dense>& layers() const { return layers_; }
  [[nodiscard]] std::vector<Dense>& mutable_layers() { return layers_; }
  [[nodiscard]] Activation hidden_activation() const { return hidden_; }
  [[nodiscard]] Activation output_activation() const { return output_; }
  [[nodiscard]] bool empty() const { return layers_.empty(); }

  [[nodiscard]] Index in_width() const {
    return layers_.empty() ? 0 : layers_.front().in_width();
  }
  [[nodiscard]] Index out_width() const {
    return layers_.empty() ? 0 : layers_.back().out_width();
  }

  [[nodiscard]] Index parameter_count() const {
    Index c = 0;
    for (const auto& l : layers_) c += l.weights.size() + l.bias.size();
    return c;
  }

  [[nodiscard]] Activation activation_of(std::size_t layer) const {
    return layer + 1 == layers_.size() ? output_ : hidden_;
  }

  [[nodiscard]] Vector forward(const Vector& input) const {
    require_dim(input, in_width(), "network input");
    Vector a = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Vector z = layers_[l].weights * a + layers_[l].bias;
      detail::activate_inplace(z, activation_of(l));
      a = std::move(z);
    }
    return a;
  }

  /// Column-wise forward pass over a batch (one sample per column).
  [[nodiscard]] Matrix forward_batch(const Matrix& inputs) const {
    if (inputs.rows() != in_width()) {
      throw DimensionError("network batch input has " + std::to_string(inputs.rows()) +
                           " rows, expected " + std::to_string(in_width()));
    }
    Matrix a = inputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weights * a;
      z.colwise() += layers_[l].bias;
      detail::activate_inplace(z, activation_of(l));
      a = std::move(z);
    }
    return a;
  }

  void validate() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.bias.size() != layer.weights.rows()) {
        throw DimensionError("layer " + std::to_string(l) + ": bias has " +
                             std::to_string(layer.bias.size()) + " entries for " +
                             std::to_string(layer.weights.rows()) + " outputs");
      }
      if (l > 0 && layer.in_width() != layers_[l - 1].out_width()) {
        throw DimensionError("layer " + std::to_string(l) + " expects " +
                             std::to_string(layer.in_width()) + " inputs but layer " +
                             std::to_string(l - 1) + " produces " +
                             std::to_string(layers_[l - 1].out_width()));
      }
    }
  }

 private:
  std::vector<Dense> layers_;
  Activation hidden_ = Activation::relu;
  Activation output_ = Activation::identity;
};

// JSON schema: {"layers": [{"weights": [[row], ...], "bias": [...]}, ...],
//               "activation": "...", "output_activation": "..."}

inline nlohmann::json layers_to_json(const FeedForward& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < l.weights.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Index c = 0; c < l.weights.cols(); ++c) row.push_back(l.weights(r, c));
      rows.push_back(std::move(row));
    }
    nlohmann::json bias = nlohmann::json::array();
    for (Index r = 0; r < l.bias.size(); ++r) bias.push_back(l.bias[r]);
    layers.push_back({{"weights", std::move(rows)}, {"bias", std::move(bias)}});
  }
  return {{"layers", std::move(layers)},
          {"activation", std::string(to_string(net.hidden_activation()))},
          {"output_activation", std::string(to_string(net.output_activation()))}};
}

inline FeedForward layers_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || !j.contains("layers") || !j.at("layers").is_array()) {
      throw ParseError("network description lacks a 'layers' array");
    }
    const auto& jl = j.at("layers");
    if (jl.empty()) throw ParseError("network description has an empty layer list");
    std::vector<Dense> layers;
    for (std::size_t l = 0; l < jl.size(); ++l) {
      const auto& entry = jl[l];
      const auto& w = entry.at("weights");
      const auto& b = entry.at("bias");
      if (!w.is_array() || w.empty() || !w[0].is_array() || !b.is_array()) {
        throw ParseError("layer " + std::to_string(l) + " is malformed");
      }
      const auto rows = static_cast<Index>(w.size());
      const auto cols = static_cast<Index>(w[0].size());
      Dense d{Matrix(rows, cols), Vector(static_cast<Index>(b.size()))};
      for (Index r = 0; r < rows; ++r) {
        if (static_cast<Index>(w[r].size()) != cols) {
          throw ParseError("layer " + std::to_string(l) + " has ragged weight rows");
        }
        for (Index c = 0; c < cols; ++c) d.weights(r, c) = w[r][c].get<double>();
      }
      for (Index r = 0; r < d.bias.size(); ++r) d.bias[r] = b[r].get<double>();
      layers.push_back(std::move(d));
    }
    const Activation hidden = parse_activation(j.value("activation", std::string("relu")));
    const Activation output =
        parse_activation(j.value("output_activation", std::string("identity")));
    return FeedForward(std::move(layers), hidden, output);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed network description: ") + e.what());
  }
}

}  // namespace sensex
