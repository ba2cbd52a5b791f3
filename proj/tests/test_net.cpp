#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sensex/data.hpp"
#include "sensex/net.hpp"
#include "sensex/systems.hpp"

using namespace sensex;

namespace {

Matrix random_matrix(Rng& rng, Index r, Index c, double lo, double hi) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = uniform(rng, lo, hi);
  return m;
}

FeedForward random_net(Rng& rng, const std::vector<Index>& widths, Activation act) {
  std::vector<Dense> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers.push_back({random_matrix(rng, widths[l + 1], widths[l], -1.5, 1.5),
                      random_matrix(rng, widths[l + 1], 1, -0.5, 0.5).col(0)});
  }
  return FeedForward(std::move(layers), act);
}

// Central-difference gradient over every parameter, flattened layer by layer
// (weights column-major, then bias).
std::vector<double> numeric_gradient(FeedForward net, const Matrix& in, const Matrix& out,
                                     Loss loss, double step) {
  std::vector<double> g;
  auto& layers = net.mutable_layers();
  const auto eval = [&] { return batch_loss(net.forward_batch(in), out, loss); };
  for (auto& l : layers) {
    for (Index i = 0; i < l.weights.size(); ++i) {
      double& p = l.weights.data()[i];
      const double keep = p;
      p = keep + step;
      const double up = eval();
      p = keep - step;
      const double down = eval();
      p = keep;
      g.push_back((up - down) / (2 * step));
    }
    for (Index i = 0; i < l.bias.size(); ++i) {
      double& p = l.bias[i];
      const double keep = p;
      p = keep + step;
      const double up = eval();
      p = keep - step;
      const double down = eval();
      p = keep;
      g.push_back((up - down) / (2 * step));
    }
  }
  return g;
}

std::vector<double> flatten(const Gradients& g) {
  std::vector<double> out;
  for (const auto& l : g.layers) {
    out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

Dataset rotation_dataset(std::size_t budget, std::uint64_t seed) {
  const auto s = builtin_system("linear-rotation");
  const auto corpus = generate_corpus(s, default_init_set(s), 30, 629, 0.01, seed);
  return make_records(corpus, SensKind::forward, budget, seed + 1, Pairing::cross, s.name);
}

}  // namespace

TEST(Forward, ZeroNetGivesZero) {
  std::vector<Dense> layers{{Matrix::Zero(4, 3), Vector::Zero(4)}, {Matrix::Zero(2, 4), Vector::Zero(2)}};
  const FeedForward net(layers, Activation::relu);
  EXPECT_EQ(net.forward(make_vector({1, -2, 3})), Vector::Zero(2));
}

TEST(Forward, IdentityLayerIsRelu) {
  const FeedForward net({{Matrix::Identity(3, 3), Vector::Zero(3)}}, Activation::relu, Activation::relu);
  EXPECT_EQ(net.forward(make_vector({1, -2, 0.5})), make_vector({1, 0, 0.5}));
}

TEST(Forward, MatchesHandRolled) {
  Rng rng(3);
  const auto net = random_net(rng, {5, 7, 6, 3}, Activation::sigmoid);
  for (int t = 0; t < 20; ++t) {
    const Vector x = random_matrix(rng, 5, 1, -1, 1).col(0);
    std::vector<double> a(x.data(), x.data() + 5);
    for (std::size_t l = 0; l < 3; ++l) {
      const auto& L = net.layers()[l];
      std::vector<double> z(static_cast<std::size_t>(L.out_width()));
      for (Index r = 0; r < L.out_width(); ++r) {
        double s = L.bias[r];
        for (Index c = 0; c < L.in_width(); ++c) s += L.weights(r, c) * a[static_cast<std::size_t>(c)];
        z[static_cast<std::size_t>(r)] = l < 2 ? 1.0 / (1.0 + std::exp(-s)) : s;
      }
      a = z;
    }
    const Vector got = net.forward(x);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(got[i], a[static_cast<std::size_t>(i)], 1e-14);
    const Matrix batch = net.forward_batch(x);
    EXPECT_EQ(Vector(batch.col(0)), got);
  }
}

TEST(Forward, DimensionMismatch) {
  Rng rng(1);
  const auto net = random_net(rng, {3, 4, 2}, Activation::relu);
  EXPECT_THROW(net.forward(make_vector({1, 2})), DimensionError);
}

TEST(Gradient, SigmoidMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = random_net(rng, {4, 6, 5, 3}, Activation::sigmoid);
    const Matrix in = random_matrix(rng, 4, 8, -1, 1);
    const Matrix out = random_matrix(rng, 3, 8, -1, 1);
    const auto g = flatten(gradient(net, in, out, Loss::mse));
    const auto fd = numeric_gradient(net, in, out, Loss::mse, 1e-6);
    EXPECT_LT(relative_error(g, fd), 1e-4) << "trial " << trial;
  }
}

TEST(Gradient, TanhMatchesFiniteDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto net = random_net(rng, {3, 5, 4, 2}, Activation::tanh);
    const Matrix in = random_matrix(rng, 3, 6, -1, 1);
    const Matrix out = random_matrix(rng, 2, 6, -1, 1);
    EXPECT_LT(relative_error(flatten(gradient(net, in, out, Loss::mse)),
                             numeric_gradient(net, in, out, Loss::mse, 1e-6)),
              1e-4);
  }
}

TEST(Gradient, ReluAwayFromKinks) {
  Rng rng(13);
  int checked = 0;
  for (int trial = 0; trial < 40 && checked < 10; ++trial) {
    const auto net = random_net(rng, {3, 6, 5, 2}, Activation::relu);
    const Matrix in = random_matrix(rng, 3, 4, -1, 1);
    const Matrix out = random_matrix(rng, 2, 4, -1, 1);
    // Skip points with any hidden pre-activation within 1e-3 of zero.
    bool near_kink = false;
    Matrix a = in;
    for (std::size_t l = 0; l + 1 < net.layers().size(); ++l) {
      Matrix z = net.layers()[l].weights * a;
      z.colwise() += net.layers()[l].bias;
      near_kink = near_kink || z.cwiseAbs().minCoeff() < 1e-3;
      a = z.cwiseMax(0.0);
    }
    if (near_kink) continue;
    ++checked;
    EXPECT_LT(relative_error(flatten(gradient(net, in, out, Loss::mse)),
                             numeric_gradient(net, in, out, Loss::mse, 1e-7)),
              1e-4);
  }
  EXPECT_GT(checked, 0);
}

TEST(Gradient, ZeroAtPerfectFit) {
  Rng rng(5);
  const auto net = random_net(rng, {3, 4, 2}, Activation::sigmoid);
  const Matrix in = random_matrix(rng, 3, 5, -1, 1);
  const Gradients g = gradient(net, in, net.forward_batch(in), Loss::mse);
  EXPECT_EQ(g.loss, 0.0);
  for (const auto& l : g.layers) {
    EXPECT_EQ(l.weights.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Gradient, MaeOutputGradientIsSign) {
  Matrix pred(2, 3), target(2, 3);
  pred << 1, -1, 0.5, 2, 0, -3;
  target << 0, 0, 0.5, 1, 1, -4;
  const Matrix g = loss_gradient(pred, target, Loss::mae);
  Matrix want(2, 3);
  want << 1, -1, 0, 1, -1, 1;
  EXPECT_EQ(g, want / 6.0);
}

TEST(Train, MemorizesConstant) {
  Dataset ds;
  ds.dimension = 2;
  ds.h = 0.01;
  for (int i = 0; i < 64; ++i) {
    ds.records.push_back({make_vector({0.3, 0.2}), make_vector({0.1, -0.1}), 0.5,
                          make_vector({0.4, -0.2}), SensKind::forward, {}});
  }
  // Constant targets normalize to the midpoint-free value 0; start far from it.
  ds.normalization = fit_normalization(ds.records);
  ds.normalization.output_min = make_vector({0.0, -1.0});
  ds.normalization.output_max = make_vector({1.0, 0.0});
  Mlp m = make_mlp(2, 2, 8, Activation::relu, Init::nguyen_widrow, 3);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.02;
  cfg.momentum = 0.0;
  cfg.loss = Loss::mse;
  const auto result = train(m, ds, cfg);
  const auto& h = result.loss_history;
  ASSERT_EQ(h.size(), 40u);
  for (std::size_t e = 5; e < h.size(); ++e) EXPECT_LE(h[e], h[e - 1]) << "epoch " << e;
  EXPECT_LT(h.back(), 1e-3 * h.front());
  EXPECT_LT((result.model.predict(make_vector({0.3, 0.2}), make_vector({0.1, -0.1}), 0.5) -
             make_vector({0.4, -0.2})).norm(),
            0.02);
}

TEST(Train, Deterministic) {
  auto ds = rotation_dataset(2000, 5);
  auto [train_set, test_set] = split(ds, 0.1, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  const Mlp m = make_mlp(2, 2, 16, Activation::relu, Init::nguyen_widrow, 4);
  const auto a = train(m, train_set, cfg);
  const auto b = train(m, train_set, cfg);
  for (std::size_t l = 0; l < a.model.net.layers().size(); ++l) {
    EXPECT_EQ(a.model.net.layers()[l].weights, b.model.net.layers()[l].weights);
    EXPECT_EQ(a.model.net.layers()[l].bias, b.model.net.layers()[l].bias);
  }
  EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(Train, DivergenceNamesEpoch) {
  auto ds = rotation_dataset(500, 6);
  auto [train_set, test_set] = split(ds, 0.1, 1);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.learning_rate = 1e200;
  cfg.loss = Loss::mse;
  try {
    train(make_mlp(2, 2, 16, Activation::relu, Init::nguyen_widrow, 4), train_set, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.epoch(), 1u);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Train, RotationForwardSensitivityLearnable) {
  const auto s = builtin_system("linear-rotation");
  auto ds = rotation_dataset(30000, 21);
  auto [train_set, test_set] = split(ds, 0.1, 2);
  const auto oracle = make_oracle(s);
  const Metrics exact = evaluate_with(
      [&](const State&, const Vector& v, double t) { return oracle.forward(v, t); }, test_set);
  EXPECT_LT(exact.mre, 1e-6);  // records agree with the closed form

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.final_lr_fraction = 0.05;
  cfg.seed = 3;
  const auto result =
      train(make_mlp(2, 4, 64, Activation::relu, Init::nguyen_widrow, 8), train_set, cfg);
  const Metrics m = evaluate(result.model, test_set);
  EXPECT_LT(m.mre, 0.2);
  EXPECT_EQ(result.model.meta.kind, SensKind::forward);
  EXPECT_EQ(result.model.meta.system, "linear-rotation");
}

TEST(Evaluate, PerfectAndDoubledPredictors) {
  auto ds = rotation_dataset(300, 2);
  const auto lookup = [&](double scale) {
    return [&ds, scale](const State& x0, const Vector& v, double t) -> Vector {
      for (const auto& r : ds.records)
        if (r.x0 == x0 && r.v == v && r.t == t) return scale * r.target;
      return Vector::Zero(x0.size());
    };
  };
  const Metrics perfect = evaluate_with(lookup(1.0), ds);
  EXPECT_EQ(perfect.mse, 0.0);
  EXPECT_EQ(perfect.mre, 0.0);
  const Metrics doubled = evaluate_with(lookup(2.0), ds);
  EXPECT_NEAR(doubled.mre, 1.0, 1e-15);
  EXPECT_NEAR(doubled.rmse, std::sqrt(doubled.mse), 1e-15);
}

TEST(Evaluate, BatchedMatchesPerRecord) {
  auto ds = rotation_dataset(400, 3);
  auto [train_set, test_set] = split(ds, 0.25, 2);
  Mlp m = make_mlp(2, 2, 8, Activation::tanh, Init::uniform_he, 5);
  m.normalization = train_set.normalization;
  const Metrics a = evaluate(m, test_set);
  const Metrics b = evaluate_with(m, test_set);
  EXPECT_NEAR(a.mse, b.mse, 1e-12);
  EXPECT_NEAR(a.mre, b.mre, 1e-12);
}

TEST(ModelIo, BitExactRoundTrip) {
  auto ds = rotation_dataset(400, 3);
  auto [train_set, test_set] = split(ds, 0.25, 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  const auto m = train(make_mlp(2, 3, 16, Activation::sigmoid, Init::nguyen_widrow, 5), train_set, cfg).model;
  const auto path = std::filesystem::temp_directory_path() / "sensex_model_io.json";
  save_model(path, m);
  const Mlp back = load_model(path);
  EXPECT_EQ(back.net.hidden_activation(), Activation::sigmoid);
  EXPECT_EQ(back.normalization, m.normalization);
  EXPECT_EQ(back.meta.kind, m.meta.kind);
  EXPECT_EQ(back.meta.h, m.meta.h);
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    const State x = make_vector({uniform(rng, -1, 1), uniform(rng, -1, 1)});
    const Vector v = make_vector({uniform(rng, -1, 1), uniform(rng, -1, 1)});
    const double t = uniform(rng, 0, 6);
    EXPECT_EQ(back.predict(x, v, t), m.predict(x, v, t));
  }
  EXPECT_THROW(back.predict(make_vector({1, 2, 3}), make_vector({1, 2, 3}), 1.0), DimensionError);

  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::ofstream(path) << text.substr(0, text.size() / 2);
  EXPECT_THROW(load_model(path), ParseError);
  std::filesystem::remove(path);
}

TEST(Init, NguyenWidrowRowNorms) {
  const auto net = make_network(5, {32, 32}, 2, Activation::relu, Init::nguyen_widrow, 1);
  const double beta = 0.7 * std::pow(32.0, 1.0 / 5.0);
  for (Index r = 0; r < 32; ++r) EXPECT_NEAR(net.layers()[0].weights.row(r).norm(), beta, 1e-12);
  EXPECT_LE(net.layers()[0].bias.cwiseAbs().maxCoeff(), beta);
}
