#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sensex/dynamics.hpp"

namespace sensex {

namespace detail {

// Sigmoid 2-16-1 feedback law for Mountain Car: fourteen velocity units pump
// energy in the direction of motion, two position units brake near the left
// wall. Identical to data/controllers/mountain_car_sig16.json.
inline constexpr const char* kMountainCarController = R"json({"activation": "sigmoid", "output_activation": "identity", "layers": [{"weights": [[0.0, 60.0], [0.4, 85.0], [0.0, 110.0], [0.4, 135.0], [0.0, 160.0], [0.4, 185.0], [0.0, 210.0], [0.4, 235.0], [0.0, 260.0], [0.4, 285.0], [0.0, 310.0], [0.4, 335.0], [0.0, 360.0], [0.4, 385.0], [-30.0, 0.0], [-45.0, 0.0]], "bias": [-1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -24.0, -36.0]}, {"weights": [[0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 0.14285714285714285, 1.5, 1.5]], "bias": [-1.0]}]})json";

inline std::string canonical_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

inline Box box2(double a0, double a1, double b0, double b1) {
  return Box(make_vector({a0, b0}), make_vector({a1, b1}));
}

inline Box box3(double a0, double a1, double b0, double b1, double c0, double c1) {
  return Box(make_vector({a0, b0, c0}), make_vector({a1, b1, c1}));
}

struct Published {
  double fwd_mse, fwd_mre, inv_mse, inv_mre;
  double reach_dr1_lo, reach_dr1_hi, reach_dr5_lo, reach_dr5_hi;
};

inline std::map<std::string, double> reference_map(const Published& p) {
  return {{"forward_mse", p.fwd_mse},         {"forward_mre", p.fwd_mre},
          {"inverse_mse", p.inv_mse},         {"inverse_mre", p.inv_mre},
          {"reach_dr1_min", p.reach_dr1_lo},  {"reach_dr1_max", p.reach_dr1_hi},
          {"reach_dr5_min", p.reach_dr5_lo},  {"reach_dr5_max", p.reach_dr5_hi}};
}

inline SystemSpec continuous_benchmark(std::string name, Box domain, Box init, double h,
                                       std::size_t horizon,
                                       std::map<std::string, double> params,
                                       std::string description,
                                       std::function<Vector(const State&)> f) {
  auto sys = make_continuous(std::move(name), std::move(domain), std::move(f));
  sys.info.default_step = h;
  sys.info.default_horizon = horizon;
  sys.info.init_set = std::move(init);
  sys.info.parameters = std::move(params);
  sys.info.description = std::move(description);
  return sys;
}

inline SystemSpec brusselator() {
  const double a = 1.0, b = 1.5;
  auto s = continuous_benchmark(
      "Brusselator", box2(0.0, 4.0, 0.0, 4.0), box2(0.5, 1.5, 0.0, 1.0), 0.01, 500,
      {{"a", a}, {"b", b}}, "x' = a + x^2 y - (b+1) x, y' = b x - x^2 y",
      [a, b](const State& x) -> Vector {
        return make_vector({a + x[0] * x[0] * x[1] - (b + 1.0) * x[0],
                            b * x[0] - x[0] * x[0] * x[1]});
      });
  s.info.reference = reference_map({0.14, 0.34, 1.01, 0.29, 0.23, 0.74, 0.01, 0.12});
  return s;
}

inline SystemSpec buckling() {
  auto s = continuous_benchmark(
      "Buckling", box2(-3.0, 3.0, -3.0, 3.0), box2(-0.5, 0.5, -0.5, 0.5), 0.01, 500,
      {{"damping", 0.2}, {"load", 0.1}}, "x' = y, y' = 2x - x^3 - 0.2 y + 0.1",
      [](const State& x) -> Vector {
        return make_vector({x[1], 2.0 * x[0] - x[0] * x[0] * x[0] - 0.2 * x[1] + 0.1});
      });
  s.info.reference = reference_map({2.38, 0.18, 0.59, 0.17, 0.17, 0.45, 0.06, 0.31});
  return s;
}

inline SystemSpec lotka() {
  const double a = 1.5, c = 3.0;
  auto s = continuous_benchmark(
      "Lotka", box2(0.0, 12.0, 0.0, 10.0), box2(4.5, 5.0, 1.8, 2.2), 0.01, 500,
      {{"alpha", a}, {"gamma", c}}, "x' = 1.5 x - x y, y' = -3 y + x y",
      [a, c](const State& x) -> Vector {
        return make_vector({a * x[0] - x[0] * x[1], -c * x[1] + x[0] * x[1]});
      });
  s.info.reference = reference_map({0.38, 0.31, 0.50, 0.13, 0.21, 0.45, 0.09, 0.22});
  return s;
}

inline SystemSpec jetengine() {
  auto s = continuous_benchmark(
      "Jetengine", box2(-3.0, 3.0, -3.0, 3.0), box2(0.8, 1.2, 0.8, 1.2), 0.02, 300, {},
      "Moore-Greitzer jet engine: x' = -y - 1.5x^2 - 0.5x^3 - 0.5, y' = 3x - y",
      [](const State& x) -> Vector {
        return make_vector({-x[1] - 1.5 * x[0] * x[0] - 0.5 * x[0] * x[0] * x[0] - 0.5,
                            3.0 * x[0] - x[1]});
      });
  s.info.reference = reference_map({0.086, 0.63, 1.002, 0.26, 0.19, 0.28, 0.006, 0.14});
  s.info.reference["inverse_step"] = 0.01;
  return s;
}

inline SystemSpec vanderpol() {
  const double mu = 1.0;
  auto s = continuous_benchmark(
      "Vanderpol", box2(-4.0, 4.0, -4.0, 4.0), box2(1.0, 1.5, 2.0, 2.5), 0.01, 500,
      {{"mu", mu}}, "x' = y, y' = mu (1 - x^2) y - x",
      [mu](const State& x) -> Vector {
        return make_vector({x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]});
      });
  s.info.reference = reference_map({0.15, 0.29, 0.23, 0.23, 0.16, 0.66, 0.04, 0.16});
  return s;
}

inline SystemSpec lacoperon() {
  const double basal = 0.05, induced = 1.0, half = 1.0, decay = 1.0, uptake = 0.5,
               dilution = 0.25;
  auto s = continuous_benchmark(
      "Lacoperon", box2(0.0, 2.0, 0.0, 4.0), box2(0.0, 1.0, 0.0, 2.0), 0.1, 500,
      {{"basal", basal}, {"induced", induced}, {"half_saturation", half},
       {"enzyme_decay", decay}, {"uptake", uptake}, {"inducer_dilution", dilution}},
      "reduced lac operon switch (enzyme E, inducer I): "
      "E' = basal + induced I^2 / (K^2 + I^2) - decay E, I' = uptake E - dilution I",
      [=](const State& x) -> Vector {
        const double i2 = x[1] * x[1];
        return make_vector({basal + induced * i2 / (half * half + i2) - decay * x[0],
                            uptake * x[0] - dilution * x[1]});
      });
  s.info.reference = reference_map({0.12, 0.33, 1.8, 0.46, 0.12, 0.28, 0.02, 0.16});
  s.info.reference["inverse_step"] = 0.2;
  return s;
}

inline SystemSpec roesseler() {
  const double a = 0.2, b = 0.2, c = 5.7;
  auto s = continuous_benchmark(
      "Roesseler", box3(-20.0, 20.0, -20.0, 20.0, -5.0, 40.0),
      box3(-1.0, 1.0, -7.0, -5.0, 0.0, 0.5), 0.02, 500, {{"a", a}, {"b", b}, {"c", c}},
      "x' = -y - z, y' = x + a y, z' = b + z (x - c)",
      [=](const State& x) -> Vector {
        return make_vector({-x[1] - x[2], x[0] + a * x[1], b + x[2] * (x[0] - c)});
      });
  s.info.reference = reference_map({0.58, 0.087, 0.44, 0.07, 0.20, 0.34, 0.06, 0.14});
  return s;
}

inline SystemSpec steam() {
  const double eps = 3.0, alpha = 1.0, beta = 1.0;
  auto s = continuous_benchmark(
      "Steam", box3(-3.0, 3.0, -3.0, 3.0, -3.0, 3.0), box3(0.7, 0.8, 0.6, 0.7, 0.7, 0.8),
      0.01, 500, {{"epsilon", eps}, {"alpha", alpha}, {"beta", beta}},
      "steam governor: x' = y, y' = z^2 sin x cos x - sin x - eps y, z' = alpha (cos x - beta)",
      [=](const State& x) -> Vector {
        const double sx = std::sin(x[0]), cx = std::cos(x[0]);
        return make_vector({x[1], x[2] * x[2] * sx * cx - sx - eps * x[1],
                            alpha * (cx - beta)});
      });
  s.info.reference = reference_map({0.34, 0.07, 0.13, 0.057, 0.31, 0.67, 0.08, 0.30});
  return s;
}

inline SystemSpec lorentz() {
  const double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
  auto s = continuous_benchmark(
      "Lorentz", box3(-30.0, 30.0, -30.0, 30.0, -1.0, 60.0),
      box3(-1.0, 1.0, -1.0, 1.0, 20.0, 22.0), 0.01, 500,
      {{"sigma", sigma}, {"rho", rho}, {"beta", beta}},
      "x' = sigma (y - x), y' = x (rho - z) - y, z' = x y - beta z",
      [=](const State& x) -> Vector {
        return make_vector({sigma * (x[1] - x[0]), x[0] * (rho - x[2]) - x[1],
                            x[0] * x[1] - beta * x[2]});
      });
  s.info.reference = reference_map({1.08, 0.11, 0.48, 0.08, 0.29, 0.58, 0.05, 0.17});
  return s;
}

inline SystemSpec coupled_vanderpol() {
  const double mu = 1.0, k = 1.0;
  auto s = continuous_benchmark(
      "CoupledVanderpol",
      Box(Vector::Constant(4, -4.0), Vector::Constant(4, 4.0)),
      Box(make_vector({1.25, 2.25, 1.25, 2.25}), make_vector({1.55, 2.35, 1.55, 2.35})), 0.01,
      500, {{"mu", mu}, {"coupling", k}},
      "two Van der Pol oscillators with diffusive coupling k (x2 - x1)",
      [mu, k](const State& x) -> Vector {
        return make_vector({x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0] + k * (x[2] - x[0]),
                            x[3], mu * (1.0 - x[2] * x[2]) * x[3] - x[2] + k * (x[0] - x[2])});
      });
  s.info.reference = reference_map({0.18, 0.15, 0.34, 0.16, 0.34, 0.60, 0.07, 0.18});
  return s;
}

inline SystemSpec hybrid_benchmark(std::string name, std::string description,
                                   std::function<Vector(const State&)> left,
                                   std::function<Vector(const State&)> right,
                                   const Published& published) {
  SystemSpec s;
  s.name = std::move(name);
  s.kind = SystemKind::hybrid;
  s.dimension = 2;
  s.domain = box2(-4.0, 4.0, -4.0, 4.0);
  s.modes.push_back({"left", [left](const State& x, const Vector&) { return left(x); },
                     [](const State& x) { return x[0] < 0.0; }});
  s.modes.push_back({"right", [right](const State& x, const Vector&) { return right(x); },
                     [](const State& x) { return x[0] >= 0.0; }});
  s.info.default_step = 0.01;
  s.info.default_horizon = 500;
  s.info.init_set = box2(1.0, 1.5, -0.5, 0.5);
  s.info.description = std::move(description);
  s.info.reference = reference_map(published);
  s.info.reference["inverse_horizon"] = 1000;
  s.validate();
  return s;
}

inline SystemSpec hybrid_oscillator() {
  auto s = hybrid_benchmark(
      "HybridOscillator",
      "switches at x = 0; left: y' = -x - 0.2 y + 0.5, right: y' = -4x - x^3 - 0.2 y - 0.5 "
      "(x' = y in both); the field jumps across the guard",
      [](const State& x) -> Vector { return make_vector({x[1], -x[0] - 0.2 * x[1] + 0.5}); },
      [](const State& x) -> Vector {
        return make_vector({x[1], -4.0 * x[0] - x[0] * x[0] * x[0] - 0.2 * x[1] - 0.5});
      },
      {0.35, 0.11, 0.31, 0.077, 0.13, 0.29, 0.01, 0.10});
  s.info.parameters = {{"damping", 0.2}, {"offset", 0.5}, {"stiffness_right", 4.0}};
  return s;
}

inline SystemSpec smooth_hybrid_oscillator() {
  auto s = hybrid_benchmark(
      "SmoothHybridOscillator",
      "switches at x = 0; left: y' = -x - 0.2 y, right: y' = -x - 2x^3 - 0.2 y "
      "(x' = y in both); the field is C1 across the guard",
      [](const State& x) -> Vector { return make_vector({x[1], -x[0] - 0.2 * x[1]}); },
      [](const State& x) -> Vector {
        return make_vector({x[1], -x[0] - 2.0 * x[0] * x[0] * x[0] - 0.2 * x[1]});
      },
      {0.40, 0.096, 0.23, 0.063, 0.13, 0.23, 0.02, 0.18});
  s.info.parameters = {{"damping", 0.2}, {"cubic_right", 2.0}};
  return s;
}

inline SystemSpec mountain_car() {
  const double power = 0.0015, gravity = 0.0025, max_speed = 0.07, min_pos = -1.2,
               max_pos = 0.6;
  SystemSpec s;
  s.name = "MountainCar";
  s.kind = SystemKind::discrete;
  s.dimension = 2;
  s.control_dimension = 1;
  s.domain = box2(min_pos, max_pos, -max_speed, max_speed);
  s.modes.push_back(
      {"default",
       [=](const State& x, const Vector& u) -> Vector {
         const double force = std::clamp(u[0], -1.0, 1.0);
         double v = x[1] + force * power - gravity * std::cos(3.0 * x[0]);
         v = std::clamp(v, -max_speed, max_speed);
         double p = std::clamp(x[0] + v, min_pos, max_pos);
         if (p == min_pos && v < 0.0) v = 0.0;
         return make_vector({p, v});
       },
       {}});
  s.controller = parse_controller(detail::kMountainCarController, "builtin:mountain_car_sig16");
  s.info.default_step = 1.0;
  s.info.default_horizon = 100;
  s.info.init_set = box2(-0.55, -0.45, 0.0, 0.0);
  s.info.parameters = {{"power", power},         {"gravity", gravity},
                       {"max_speed", max_speed}, {"min_position", min_pos},
                       {"max_position", max_pos}, {"goal_position", 0.45}};
  s.info.description =
      "continuous-action mountain car under a sigmoid 2-16-1 network controller; "
      "one step is one environment step";
  s.info.reference = reference_map({0.015, 0.79, 0.005, 0.70, 0.08, 0.22, 0.03, 0.12});
  s.validate();
  return s;
}

inline SystemSpec linear_rotation() {
  Matrix a(2, 2);
  a << 0.0, 1.0, -1.0, 0.0;
  auto s = make_linear("linear-rotation", a, box2(-5.0, 5.0, -5.0, 5.0));
  s.info.init_set = box2(-1.0, 1.0, -1.0, 1.0);
  s.info.default_horizon = 629;  // one full period at h = 0.01
  s.info.description = "x' = A x with A = [[0, 1], [-1, 0]]";
  return s;
}

inline SystemSpec linear_stable() {
  Matrix a(2, 2);
  a << -0.5, 1.0, -1.0, -0.5;
  auto s = make_linear("linear-stable", a, box2(-5.0, 5.0, -5.0, 5.0));
  s.info.init_set = box2(1.0, 2.0, 1.0, 2.0);
  s.info.description = "x' = A x with A = [[-0.5, 1], [-1, -0.5]]; |e^{At}| = e^{-t/2}";
  return s;
}

struct RegistryEntry {
  std::string name;
  std::vector<std::string> aliases;
  SystemSpec (*make)();
};

inline const std::vector<RegistryEntry>& registry() {
  static const std::vector<RegistryEntry> entries = {
      {"Brusselator", {"Brussellator"}, &brusselator},
      {"Buckling", {}, &buckling},
      {"Lotka", {"LotkaVolterra"}, &lotka},
      {"Jetengine", {}, &jetengine},
      {"Vanderpol", {}, &vanderpol},
      {"Lacoperon", {}, &lacoperon},
      {"Roesseler", {"Rossler"}, &roesseler},
      {"Steam", {}, &steam},
      {"Lorentz", {"Lorenz"}, &lorentz},
      {"CoupledVanderpol", {"C-Vanderpol"}, &coupled_vanderpol},
      {"HybridOscillator", {}, &hybrid_oscillator},
      {"SmoothHybridOscillator", {"SmoothOscillator"}, &smooth_hybrid_oscillator},
      {"MountainCar", {}, &mountain_car},
      {"linear-rotation", {}, &linear_rotation},
      {"linear-stable", {}, &linear_stable},
  };
  return entries;
}

}  // namespace detail

inline std::vector<std::string> builtin_system_names() {
  std::vector<std::string> names;
  for (const auto& e : detail::registry()) names.push_back(e.name);
  return names;
}

/// Looks up a registered benchmark. Names match case-insensitively and
/// ignore spaces, hyphens and underscores ("Mountain Car" == "MountainCar").
inline SystemSpec builtin_system(std::string_view name) {
  const std::string key = detail::canonical_name(name);
  for (const auto& e : detail::registry()) {
    bool hit = detail::canonical_name(e.name) == key;
    for (const auto& alias : e.aliases) hit = hit || detail::canonical_name(alias) == key;
    if (hit) return e.make();
  }
  std::string msg = "unknown system '" + std::string(name) + "'; available:";
  for (const auto& n : builtin_system_names()) msg += " " + n;
  throw NotFoundError(msg);
}

/// Initial set to use when none is configured: the registry's, else the domain.
inline Box default_init_set(const SystemSpec& sys) {
  return sys.info.init_set.value_or(sys.domain);
}

inline nlohmann::json describe(const SystemSpec& sys) {
  auto box_json = [](const Box& b) {
    nlohmann::json j = nlohmann::json::array();
    for (Index i = 0; i < b.dim(); ++i) j.push_back({b.lower()[i], b.upper()[i]});
    return j;
  };
  nlohmann::json j{{"name", sys.name},
                   {"kind", std::string(to_string(sys.kind))},
                   {"dimension", sys.dimension},
                   {"domain", box_json(sys.domain)},
                   {"init_set", box_json(default_init_set(sys))},
                   {"step", sys.info.default_step},
                   {"horizon", sys.info.default_horizon},
                   {"modes", sys.modes.size()},
                   {"description", sys.info.description},
                   {"parameters", sys.info.parameters},
                   {"reference", sys.info.reference}};
  if (sys.controller) j["controller"] = sys.controller->source;
  return j;
}

}  // namespace sensex
