#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sensex/errors.hpp"
#include "sensex/feedforward.hpp"
#include "sensex/types.hpp"

namespace sensex {

enum class SystemKind { continuous, hybrid, discrete };

inline std::string_view to_string(SystemKind k) {
  switch (k) {
    case SystemKind::continuous: return "continuous";
    case SystemKind::hybrid: return "hybrid";
    case SystemKind::discrete: return "discrete";
  }
  return "continuous";
}

/// Plant map f(x, u). For continuous and hybrid systems it returns the time
/// derivative; for discrete systems it returns the next state. `u` is empty
/// when the system has no feedback controller.
using PlantMap = std::function<Vector(const State& x, const Vector& u)>;
using Guard = std::function<bool(const State& x)>;

struct ModeSpec {
  std::string name;
  PlantMap field;
  Guard guard;  // empty for single-mode systems
};

/// State-feedback law u = g(x) given as a feedforward network.
struct ControllerSpec {
  FeedForward network;
  std::string source;

  [[nodiscard]] Vector operator()(const State& x) const { return network.forward(x); }
};

/// Registry metadata. None of it changes evaluation; it records conventional
/// defaults and the published accuracy figures used for comparison.
struct SystemInfo {
  double default_step = 0.01;
  std::size_t default_horizon = 500;
  std::optional<Box> init_set;
  std::map<std::string, double> parameters;
  std::string description;
  // Published forward/inverse network figures: {"forward_mse", ...}.
  std::map<std::string, double> reference;
  // Set for linear systems x' = A x; enables the exact sensitivity oracle.
  std::optional<Matrix> linear_matrix;
};

struct SystemSpec {
  std::string name;
  SystemKind kind = SystemKind::continuous;
  Index dimension = 0;
  Index control_dimension = 0;
  Box domain;
  std::vector<ModeSpec> modes;
  std::optional<ControllerSpec> controller;
  SystemInfo info;

  void validate() const {
    if (dimension < 1) throw ConfigError(name + ": dimension must be at least 1");
    if (domain.dim() != dimension) {
      throw DimensionError(name + ": domain box dimension differs from system dimension");
    }
    if (modes.empty()) throw ConfigError(name + ": no modes defined");
    if (kind == SystemKind::hybrid) {
      if (modes.size() < 2) throw ConfigError(name + ": hybrid systems need at least two modes");
      for (const auto& m : modes) {
        if (!m.guard) throw ConfigError(name + ": hybrid mode '" + m.name + "' has no guard");
      }
    } else if (modes.size() != 1) {
      throw ConfigError(name + ": only hybrid systems may have several modes");
    }
    if (controller) {
      if (controller->network.in_width() != dimension) {
        throw DimensionError(name + ": controller input width " +
                             std::to_string(controller->network.in_width()) +
                             " differs from state dimension " + std::to_string(dimension));
      }
      if (controller->network.out_width() != control_dimension) {
        throw DimensionError(name + ": controller output width " +
                             std::to_string(controller->network.out_width()) +
                             " differs from control dimension " +
                             std::to_string(control_dimension));
      }
    } else if (control_dimension != 0) {
      throw ConfigError(name + ": system expects a controller but none is attached");
    }
  }
};

/// First mode (in declaration order) whose guard holds at x.
inline std::size_t select_mode(const SystemSpec& sys, const State& x) {
  if (sys.modes.size() == 1) return 0;
  for (std::size_t i = 0; i < sys.modes.size(); ++i) {
    if (sys.modes[i].guard(x)) return i;
  }
  throw RangeError(sys.name + ": no mode guard holds at the given state");
}

inline Vector control_input(const SystemSpec& sys, const State& x) {
  return sys.controller ? (*sys.controller)(x) : Vector(0);
}

/// Field value of a fixed mode, used by integrators that hold the mode
/// constant across a step.
inline Vector eval_mode(const SystemSpec& sys, std::size_t mode, const State& x) {
  Vector out = sys.modes[mode].field(x, control_input(sys, x));
  if (out.size() != sys.dimension) {
    throw DimensionError(sys.name + ": vector field returned dimension " +
                         std::to_string(out.size()));
  }
  return out;
}

/// f(x, g(x)) for continuous and hybrid systems, the next state for discrete
/// ones.
inline Vector eval_field(const SystemSpec& sys, const State& x) {
  require_dim(x, sys.dimension, "state");
  return eval_mode(sys, select_mode(sys, x), x);
}

inline ControllerSpec parse_controller(const std::string& text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  return ControllerSpec{layers_from_json(j), source};
}

inline ControllerSpec load_controller(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open controller file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_controller(ss.str(), path.string());
}

/// Copy of `sys` driven by a different controller.
inline SystemSpec with_controller(SystemSpec sys, ControllerSpec controller) {
  sys.controller = std::move(controller);
  sys.validate();
  return sys;
}

/// Continuous system x' = f(x) from a plain function.
inline SystemSpec make_continuous(std::string name, Box domain,
                                  std::function<Vector(const State&)> f) {
  SystemSpec s;
  s.name = std::move(name);
  s.kind = SystemKind::continuous;
  s.dimension = domain.dim();
  s.domain = std::move(domain);
  s.modes.push_back({"default", [f = std::move(f)](const State& x, const Vector&) { return f(x); }, {}});
  s.validate();
  return s;
}

/// Linear system x' = A x.
inline SystemSpec make_linear(std::string name, const Matrix& a, Box domain) {
  if (a.rows() != a.cols() || a.rows() != domain.dim()) {
    throw DimensionError(name + ": system matrix must be square and match the domain");
  }
  auto sys = make_continuous(std::move(name), std::move(domain),
                             [a](const State& x) -> Vector { return a * x; });
  sys.info.description = "linear system x' = A x";
  sys.info.linear_matrix = a;
  return sys;
}

}  // namespace sensex
