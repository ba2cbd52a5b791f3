#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sensex/errors.hpp"
#include "sensex/sim.hpp"

namespace sensex {

/// Shortest decimal text that parses back to exactly `x`.
inline std::string format_double(double x) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

inline void write_csv_row(std::ostream& out, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << format_double(row[i]);
  }
  out << '\n';
}

/// CSV with header `step,time,x1..xn`.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& tr) {
  out << "step,time";
  for (Index i = 0; i < tr.dimension(); ++i) out << ",x" << (i + 1);
  out << '\n';
  for (std::size_t s = 0; s < tr.size(); ++s) {
    out << s << ',' << format_double(tr.time(s));
    for (Index i = 0; i < tr.dimension(); ++i) out << ',' << format_double(tr.states[s][i]);
    out << '\n';
  }
}

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& tr) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_trajectory_csv(out, tr);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline nlohmann::json to_json(const Vector& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("expected a numeric array");
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw ParseError("expected a numeric array");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

namespace detail {

inline constexpr char kTrajectoryMagic[4] = {'S', 'X', 'T', 'R'};
inline constexpr std::uint32_t kBinaryVersion = 1;

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("truncated binary file");
  return value;
}

}  // namespace detail

/// Binary cache for trajectory corpora (host byte order).
inline void write_corpus_binary(std::ostream& out, const std::vector<Trajectory>& corpus) {
  out.write(detail::kTrajectoryMagic, 4);
  detail::put(out, detail::kBinaryVersion);
  detail::put(out, static_cast<std::uint64_t>(corpus.size()));
  for (const auto& tr : corpus) {
    detail::put(out, static_cast<std::uint64_t>(tr.dimension()));
    detail::put(out, static_cast<std::uint64_t>(tr.size()));
    detail::put(out, tr.step);
    detail::put(out, static_cast<std::uint8_t>(tr.direction == Direction::forward ? 0 : 1));
    for (const auto& s : tr.states) out.write(reinterpret_cast<const char*>(s.data()),
                                              static_cast<std::streamsize>(sizeof(double) * s.size()));
  }
}

inline std::vector<Trajectory> read_corpus_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, detail::kTrajectoryMagic, 4) != 0) {
    throw ParseError("not a trajectory corpus file");
  }
  if (detail::take<std::uint32_t>(in) != detail::kBinaryVersion) {
    throw ParseError("unsupported corpus file version");
  }
  const auto count = detail::take<std::uint64_t>(in);
  std::vector<Trajectory> corpus;
  for (std::uint64_t c = 0; c < count; ++c) {
    const auto dim = static_cast<Index>(detail::take<std::uint64_t>(in));
    const auto len = detail::take<std::uint64_t>(in);
    Trajectory tr;
    tr.step = detail::take<double>(in);
    tr.direction = detail::take<std::uint8_t>(in) == 0 ? Direction::forward : Direction::backward;
    if (dim <= 0 || len == 0) throw ParseError("corrupt corpus record");
    tr.states.resize(len);
    for (auto& s : tr.states) {
      s.resize(dim);
      in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(sizeof(double) * dim));
      if (!in) throw ParseError("truncated binary file");
    }
    tr.initial = tr.states.front();
    corpus.push_back(std::move(tr));
  }
  return corpus;
}

inline void write_corpus_binary(const std::filesystem::path& path,
                                const std::vector<Trajectory>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_corpus_binary(out, corpus);
}

inline std::vector<Trajectory> read_corpus_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_corpus_binary(in);
}

}  // namespace sensex
