// Copyright 2026 The voxdet Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace voxdet {

enum class Errc {
  BadMagic,
  UnsupportedDatatype,
  TruncatedData,
  HeaderOnlyFile,
  AmbiguousHeader,
  IoFailure,
  SideTooSmall,
  DegenerateBox,
  EmptyMask,
  ParseError,
  TooFewLabels,
  NonPositiveExtent,
  UnknownLayerKind,
  DanglingReference,
  MissingDetect,
  ShapeMismatch,
  UninitializedWeights,
  GridMismatch,
  NonFiniteValue,
  EmptyDataset,
  DivergedLoss,
  PlacementFailed,
  CheckpointMismatch,
  InvalidArgument,
  LabelMismatch,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedDatatype: return "UnsupportedDatatype";
    case Errc::TruncatedData: return "TruncatedData";
    case Errc::HeaderOnlyFile: return "HeaderOnlyFile";
    case Errc::AmbiguousHeader: return "AmbiguousHeader";
    case Errc::IoFailure: return "IoFailure";
    case Errc::SideTooSmall: return "SideTooSmall";
    case Errc::DegenerateBox: return "DegenerateBox";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::ParseError: return "ParseError";
    case Errc::TooFewLabels: return "TooFewLabels";
    case Errc::NonPositiveExtent: return "NonPositiveExtent";
    case Errc::UnknownLayerKind: return "UnknownLayerKind";
    case Errc::DanglingReference: return "DanglingReference";
    case Errc::MissingDetect: return "MissingDetect";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::UninitializedWeights: return "UninitializedWeights";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::PlacementFailed: return "PlacementFailed";
    case Errc::CheckpointMismatch: return "CheckpointMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::LabelMismatch: return "LabelMismatch";
  }
  return "Unknown";
}

// Every failure in the library surfaces as an Error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

using Vec3 = std::array<double, 3>;
using Dims3 = std::array<std::int64_t, 3>;

inline constexpr std::int64_t kMinCubeSide = 32;

// Random stream with platform-independent draws: std distributions are
// implementation-defined, so uniform/normal are derived from raw engine bits.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Mixes a base seed with stream keys (epoch, sample index, ...) into a fresh seed.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    auto splitmix = [](std::uint64_t x) {
      x += 0x9e3779b97f4a7c15ULL;
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
      return x ^ (x >> 31);
    };
    return splitmix(splitmix(splitmix(seed) ^ a) ^ (b * 0xd1342543de82ef95ULL));
  }

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace voxdet
