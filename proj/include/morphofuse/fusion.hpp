#pragma once

#include "morphofuse/mesh.hpp"
#include "morphofuse/volume_io.hpp"

#include <span>
#include <string>
#include <vector>

namespace morphofuse {

enum class FusionMode { multiply, linear };

struct FusionParams {
  FusionMode mode = FusionMode::multiply;
  double epsilon = 1.0;  // linear mode only, must be > 0
};

/// Weights used by the follow-up ε sweep unless overridden.
inline const std::vector<double> kDefaultEpsilonSweep = {1.0, 0.5, 0.2};

namespace detail {
inline void require_same_length(const ScalarField& d1, const ScalarField& d2) {
  if (d1.size() != d2.size())
    throw Error(ErrorCode::size_mismatch, "fusion inputs differ in length (" + std::to_string(d1.size()) + " vs " +
                                              std::to_string(d2.size()) + ")");
}
}  // namespace detail

/// Per-vertex product d1 * d2. Sign is kept, so recovery (d1 < 0) stays negative.
inline ScalarField fuse_multiply(const ScalarField& d1, const ScalarField& d2) {
  detail::require_same_length(d1, d2);
  ScalarField out{"fused", std::vector<double>(d1.size()), FieldRange::signed_unit};
  for (std::size_t i = 0; i < d1.size(); ++i) {
    const double a = d1.values[i], b = d2.values[i];
    out.values[i] = is_unmapped(a) || is_unmapped(b) ? kUnmapped : a * b;
  }
  return out;
}

/// Per-vertex d1 + epsilon * d2, unclamped (range [-1, 1 + epsilon]).
inline ScalarField fuse_linear(const ScalarField& d1, const ScalarField& d2, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be strictly positive");
  detail::require_same_length(d1, d2);
  ScalarField out{"fused", std::vector<double>(d1.size()), FieldRange::unbounded_mm};
  for (std::size_t i = 0; i < d1.size(); ++i) {
    const double a = d1.values[i], b = d2.values[i];
    out.values[i] = is_unmapped(a) || is_unmapped(b) ? kUnmapped : a + epsilon * b;
  }
  return out;
}

inline ScalarField fuse(const ScalarField& d1, const ScalarField& d2, const FusionParams& p) {
  return p.mode == FusionMode::multiply ? fuse_multiply(d1, d2) : fuse_linear(d1, d2, p.epsilon);
}

/// Channel name for a swept weight, e.g. 0.5 -> "fused_eps_0.5".
inline std::string epsilon_channel_name(double epsilon) { return "fused_eps_" + detail::format_double(epsilon); }

/// One linear-fusion channel per weight, named by epsilon_channel_name.
inline std::vector<ScalarField> fuse_sweep(const ScalarField& d1, const ScalarField& d2, std::span<const double> eps) {
  std::vector<ScalarField> out;
  out.reserve(eps.size());
  for (double e : eps) {
    auto f = fuse_linear(d1, d2, e);
    f.name = epsilon_channel_name(e);
    out.push_back(std::move(f));
  }
  return out;
}

/// Parses "1,0.5,0.2" into weights; every entry must be > 0.
inline std::vector<double> parse_epsilon_list(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    double v = 0.0;
    const auto* b = tok.data();
    while (*b == ' ') ++b;
    auto [end, ec] = std::from_chars(b, tok.data() + tok.size(), v);
    if (ec != std::errc() || end != tok.data() + tok.size())
      throw Error(ErrorCode::parse, "bad epsilon value '" + tok + "'");
    if (!(v > 0.0)) throw Error(ErrorCode::invalid_argument, "epsilon must be strictly positive");
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace morphofuse
