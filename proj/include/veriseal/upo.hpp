#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "veriseal/rng.hpp"

namespace veriseal::upo {

using Grid = Eigen::ArrayXXd;

/// One entry of the fleck material catalog. Susceptibility is a
/// dimensionless relative magnetic response; opacity is the fraction of
/// backlight the material blocks.
struct MetalSpec {
  std::string name;
  double susceptibility = 1.0;
  double opacity = 0.9;
};

std::vector<MetalSpec> default_metal_catalog();

struct Fleck {
  double x_mm = 0;
  double y_mm = 0;
  int metal_index = 0;
  double size_um = 0;  // diameter
};

/// Ground truth of one physical note patch: an immutable random scatter of
/// typed metal flecks. There is deliberately no operation anywhere in this
/// module that reconstructs one of these from a Fingerprint.
struct FleckMap {
  double width_mm = 10.0;
  double height_mm = 10.0;
  std::vector<MetalSpec> catalog;
  std::vector<Fleck> flecks;
};

struct FabricationParams {
  int fleck_count_min = 150;
  int fleck_count_max = 250;
  std::vector<MetalSpec> metal_catalog = default_metal_catalog();
  double size_min_um = 200.0;
  double size_max_um = 500.0;
  double width_mm = 10.0;
  double height_mm = 10.0;
  std::uint64_t rng_seed = 0;
};

struct SensorParams {
  int grid_size = 16;
  double point_spread_mm = 0.35;
  double noise_sigma_rel = 0.02;
  std::uint64_t rng_seed = 0;
};

/// Two-channel sensor readout: magnetic response grid plus backlit
/// transmission grid. Values are stored pre-rounded to 9 significant digits,
/// exactly what the wire encoding carries, so encode/decode round-trips are
/// bit-exact.
struct Fingerprint {
  int grid_size = 0;
  Grid magnetic;  // non-negative
  Grid optical;   // in [0, 1]
};

bool fingerprint_equal(const Fingerprint& a, const Fingerprint& b);

/// Scannable object: point sources for each channel. A genuine FleckMap has
/// the two source sets riveted together (same flecks); forgeries decouple
/// them, which is exactly what the optical channel exists to catch.
struct PointSource {
  double x_mm = 0;
  double y_mm = 0;
  double weight = 0;
};

struct NoteSurface {
  double width_mm = 10.0;
  double height_mm = 10.0;
  std::vector<PointSource> magnetic;  // susceptibility * size_um^2
  std::vector<PointSource> opacity;   // blocked area, mm^2
};

NoteSurface surface_of(const FleckMap& map);

FleckMap fabricate(const FabricationParams& params);

Fingerprint measure(const FleckMap& map, const SensorParams& sensor);
Fingerprint measure(const NoteSurface& surface, const SensorParams& sensor);

/// Mean of the two channels' Pearson correlations over the flattened grids.
/// A zero-variance channel contributes 1 when both grids are constant and
/// equal, else 0.
double similarity(const Fingerprint& a, const Fingerprint& b);
double magnetic_similarity(const Fingerprint& a, const Fingerprint& b);

bool match(const Fingerprint& a, const Fingerprint& b, double threshold);

/// Matching threshold calibrated by the collision study at default
/// parameters (midpoint of the measured genuine/impostor gap); see
/// docs/calibration.md for the study behind the number.
inline constexpr double kDefaultMatchThreshold = 0.70;

struct CollisionReport {
  int n = 0;
  double genuine_min = 0;
  double genuine_mean = 0;
  double impostor_max = 0;
  double impostor_mean = 0;
  double suggested_tau = 0;
  double empirical_far = 0;
  double empirical_frr = 0;
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;

  nlohmann::json to_json() const;
};

/// Fabricates n maps, measures each twice (genuine pairs) and crosses the
/// population (impostor pairs, sampled down to the budget). Throws
/// NoSeparation when the two similarity distributions overlap, which means
/// the parameter set cannot support matching at all.
CollisionReport collision_study(int n, const FabricationParams& fab,
                                const SensorParams& sensor,
                                std::size_t max_impostor_pairs = 500000);

/// Magnetic-ink print of a stolen fingerprint. The magnetic layer halftones
/// a deconvolved source field at the given resolution; the ink carrier is a
/// structureless film either way, so the backlit channel shows no gaps.
/// magnetic_only=false thins the film to the target's mean brightness, a
/// forger hedging against a crude brightness check.
struct PrintedInkAttack {
  int resolution_dpi = 600;
  bool magnetic_only = true;
};

/// Rolled-bar metal slice: reproduces the magnetic arrangement at the given
/// fidelity, but its gap pattern is a fresh random scatter, not the
/// original's.
struct CandyBarAttack {
  double slice_fidelity = 0.95;
};

using Attack = std::variant<PrintedInkAttack, CandyBarAttack>;

NoteSurface approximate_clone(const Fingerprint& target, const Attack& attack,
                              const SensorParams& sensor, Rng& rng,
                              double width_mm = 10.0, double height_mm = 10.0);

// Wire/file encoding. The canonical text form prints every cell with nine
// significant digits; since fingerprints are stored pre-rounded the decode
// reproduces the same doubles bit for bit.
std::string encode_fingerprint(const Fingerprint& fp);
Fingerprint decode_fingerprint(const std::string& text);
nlohmann::json fingerprint_to_json(const Fingerprint& fp);
Fingerprint fingerprint_from_json(const nlohmann::json& j);

/// SHA-256 of the canonical encoding, "sha256:<hex>"; used to reference
/// measurements in audit trails without embedding grids.
std::string fingerprint_digest(const Fingerprint& fp);

double quantize_sig9(double v);

}  // namespace veriseal::upo
