#include "veriseal/upo.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numbers>

#include "veriseal/errors.hpp"

namespace veriseal::upo {

namespace {

// Sensor cells only see sources within 4 point-spread radii; beyond that the
// kernel is below 4e-4 and the cutoff keeps large forged source sets cheap.
constexpr double kKernelCutoffSigmas = 4.0;

double kernel(double dist2, double psf_mm) {
  const double s2 = psf_mm * psf_mm;
  if (dist2 > kKernelCutoffSigmas * kKernelCutoffSigmas * s2) return 0.0;
  return std::exp(-dist2 / (2.0 * s2));
}

void validate_sensor(const SensorParams& sensor) {
  if (sensor.grid_size < 4) throw ParamsInvalid("grid_size must be >= 4");
  if (!(sensor.point_spread_mm > 0)) {
    throw ParamsInvalid("point_spread_mm must be positive");
  }
  if (sensor.noise_sigma_rel < 0) {
    throw ParamsInvalid("noise_sigma_rel must be non-negative");
  }
}

void validate_fabrication(const FabricationParams& p) {
  if (p.fleck_count_min < 1 || p.fleck_count_max < p.fleck_count_min) {
    throw ParamsInvalid("fleck count range must be ordered and positive");
  }
  if (p.metal_catalog.empty()) throw ParamsInvalid("metal catalog empty");
  if (!(p.size_min_um > 0) || p.size_max_um < p.size_min_um) {
    throw ParamsInvalid("size range must be ordered and positive");
  }
  if (!(p.width_mm > 0) || !(p.height_mm > 0)) {
    throw ParamsInvalid("region must have positive area");
  }
  for (size_t i = 0; i < p.metal_catalog.size(); ++i) {
    const auto& m = p.metal_catalog[i];
    if (!(m.susceptibility > 0)) {
      throw ParamsInvalid("susceptibility must be positive");
    }
    if (m.opacity < 0 || m.opacity > 1) {
      throw ParamsInvalid("opacity must be in [0,1]");
    }
    for (size_t j = i + 1; j < p.metal_catalog.size(); ++j) {
      if (m.susceptibility == p.metal_catalog[j].susceptibility) {
        throw ParamsInvalid("catalog susceptibilities must be distinct");
      }
    }
  }
}

// Adds w * kernel(distance to cell center) for every source, visiting only
// the cell window inside the cutoff radius.
void accumulate(Grid& grid, const std::vector<PointSource>& sources,
                double width_mm, double height_mm, double psf_mm,
                double scale) {
  const int g = static_cast<int>(grid.rows());
  const double pitch_x = width_mm / g;
  const double pitch_y = height_mm / g;
  const double radius = kKernelCutoffSigmas * psf_mm;
  for (const auto& src : sources) {
    const int c_lo = std::max(0, static_cast<int>((src.x_mm - radius) / pitch_x));
    const int c_hi =
        std::min(g - 1, static_cast<int>((src.x_mm + radius) / pitch_x));
    const int r_lo = std::max(0, static_cast<int>((src.y_mm - radius) / pitch_y));
    const int r_hi =
        std::min(g - 1, static_cast<int>((src.y_mm + radius) / pitch_y));
    for (int r = r_lo; r <= r_hi; ++r) {
      const double dy = (r + 0.5) * pitch_y - src.y_mm;
      for (int c = c_lo; c <= c_hi; ++c) {
        const double dx = (c + 0.5) * pitch_x - src.x_mm;
        grid(r, c) += scale * src.weight * kernel(dx * dx + dy * dy, psf_mm);
      }
    }
  }
}

double pearson(const Grid& a, const Grid& b) {
  const double ma = a.mean();
  const double mb = b.mean();
  const Grid ca = a - ma;
  const Grid cb = b - mb;
  const double va = (ca * ca).sum();
  const double vb = (cb * cb).sum();
  if (va == 0.0 || vb == 0.0) {
    const bool both_constant_equal =
        va == 0.0 && vb == 0.0 && (a == b).all();
    return both_constant_equal ? 1.0 : 0.0;
  }
  return std::clamp((ca * cb).sum() / std::sqrt(va * vb), -1.0, 1.0);
}

void check_shapes(const Fingerprint& a, const Fingerprint& b) {
  if (a.grid_size != b.grid_size || a.magnetic.rows() != b.magnetic.rows() ||
      a.optical.rows() != b.optical.rows()) {
    throw ShapeMismatch("fingerprint grids differ in size");
  }
}

// Least-squares reconstruction of the source density that produced a
// measured magnetic grid: solve (K'K + lambda I) u = K' t on the sensor
// lattice and clamp negatives. This is the forger's starting point for both
// attacks; it only needs the public sensor parameters.
Eigen::VectorXd deconvolve_sources(const Grid& target, double width_mm,
                                   double height_mm,
                                   const SensorParams& sensor) {
  const int g = sensor.grid_size;
  const int n = g * g;
  const double pitch_x = width_mm / g;
  const double pitch_y = height_mm / g;
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    const double yi = (i / g + 0.5) * pitch_y;
    const double xi = (i % g + 0.5) * pitch_x;
    for (int j = 0; j < n; ++j) {
      const double dy = yi - (j / g + 0.5) * pitch_y;
      const double dx = xi - (j % g + 0.5) * pitch_x;
      k(i, j) = kernel(dx * dx + dy * dy, sensor.point_spread_mm);
    }
  }
  Eigen::VectorXd t(n);
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) t(r * g + c) = target(r, c);
  }
  Eigen::MatrixXd normal = k.transpose() * k;
  const double ridge = 1e-6 * normal.diagonal().mean();
  normal.diagonal().array() += ridge;
  Eigen::VectorXd u = normal.ldlt().solve(k.transpose() * t);
  return u.cwiseMax(0.0);
}

// Bilinear sample of a cell-centred lattice, clamped at the edges.
double sample_lattice(const Eigen::VectorXd& u, int g, double pitch_x,
                      double pitch_y, double x, double y) {
  const double gx = std::clamp(x / pitch_x - 0.5, 0.0, g - 1.0);
  const double gy = std::clamp(y / pitch_y - 0.5, 0.0, g - 1.0);
  const int c0 = std::min(static_cast<int>(gx), g - 2 >= 0 ? g - 2 : 0);
  const int r0 = std::min(static_cast<int>(gy), g - 2 >= 0 ? g - 2 : 0);
  const double fx = gx - c0;
  const double fy = gy - r0;
  const int c1 = std::min(c0 + 1, g - 1);
  const int r1 = std::min(r0 + 1, g - 1);
  return (1 - fx) * (1 - fy) * u(r0 * g + c0) + fx * (1 - fy) * u(r0 * g + c1) +
         (1 - fx) * fy * u(r1 * g + c0) + fx * fy * u(r1 * g + c1);
}

std::vector<PointSource> ink_film(double width_mm, double height_mm,
                                  double coverage, Rng& rng) {
  // A continuous ink carrier modeled as a fine lattice of blockers with a
  // few percent of mottle; after the point spread it reads as a flat layer.
  constexpr int kFilmGrid = 40;
  const double cell_area = (width_mm / kFilmGrid) * (height_mm / kFilmGrid);
  std::vector<PointSource> film;
  film.reserve(kFilmGrid * kFilmGrid);
  for (int r = 0; r < kFilmGrid; ++r) {
    for (int c = 0; c < kFilmGrid; ++c) {
      PointSource s;
      s.x_mm = (c + 0.5) * width_mm / kFilmGrid;
      s.y_mm = (r + 0.5) * height_mm / kFilmGrid;
      s.weight =
          std::max(0.0, coverage * cell_area * (1.0 + 0.05 * rng.normal()));
      film.push_back(s);
    }
  }
  return film;
}

}  // namespace

std::vector<MetalSpec> default_metal_catalog() {
  return {
      {"iron", 6.5, 0.97},
      {"cobalt", 3.4, 0.95},
      {"nickel", 1.9, 0.93},
      {"stainless", 0.8, 0.90},
  };
}

bool fingerprint_equal(const Fingerprint& a, const Fingerprint& b) {
  return a.grid_size == b.grid_size &&
         a.magnetic.rows() == b.magnetic.rows() &&
         a.optical.rows() == b.optical.rows() &&
         (a.magnetic == b.magnetic).all() && (a.optical == b.optical).all();
}

NoteSurface surface_of(const FleckMap& map) {
  NoteSurface s;
  s.width_mm = map.width_mm;
  s.height_mm = map.height_mm;
  s.magnetic.reserve(map.flecks.size());
  s.opacity.reserve(map.flecks.size());
  for (const auto& f : map.flecks) {
    const MetalSpec& metal = map.catalog.at(f.metal_index);
    const double radius_mm = f.size_um / 2000.0;
    const double area_mm2 = std::numbers::pi * radius_mm * radius_mm;
    s.magnetic.push_back(
        {f.x_mm, f.y_mm, metal.susceptibility * f.size_um * f.size_um});
    s.opacity.push_back({f.x_mm, f.y_mm, metal.opacity * area_mm2});
  }
  return s;
}

FleckMap fabricate(const FabricationParams& params) {
  validate_fabrication(params);
  Rng rng(params.rng_seed);
  FleckMap map;
  map.width_mm = params.width_mm;
  map.height_mm = params.height_mm;
  map.catalog = params.metal_catalog;
  const int span = params.fleck_count_max - params.fleck_count_min + 1;
  const int count =
      params.fleck_count_min + static_cast<int>(rng.uniform_index(span));
  map.flecks.reserve(count);
  for (int i = 0; i < count; ++i) {
    Fleck f;
    f.x_mm = rng.uniform(0.0, params.width_mm);
    f.y_mm = rng.uniform(0.0, params.height_mm);
    f.metal_index = static_cast<int>(rng.uniform_index(map.catalog.size()));
    f.size_um = rng.uniform(params.size_min_um, params.size_max_um);
    map.flecks.push_back(f);
  }
  return map;
}

Fingerprint measure(const FleckMap& map, const SensorParams& sensor) {
  return measure(surface_of(map), sensor);
}

Fingerprint measure(const NoteSurface& surface, const SensorParams& sensor) {
  validate_sensor(sensor);
  const int g = sensor.grid_size;
  Fingerprint fp;
  fp.grid_size = g;
  fp.magnetic = Grid::Zero(g, g);
  fp.optical = Grid::Zero(g, g);

  accumulate(fp.magnetic, surface.magnetic, surface.width_mm,
             surface.height_mm, sensor.point_spread_mm, 1.0);

  // Optical coverage is blocked area spread by the same kernel, normalized
  // so the sum stays an area fraction; transmission is its complement.
  const double psf = sensor.point_spread_mm;
  const double coverage_scale = 1.0 / (2.0 * std::numbers::pi * psf * psf);
  Grid coverage = Grid::Zero(g, g);
  accumulate(coverage, surface.opacity, surface.width_mm, surface.height_mm,
             psf, coverage_scale);

  Rng rng(sensor.rng_seed);
  const double sigma = sensor.noise_sigma_rel;
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      double v = fp.magnetic(r, c);
      if (sigma > 0) v *= 1.0 + rng.normal(sigma);
      fp.magnetic(r, c) = quantize_sig9(std::max(0.0, v));
    }
  }
  for (int r = 0; r < g; ++r) {
    for (int c = 0; c < g; ++c) {
      double v = 1.0 - std::min(coverage(r, c), 1.0);
      if (sigma > 0) v *= 1.0 + rng.normal(sigma);
      fp.optical(r, c) = quantize_sig9(std::clamp(v, 0.0, 1.0));
    }
  }
  return fp;
}

double similarity(const Fingerprint& a, const Fingerprint& b) {
  check_shapes(a, b);
  return 0.5 * (pearson(a.magnetic, b.magnetic) +
                pearson(a.optical, b.optical));
}

double magnetic_similarity(const Fingerprint& a, const Fingerprint& b) {
  check_shapes(a, b);
  return pearson(a.magnetic, b.magnetic);
}

bool match(const Fingerprint& a, const Fingerprint& b, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ParamsInvalid("threshold must lie in (0,1)");
  }
  return similarity(a, b) >= threshold;
}

nlohmann::json CollisionReport::to_json() const {
  return {{"n", n},
          {"genuine_min", genuine_min},
          {"genuine_mean", genuine_mean},
          {"impostor_max", impostor_max},
          {"impostor_mean", impostor_mean},
          {"suggested_tau", suggested_tau},
          {"empirical_far", empirical_far},
          {"empirical_frr", empirical_frr},
          {"genuine_pairs", genuine_pairs},
          {"impostor_pairs", impostor_pairs}};
}

CollisionReport collision_study(int n, const FabricationParams& fab,
                                const SensorParams& sensor,
                                std::size_t max_impostor_pairs) {
  if (n < 100) throw ParamsInvalid("collision study needs n >= 100");
  validate_fabrication(fab);
  validate_sensor(sensor);

  std::vector<Fingerprint> first(n), second(n);
  for (int i = 0; i < n; ++i) {
    FabricationParams f = fab;
    f.rng_seed = Rng::derive_seed(fab.rng_seed, static_cast<std::uint64_t>(i));
    const FleckMap map = fabricate(f);
    SensorParams s = sensor;
    s.rng_seed = Rng::derive_seed(sensor.rng_seed, 2 * i);
    first[i] = measure(map, s);
    s.rng_seed = Rng::derive_seed(sensor.rng_seed, 2 * i + 1);
    second[i] = measure(map, s);
  }

  CollisionReport report;
  report.n = n;

  double genuine_sum = 0;
  report.genuine_min = 1.0;
  for (int i = 0; i < n; ++i) {
    const double sim = similarity(first[i], second[i]);
    genuine_sum += sim;
    report.genuine_min = std::min(report.genuine_min, sim);
  }
  report.genuine_pairs = n;
  report.genuine_mean = genuine_sum / n;

  const std::size_t total_pairs =
      static_cast<std::size_t>(n) * (n - 1) / 2;
  const std::size_t stride =
      total_pairs <= max_impostor_pairs
          ? 1
          : (total_pairs + max_impostor_pairs - 1) / max_impostor_pairs;
  double impostor_sum = 0;
  report.impostor_max = -1.0;
  std::size_t pair_index = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++pair_index) {
      if (pair_index % stride != 0) continue;
      const double sim = similarity(first[i], first[j]);
      impostor_sum += sim;
      report.impostor_max = std::max(report.impostor_max, sim);
      ++report.impostor_pairs;
    }
  }
  report.impostor_mean = impostor_sum / report.impostor_pairs;

  if (report.impostor_max >= report.genuine_min) {
    throw NoSeparation("impostor and genuine similarity ranges overlap");
  }
  report.suggested_tau = 0.5 * (report.impostor_max + report.genuine_min);

  std::size_t false_accepts = 0;
  pair_index = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++pair_index) {
      if (pair_index % stride != 0) continue;
      if (similarity(first[i], first[j]) >= report.suggested_tau) {
        ++false_accepts;
      }
    }
  }
  std::size_t false_rejects = 0;
  for (int i = 0; i < n; ++i) {
    if (similarity(first[i], second[i]) < report.suggested_tau) {
      ++false_rejects;
    }
  }
  report.empirical_far =
      static_cast<double>(false_accepts) / report.impostor_pairs;
  report.empirical_frr = static_cast<double>(false_rejects) / n;
  return report;
}

NoteSurface approximate_clone(const Fingerprint& target, const Attack& attack,
                              const SensorParams& sensor, Rng& rng,
                              double width_mm, double height_mm) {
  validate_sensor(sensor);
  if (target.grid_size != sensor.grid_size) {
    throw ShapeMismatch("target was not measured at these sensor params");
  }
  const int g = sensor.grid_size;
  const double pitch_x = width_mm / g;
  const double pitch_y = height_mm / g;
  const Eigen::VectorXd u =
      deconvolve_sources(target.magnetic, width_mm, height_mm, sensor);
  const double u_max = u.maxCoeff();

  NoteSurface forged;
  forged.width_mm = width_mm;
  forged.height_mm = height_mm;

  if (const auto* ink = std::get_if<PrintedInkAttack>(&attack)) {
    if (ink->resolution_dpi <= 0) throw ParamsInvalid("dpi must be positive");
    const int nx = std::max(
        1, static_cast<int>(std::lround(width_mm * ink->resolution_dpi / 25.4)));
    const int ny = std::max(
        1,
        static_cast<int>(std::lround(height_mm * ink->resolution_dpi / 25.4)));
    // Halftone: each dot is a fixed ink quantum fired with probability
    // proportional to the wanted local density. Coarse grids turn that
    // shot noise into the visible print artifact.
    if (u_max > 0) {
      for (int r = 0; r < ny; ++r) {
        for (int c = 0; c < nx; ++c) {
          const double x = (c + 0.5) * width_mm / nx;
          const double y = (r + 0.5) * height_mm / ny;
          const double want =
              sample_lattice(u, g, pitch_x, pitch_y, x, y) / u_max;
          if (rng.uniform01() < want) {
            forged.magnetic.push_back({x, y, 1.0});
          }
        }
      }
    }
    const double film_coverage =
        ink->magnetic_only ? 0.75
                           : std::clamp(1.0 - target.optical.mean(), 0.05, 1.0);
    forged.opacity = ink_film(width_mm, height_mm, film_coverage, rng);
    return forged;
  }

  const auto& bar = std::get<CandyBarAttack>(attack);
  if (!(bar.slice_fidelity > 0.0 && bar.slice_fidelity <= 1.0)) {
    throw ParamsInvalid("slice_fidelity must lie in (0,1]");
  }
  // The rolled bar reproduces the source field on a fine lattice; position
  // and amount errors grow as fidelity drops.
  const double err = 1.0 - bar.slice_fidelity;
  const int fine = 4 * g;
  const double fine_pitch_x = width_mm / fine;
  const double fine_pitch_y = height_mm / fine;
  for (int r = 0; r < fine; ++r) {
    for (int c = 0; c < fine; ++c) {
      double x = (c + 0.5) * fine_pitch_x;
      double y = (r + 0.5) * fine_pitch_y;
      double w = sample_lattice(u, g, pitch_x, pitch_y, x, y);
      if (w <= 0) continue;
      w *= std::max(0.0, 1.0 + 3.0 * err * rng.normal());
      x = std::clamp(x + 2.0 * err * rng.normal(), 0.0, width_mm);
      y = std::clamp(y + 2.0 * err * rng.normal(), 0.0, height_mm);
      forged.magnetic.push_back({x, y, w});
    }
  }
  // The slice's gap pattern is its own random scatter, not the original's.
  FabricationParams fresh;
  fresh.width_mm = width_mm;
  fresh.height_mm = height_mm;
  fresh.rng_seed = rng.next_u64();
  forged.opacity = surface_of(fabricate(fresh)).opacity;
  return forged;
}

double quantize_sig9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::string encode_fingerprint(const Fingerprint& fp) {
  std::string out = "{\"format_version\":1,\"grid_size\":" +
                    std::to_string(fp.grid_size) + ",\"magnetic_grid\":[";
  char buf[40];
  auto append_grid = [&](const Grid& grid) {
    bool leading = true;
    for (int r = 0; r < grid.rows(); ++r) {
      for (int c = 0; c < grid.cols(); ++c) {
        if (!leading) out.push_back(',');
        leading = false;
        std::snprintf(buf, sizeof(buf), "%.9g", grid(r, c));
        out += buf;
      }
    }
  };
  append_grid(fp.magnetic);
  out += "],\"optical_grid\":[";
  append_grid(fp.optical);
  out += "]}";
  return out;
}

Fingerprint decode_fingerprint(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParamsInvalid("fingerprint text is not JSON");
  return fingerprint_from_json(j);
}

nlohmann::json fingerprint_to_json(const Fingerprint& fp) {
  nlohmann::json mag = nlohmann::json::array();
  nlohmann::json opt = nlohmann::json::array();
  for (int r = 0; r < fp.grid_size; ++r) {
    for (int c = 0; c < fp.grid_size; ++c) {
      mag.push_back(fp.magnetic(r, c));
      opt.push_back(fp.optical(r, c));
    }
  }
  return {{"format_version", 1},
          {"grid_size", fp.grid_size},
          {"magnetic_grid", mag},
          {"optical_grid", opt}};
}

Fingerprint fingerprint_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format_version", 0) != 1) {
    throw ParamsInvalid("unsupported fingerprint format");
  }
  if (!j.contains("grid_size") || !j["grid_size"].is_number_integer()) {
    throw ParamsInvalid("missing grid_size");
  }
  const int g = j["grid_size"].get<int>();
  if (g < 1 || g > 4096) throw ParamsInvalid("grid_size out of range");
  Fingerprint fp;
  fp.grid_size = g;
  auto read_grid = [&](const char* field, Grid& grid, double lo, double hi) {
    if (!j.contains(field) || !j[field].is_array() ||
        j[field].size() != static_cast<size_t>(g) * g) {
      throw ParamsInvalid(std::string(field) + " must hold grid_size^2 values");
    }
    grid = Grid::Zero(g, g);
    size_t idx = 0;
    for (const auto& v : j[field]) {
      if (!v.is_number()) throw ParamsInvalid("grid values must be numbers");
      const double d = v.get<double>();
      if (!std::isfinite(d) || d < lo || d > hi) {
        throw ParamsInvalid("grid value out of range");
      }
      grid(idx / g, idx % g) = d;
      ++idx;
    }
  };
  read_grid("magnetic_grid", fp.magnetic, 0.0,
            std::numeric_limits<double>::max());
  read_grid("optical_grid", fp.optical, 0.0, 1.0);
  return fp;
}

std::string fingerprint_digest(const Fingerprint& fp) {
  const std::string text = encode_fingerprint(fp);
  unsigned char hash[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), hash, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "sha256:";
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[hash[i] >> 4]);
    out.push_back(kHex[hash[i] & 0xf]);
  }
  return out;
}

}  // namespace veriseal::upo
