// Datasets and model files: the CSV grid format, synthetic ground-truth
// machines, q-axis mirroring and model-document persistence.
//
// Grid CSV layout (UTF-8, LF, per-unit values):
//
//   # gradmag-dataset kind=current-grid dims=21x13 [voltage_base=.. current_base=..
//     frequency_base=.. pole_pairs=..]
//   psi_d,psi_q,i_d,i_q[,theta_m][,tau]
//   <one row per sample>
//
// The metadata line is a single line; its key=value fields may appear in any
// order. Columns may appear in any order; theta_m (electrical rotor angle,
// rad) and tau are optional.
#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "gradmag/core.hpp"
#include "gradmag/inversion.hpp"
#include "gradmag/magnetics.hpp"
#include "gradmag/quadrature.hpp"
#include "gradmag/training.hpp"

namespace gradmag {

// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetHeader {
  DatasetKind kind = DatasetKind::CurrentGrid;
  std::vector<int> dims;
  std::optional<PerUnitBase> base;
  std::vector<std::string> columns;
};

struct GridFile {
  DatasetHeader header;
  SampleGrid grid;
  // Non-fatal findings, e.g. secant-monotonicity violations in measured data.
  std::vector<std::string> warnings;
};

// "21x13" or "13x13x12".
inline std::vector<int> parse_dims(const std::string &text) {
  std::vector<int> dims;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t x = std::min(text.find('x', pos), text.size());
    const std::string part = text.substr(pos, x - pos);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size() || v < 1) {
      throw std::invalid_argument("invalid grid dimensions '" + text + "' (expected e.g. 21x13)");
    }
    dims.push_back(v);
    pos = x + 1;
  }
  return dims;
}

inline std::string format_dims(const std::vector<int> &dims) {
  std::string s;
  for (std::size_t k = 0; k < dims.size(); ++k) s += (k ? "x" : "") + std::to_string(dims[k]);
  return s;
}

// Shortest representation that reads back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace detail {

inline std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

inline double parse_number(const std::string &s, const std::string &where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(where + ": cannot parse number '" + s + "'");
  }
  if (!std::isfinite(v)) throw DataError(where + ": non-finite value '" + s + "'");
  return v;
}

// Grid coordinates in storage order.
inline std::vector<double> grid_key(DatasetKind kind, const Sample &s) {
  switch (kind) {
    case DatasetKind::CurrentGrid: return {s.i.d, s.i.q};
    case DatasetKind::FluxGrid: return {s.psi.d, s.psi.q};
    case DatasetKind::HarmonicGrid: return {s.i.d, s.i.q, s.theta_m};
  }
  return {};
}

}  // namespace detail

// Sorts samples lexicographically by grid coordinates (fastest index last).
inline void sort_grid(SampleGrid &grid) {
  std::stable_sort(grid.samples.begin(), grid.samples.end(), [&](const Sample &a, const Sample &b) {
    return detail::grid_key(grid.kind, a) < detail::grid_key(grid.kind, b);
  });
}

// Secant monotonicity along the grid axes: (dpsi)^T (di) > 0 between
// neighbours that differ in one current or flux coordinate.
inline std::vector<std::string> monotonicity_warnings(const SampleGrid &grid) {
  std::vector<std::string> warnings;
  if (grid.dims.size() < 2 || grid.size() < 2) return warnings;
  const std::size_t axes = grid.kind == DatasetKind::HarmonicGrid ? 2 : grid.dims.size();
  std::size_t violations = 0, checked = 0;
  for (std::size_t a = 0; a < axes && a < grid.dims.size(); ++a) {
    std::size_t stride = 1;
    for (std::size_t b = a + 1; b < grid.dims.size(); ++b) stride *= std::size_t(grid.dims[b]);
    for (std::size_t n = 0; n + stride < grid.size(); ++n) {
      const std::size_t idx = (n / stride) % std::size_t(grid.dims[a]);
      if (idx + 1 >= std::size_t(grid.dims[a])) continue;
      const Sample &p = grid.samples[n], &q = grid.samples[n + stride];
      ++checked;
      if (dot(q.psi - p.psi, q.i - p.i) <= 0.0) ++violations;
    }
  }
  if (violations > 0) {
    warnings.push_back("secant monotonicity violated on " + std::to_string(violations) + " of " +
                       std::to_string(checked) + " grid edges");
  }
  return warnings;
}

inline GridFile parse_grid(std::istream &in, const std::string &source = "<input>") {
  GridFile out;
  std::string line;
  int line_no = 0;
  const auto where = [&](int n) { return source + ":" + std::to_string(n); };

  // Metadata line.
  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  ++line_no;
  line = detail::trim(line);
  if (line.empty() || line[0] != '#') {
    throw DataError(where(line_no) + ": expected a '#' metadata line");
  }
  std::map<std::string, std::string> meta;
  {
    std::istringstream ms(line.substr(1));
    std::string tok;
    while (ms >> tok) {
      const auto eq = tok.find('=');
      if (eq != std::string::npos) meta[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
  }
  if (!meta.count("kind")) throw DataError(where(line_no) + ": metadata lacks 'kind='");
  const auto kind = parse_dataset_kind(meta["kind"]);
  if (!kind) throw DataError(where(line_no) + ": unknown dataset kind '" + meta["kind"] + "'");
  out.header.kind = *kind;
  if (meta.count("dims")) {
    try {
      out.header.dims = parse_dims(meta["dims"]);
    } catch (const std::invalid_argument &e) {
      throw DataError(where(line_no) + ": " + e.what());
    }
  }
  const char *base_keys[] = {"voltage_base", "current_base", "frequency_base", "pole_pairs"};
  if (std::any_of(std::begin(base_keys), std::end(base_keys), [&](const char *k) { return meta.count(k); })) {
    PerUnitBase b{};
    for (const char *k : base_keys) {
      if (!meta.count(k)) throw DataError(where(line_no) + ": per-unit base lacks '" + k + "='");
    }
    b.voltage_base = detail::parse_number(meta["voltage_base"], where(line_no));
    b.current_base = detail::parse_number(meta["current_base"], where(line_no));
    b.frequency_base = detail::parse_number(meta["frequency_base"], where(line_no));
    b.pole_pairs = int(detail::parse_number(meta["pole_pairs"], where(line_no)));
    try {
      b.validate();
    } catch (const std::invalid_argument &e) {
      throw DataError(where(line_no) + ": " + e.what());
    }
    out.header.base = b;
  }

  // Column line.
  if (!std::getline(in, line)) throw DataError(source + ": missing column header line");
  ++line_no;
  out.header.columns = detail::split(detail::trim(line), ',');
  static const std::vector<std::string> known = {"psi_d", "psi_q", "i_d", "i_q", "theta_m", "tau"};
  std::array<int, 6> col{-1, -1, -1, -1, -1, -1};
  for (std::size_t c = 0; c < out.header.columns.size(); ++c) {
    const auto it = std::find(known.begin(), known.end(), out.header.columns[c]);
    if (it == known.end()) {
      throw DataError(where(line_no) + ": unknown column '" + out.header.columns[c] + "'");
    }
    const auto k = std::size_t(it - known.begin());
    if (col[k] >= 0) throw DataError(where(line_no) + ": duplicate column '" + known[k] + "'");
    col[k] = int(c);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    if (col[k] < 0) throw DataError(where(line_no) + ": missing column '" + known[k] + "'");
  }
  SampleGrid &g = out.grid;
  g.kind = out.header.kind;
  g.has_theta = col[4] >= 0;
  g.has_torque = col[5] >= 0;
  if (g.kind == DatasetKind::HarmonicGrid && !g.has_theta) {
    throw DataError(where(line_no) + ": harmonic-grid data needs a theta_m column");
  }

  // Rows.
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto fields = detail::split(t, ',');
    if (fields.size() != out.header.columns.size()) {
      throw DataError(where(line_no) + ": expected " + std::to_string(out.header.columns.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    const auto value = [&](std::size_t k) {
      return detail::parse_number(fields[std::size_t(col[k])], where(line_no));
    };
    Sample s;
    s.psi = {value(0), value(1)};
    s.i = {value(2), value(3)};
    if (g.has_theta) s.theta_m = value(4);
    if (g.has_torque) s.tau = value(5);
    g.samples.push_back(s);
  }
  if (g.samples.empty()) throw DataError(source + ": no data rows");
  if (!out.header.dims.empty()) {
    std::size_t expected = 1;
    for (int d : out.header.dims) expected *= std::size_t(d);
    if (expected != g.samples.size()) {
      throw DataError(source + ": dims " + format_dims(out.header.dims) + " need " +
                      std::to_string(expected) + " rows, found " + std::to_string(g.samples.size()));
    }
  }
  g.dims = out.header.dims.empty() ? std::vector<int>{int(g.samples.size())} : out.header.dims;
  sort_grid(g);
  g.refresh_normalizers();
  try {
    g.validate();
  } catch (const std::invalid_argument &e) {
    throw DataError(source + ": " + e.what());
  }
  out.warnings = monotonicity_warnings(g);
  return out;
}

inline GridFile read_grid_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path + "'");
  return parse_grid(in, path);
}

inline SampleGrid load_grid(const std::string &path) { return read_grid_file(path).grid; }

inline void write_grid(std::ostream &out, const SampleGrid &grid,
                       const std::optional<PerUnitBase> &base = std::nullopt) {
  out << "# gradmag-dataset kind=" << to_string(grid.kind);
  if (!grid.dims.empty()) out << " dims=" << format_dims(grid.dims);
  if (base) {
    out << " voltage_base=" << format_double(base->voltage_base)
        << " current_base=" << format_double(base->current_base)
        << " frequency_base=" << format_double(base->frequency_base)
        << " pole_pairs=" << base->pole_pairs;
  }
  out << "\npsi_d,psi_q,i_d,i_q" << (grid.has_theta ? ",theta_m" : "")
      << (grid.has_torque ? ",tau" : "") << "\n";
  for (const Sample &s : grid.samples) {
    out << format_double(s.psi.d) << ',' << format_double(s.psi.q) << ',' << format_double(s.i.d)
        << ',' << format_double(s.i.q);
    if (grid.has_theta) out << ',' << format_double(s.theta_m);
    if (grid.has_torque) out << ',' << format_double(s.tau);
    out << '\n';
  }
}

inline void save_grid(const std::string &path, const SampleGrid &grid,
                      const std::optional<PerUnitBase> &base = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset '" + path + "'");
  write_grid(out, grid, base);
  if (!out) throw DataError("error while writing dataset '" + path + "'");
}

// ---------------------------------------------------------------------------
// Grid specifications and synthetic data

struct GridSpec {
  DatasetKind kind = DatasetKind::CurrentGrid;
  // Points along the d and q coordinate and, for harmonic grids, the angle.
  int n_d = 21;
  int n_q = 13;
  int n_theta = 1;
  double d_min = -2.0, d_max = 2.0;
  double q_min = 0.0, q_max = 2.4;
  // Angles theta_m = j * theta_span / n_theta, j = 0 .. n_theta - 1.
  double theta_span = std::numbers::pi / 3.0;

  void validate() const {
    if (n_d < 1 || n_q < 1 || n_theta < 1) throw std::invalid_argument("grid spec: counts must be >= 1");
    if (!(d_max >= d_min) || !(q_max >= q_min)) throw std::invalid_argument("grid spec: empty range");
    if ((n_d > 1 && d_max == d_min) || (n_q > 1 && q_max == q_min)) {
      throw std::invalid_argument("grid spec: several points on a zero-length range");
    }
    if (kind == DatasetKind::HarmonicGrid && !(theta_span > 0.0)) {
      throw std::invalid_argument("grid spec: theta span must be positive");
    }
  }
  std::vector<int> dims() const {
    return kind == DatasetKind::HarmonicGrid ? std::vector<int>{n_d, n_q, n_theta}
                                             : std::vector<int>{n_d, n_q};
  }
  double d_at(int k) const { return n_d == 1 ? d_min : d_min + (d_max - d_min) * k / (n_d - 1); }
  double q_at(int k) const { return n_q == 1 ? q_min : q_min + (q_max - q_min) * k / (n_q - 1); }
  double theta_at(int k) const { return theta_span * k / n_theta; }
};

// Saturable synchronous machine defined by an explicit convex co-energy
//
//   W'(i) = psi_f i_d + L_d F(i_d; k_d) + L_q F(i_q; k_q) + L_c F(|i|; k_c)
//           + L_sigma |i|^2 / 2
//
// with the saturation profile F(x; k) = int_0^x f, f(s) = s / (1 + (k|s|)^S)^(1/S).
// f is odd and strictly increasing (f' = (1 + (k|s|)^S)^(-1/S - 1) > 0), so
// every term is convex; the radial term couples the axes (cross-saturation).
// Zero saturation coefficients k give the linear machine with inductances
// L_d + L_c + L_sigma and L_q + L_c + L_sigma.
struct SaturableParams {
  double psi_f = 0.45;
  double L_d = 0.35;
  double L_q = 1.1;
  double k_d = 0.8;
  double k_q = 1.2;
  double L_c = 0.1;
  double k_c = 1.0;
  double L_sigma = 0.08;
  double S = 2.0;

  void validate() const {
    for (double v : {L_d, L_q, L_c, L_sigma, k_d, k_q, k_c}) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("saturable machine: inductances and saturation coefficients must be >= 0");
      }
    }
    if (!(S > 0.0)) throw std::invalid_argument("saturable machine: exponent S must be positive");
    if (!std::isfinite(psi_f)) throw std::invalid_argument("saturable machine: psi_f must be finite");
  }
};

class SaturableMachine {
 public:
  explicit SaturableMachine(SaturableParams p = {}) : p_(p) { p_.validate(); }
  const SaturableParams &params() const { return p_; }

  Vec2 flux(const Vec2 &i) const {
    const double r = norm(i);
    const double gc = p_.L_c * radial_gain(r) + p_.L_sigma;
    return {p_.psi_f + p_.L_d * sat(i.d, p_.k_d) + gc * i.d, p_.L_q * sat(i.q, p_.k_q) + gc * i.q};
  }

  // Incremental inductance d psi / d i (symmetric).
  Mat2 inductance(const Vec2 &i) const {
    const double r = norm(i);
    const double g = radial_gain(r);
    Mat2 m = Mat2::diag(p_.L_d * sat_slope(i.d, p_.k_d) + p_.L_c * g + p_.L_sigma,
                        p_.L_q * sat_slope(i.q, p_.k_q) + p_.L_c * g + p_.L_sigma);
    if (r > 0.0 && p_.k_c > 0.0) {
      // d/dr of the radial gain, times i i^T / r.
      const double u = std::pow(p_.k_c * r, p_.S);
      const double c = -p_.L_c * u * std::pow(1.0 + u, -1.0 / p_.S - 1.0) / (r * r);
      const double cross = c * i.d * i.q;
      m = m + Mat2{c * i.d * i.d, cross, cross, c * i.q * i.q};
    }
    return m;
  }

  double torque(const Vec2 &i) const { return cross_torque(i, flux(i)); }

  // W'(i) - W'(0) by Gauss-Legendre quadrature along the ray.
  double co_energy(const Vec2 &i) const {
    return integrate_adaptive([&](double t) { return dot(flux(t * i), i); }, 0.0, 1.0, 1e-13);
  }

  Vec2 current(const Vec2 &psi, double tol = 1e-13) const {
    const InversionResult r = damped_newton([&](const Vec2 &x) { return flux(x); },
                                            [&](const Vec2 &x) { return inductance(x); }, psi,
                                            {0.0, 0.0}, {tol, 200});
    if (!r.converged) throw InversionError("saturable machine: flux inversion failed", r.residual);
    return r.x;
  }

 private:
  // f(s) = s / (1 + (k|s|)^S)^(1/S) and its derivative.
  double sat(double s, double k) const {
    return k == 0.0 ? s : s * std::pow(1.0 + std::pow(k * std::abs(s), p_.S), -1.0 / p_.S);
  }
  double sat_slope(double s, double k) const {
    return k == 0.0 ? 1.0 : std::pow(1.0 + std::pow(k * std::abs(s), p_.S), -1.0 / p_.S - 1.0);
  }
  // f(r) / r for the radial term.
  double radial_gain(double r) const {
    return p_.k_c == 0.0 ? 1.0 : std::pow(1.0 + std::pow(p_.k_c * r, p_.S), -1.0 / p_.S);
  }

  SaturableParams p_;
};

namespace detail {

// Fills a grid from (i, psi, tau) = pair(coordinate, theta).
template <class F>
SampleGrid build_grid(const GridSpec &spec, F &&pair) {
  spec.validate();
  SampleGrid g;
  g.kind = spec.kind;
  g.dims = spec.dims();
  g.has_torque = true;
  g.has_theta = spec.kind == DatasetKind::HarmonicGrid;
  for (int a = 0; a < spec.n_d; ++a) {
    for (int b = 0; b < spec.n_q; ++b) {
      for (int c = 0; c < (g.has_theta ? spec.n_theta : 1); ++c) {
        const double th = g.has_theta ? spec.theta_at(c) : 0.0;
        g.samples.push_back(pair(Vec2{spec.d_at(a), spec.q_at(b)}, th));
      }
    }
  }
  g.refresh_normalizers();
  g.validate();
  return g;
}

}  // namespace detail

// Exactly consistent (psi, i, tau) samples of the saturable machine on a
// current grid or (by Newton inversion of the closed form) on a flux grid.
inline SampleGrid synth_saturable(const GridSpec &spec, const SaturableParams &params = {}) {
  if (spec.kind == DatasetKind::HarmonicGrid) {
    throw std::invalid_argument("synth_saturable: the saturable machine has no spatial harmonics");
  }
  const SaturableMachine m(params);
  SampleGrid g = detail::build_grid(spec, [&](const Vec2 &x, double) {
    Sample s;
    if (spec.kind == DatasetKind::CurrentGrid) {
      s.i = x;
      s.psi = m.flux(x);
    } else {
      s.psi = x;
      s.i = m.current(x);
    }
    s.tau = cross_torque(s.i, s.psi);
    return s;
  });
  for (const Sample &s : g.samples) {
    if (!(m.inductance(s.i).min_sym_eigenvalue() > 0.0)) {
      throw std::invalid_argument("synth_saturable: parameters give a non-monotone flux map on the grid");
    }
  }
  return g;
}

// Samples of a magnetic model on a grid. Current and harmonic grids need a
// flux map or invert a current map; flux grids need a current map or invert
// a flux map.
inline SampleGrid synth_from_model(const GridSpec &spec, const MagneticModel &model) {
  return detail::build_grid(spec, [&](const Vec2 &x, double th) {
    Sample s;
    s.theta_m = th;
    if (spec.kind == DatasetKind::FluxGrid) {
      s.psi = x;
      if (model.provides_current_map()) {
        const MagneticOutput o = model.current_map(x, th);
        s.i = o.primal;
        s.tau = o.torque;
      } else {
        s.i = invert_flux_map(model, x, th, {}, 1e-12);
        s.tau = model.flux_map(s.i, th).torque;
      }
    } else {
      s.i = x;
      if (model.provides_flux_map()) {
        const MagneticOutput o = model.flux_map(x, th);
        s.psi = o.primal;
        s.tau = o.torque;
      } else {
        s.psi = invert_current_map(model, x, th, {}, 1e-12);
        s.tau = model.current_map(s.psi, th).torque;
      }
    }
    return s;
  });
}

inline SampleGrid synth_linear(const GridSpec &spec, double L_d, double L_q, double psi_f) {
  if (spec.kind == DatasetKind::HarmonicGrid) {
    throw std::invalid_argument("synth_linear: the linear machine has no spatial harmonics");
  }
  return synth_from_model(spec, MagneticModel::linear(L_d, L_q, psi_f));
}

// Completes a half-plane grid (q coordinate >= 0) with its reflection
// (i_q, psi_q, tau negated). Samples on the axis appear once; a grid that is
// already symmetric is returned unchanged.
inline SampleGrid mirror_q_axis(const SampleGrid &grid) {
  if (grid.kind == DatasetKind::HarmonicGrid) {
    throw std::invalid_argument("mirror_q_axis: harmonic grids have no q-axis symmetry");
  }
  const bool by_current = grid.kind == DatasetKind::CurrentGrid;
  const auto qcoord = [&](const Sample &s) { return by_current ? s.i.q : s.psi.q; };
  const auto reflect = [](Sample s) {
    s.i.q = -s.i.q;
    s.psi.q = -s.psi.q;
    s.tau = -s.tau;
    return s;
  };
  const bool has_negative =
      std::any_of(grid.samples.begin(), grid.samples.end(), [&](const Sample &s) { return qcoord(s) < 0.0; });
  if (has_negative) {
    // Already mirrored if every sample's reflection is present.
    for (const Sample &s : grid.samples) {
      const Sample r = reflect(s);
      const auto key = detail::grid_key(grid.kind, r);
      const bool found = std::any_of(grid.samples.begin(), grid.samples.end(), [&](const Sample &t) {
        return detail::grid_key(grid.kind, t) == key;
      });
      if (!found) throw std::invalid_argument("mirror_q_axis: grid is not a half-plane grid");
    }
    return grid;
  }
  SampleGrid out = grid;
  std::size_t axis = 0;
  for (const Sample &s : grid.samples) {
    if (qcoord(s) > 0.0) {
      out.samples.push_back(reflect(s));
    } else {
      ++axis;
    }
  }
  sort_grid(out);
  if (grid.dims.size() == 2 && grid.dims[0] > 0 && axis == std::size_t(grid.dims[0])) {
    out.dims = {grid.dims[0], 2 * grid.dims[1] - 1};
  } else if (grid.dims.size() == 2 && axis == 0) {
    out.dims = {grid.dims[0], 2 * grid.dims[1]};
  } else {
    out.dims = {int(out.samples.size())};
  }
  out.refresh_normalizers();
  return out;
}

// ---------------------------------------------------------------------------
// Reference harmonic networks

// A frozen, seeded harmonic network with machine-like magnitudes: a
// saturating flux (or current) map around a d-axis magnet flux whose
// dependence on the angle features is weak, giving a few percent of flux
// ripple and a clearly visible k-th order torque ripple. Used as teacher for
// student-training tests and as simulation plant.
inline MagneticModel harmonic_reference(Variant variant, std::uint64_t seed, int hidden = 16,
                                        int k = MagneticModel::kDefaultHarmonicOrder) {
  if (!is_harmonic(variant)) throw std::invalid_argument("harmonic_reference: needs a harmonic variant");
  GradientNetwork net(4, hidden, {Activation::Softmax, 2.0, 8});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int r = 0; r < hidden; ++r) {
    net.A()(r, 0) = 0.8 * normal(rng);
    net.A()(r, 1) = 0.8 * normal(rng);
    net.A()(r, 2) = 0.06 * normal(rng);
    net.A()(r, 3) = 0.06 * normal(rng);
    net.b()[r] = 0.5 * normal(rng);
  }
  const bool flux = is_coenergy_based(variant);
  Eigen::VectorXd a0(4);
  // Flux maps: slope ~ inductance; current maps: slope ~ inverse inductance.
  a0 << (flux ? 0.3 : 1.6), (flux ? 0.8 : 0.7), 0.0, 0.0;
  net.set_a0_diag(a0);
  // Shift the output so that the unexcited machine carries the magnet flux
  // (flux map: psi(0) = [0.45, 0]; current map: i([0.45, 0]) = 0) and the
  // angle-feature gradient vanishes there at theta = 0.
  Eigen::VectorXd x0(4);
  x0 << (flux ? 0.0 : 0.45), 0.0, 1.0, 0.0;
  Eigen::VectorXd target = Eigen::VectorXd::Zero(4);
  if (flux) target[0] = 0.45;
  net.b0() = target - (net.forward(x0) - net.b0());
  return MagneticModel::network(variant, std::move(net), k, Normalization::identity(4));
}

// ---------------------------------------------------------------------------
// Model files

inline void save_model(const std::string &path, const MagneticModel &model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model '" + path + "'");
  out << model.to_json().dump(2) << '\n';
  if (!out) throw DataError("error while writing model '" + path + "'");
}

inline MagneticModel load_model(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw DataError("model '" + path + "': invalid JSON: " + e.what());
  }
  try {
    return MagneticModel::from_json(j);
  } catch (const std::exception &e) {
    throw DataError("model '" + path + "': " + e.what());
  }
}

}  // namespace gradmag
