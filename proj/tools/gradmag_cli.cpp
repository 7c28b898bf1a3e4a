// gradmag: command-line front end for dataset generation, training,
// evaluation, inversion, drive simulation and optimal-loci export.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradmag/gradmag.hpp"

namespace {

using namespace gradmag;
using nlohmann::json;

constexpr double kPi = std::numbers::pi;

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Bad flag values detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal invariant check failed after the outputs were computed.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char *kSchemaHelp = R"(File formats (all values per-unit, decimal, UTF-8, LF):
  dataset CSV   '# gradmag-dataset kind=<current-grid|flux-grid|harmonic-grid> dims=<AxB[xC]>
                 [voltage_base=.. current_base=.. frequency_base=.. pole_pairs=..]'
                then the column line psi_d,psi_q,i_d,i_q[,theta_m,tau] and one row per sample.
  model JSON    variant, hidden units, activation, k, normalization and all parameters.
  trace CSV     (simulate) t,psi_d,psi_q,i_d,i_q,tau_m,omega_m,u_d,u_q; t in per-unit time
                (2 pi per electrical period at rated speed).
  training CSV  (train) epoch,loss,e_rms_holdout (empty when not evaluated).
  inverse CSV   (invert) target_d,target_q,theta_m,x_d,x_q,residual,iterations,converged.
  loci CSV      (loci) curve,level,index,i_d,i_q,psi_d,psi_q,tau,angle; curve is
                current-limit (level = i_max, closed), mtpa (level = torque) or
                mtpv (level = flux-linkage magnitude).
  maps CSV      (export-maps) theta_m,i_d,i_q,psi_d,psi_q,tau on a dense grid of the model input.
  Every command also writes <output stem>.summary.json beside its output.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.)";

std::vector<double> parse_list(const std::string &text, const std::string &flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw UsageError(flag + ": '" + item + "' is not a number");
    }
    if (!std::isfinite(out.back())) throw UsageError(flag + ": values must be finite");
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

std::pair<double, double> parse_range(const std::string &text, const std::string &flag) {
  const auto v = parse_list(text, flag);
  if (v.size() != 2 || !(v[1] >= v[0])) throw UsageError(flag + ": expected 'lo,hi' with lo <= hi");
  return {v[0], v[1]};
}

std::vector<int> parse_grid_dims(const std::string &text) {
  try {
    return parse_dims(text);
  } catch (const std::exception &e) {
    throw UsageError(std::string("--grid: ") + e.what());
  }
}

std::filesystem::path summary_path(const std::string &out) {
  std::filesystem::path p(out);
  p.replace_extension(".summary.json");
  return p;
}

void write_json(const std::filesystem::path &path, const json &j) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
  if (!f) throw DataError("error while writing '" + path.string() + "'");
}

std::ofstream open_output(const std::string &path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path + "'");
  f.precision(17);
  return f;
}

json to_json(const ErrorStats &s) {
  return {{"e_rms", s.e_rms}, {"e_max", s.e_max}, {"e_std", s.e_std}, {"count", s.count}};
}

json to_json(const ErrorReport &r) {
  json j{{"primal", r.primal_name}, {"primal_error", to_json(r.primal)}};
  if (r.torque) j["torque_error"] = to_json(*r.torque);
  return j;
}

json to_json(const Vec2 &v) { return json::array({v.d, v.q}); }

MagneticModel read_model(const std::string &path) { return load_model(path); }

SampleGrid read_data(const std::string &path, std::vector<std::string> *warnings = nullptr) {
  GridFile f = read_grid_file(path);
  for (const std::string &w : f.warnings) std::cerr << "warning: " << path << ": " << w << '\n';
  if (warnings) *warnings = f.warnings;
  return std::move(f.grid);
}

void require_compatible(const MagneticModel &m, const SampleGrid &g, const std::string &what) {
  try {
    check_compatible(m, g);
  } catch (const std::invalid_argument &e) {
    throw DataError(what + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
  std::string kind = "saturable";
  std::string grid;
  std::string grid_type = "current";
  std::string d_range, q_range;
  bool mirror = false;
  std::optional<double> L_d, L_q, psi_f;
  std::string variant = "harmonic-flux";
  std::uint64_t seed = 2024;
  int hidden = 16;
  int k = MagneticModel::kDefaultHarmonicOrder;
  std::string out;
};

int cmd_gen_data(const GenDataArgs &a) {
  GridSpec spec;
  const bool harmonic = a.kind == "harmonic";
  if (a.kind != "saturable" && a.kind != "linear" && !harmonic) {
    throw UsageError("--kind: expected saturable, linear or harmonic");
  }
  if (harmonic) {
    spec.kind = DatasetKind::HarmonicGrid;
    spec.n_d = spec.n_q = 13;
    spec.n_theta = 12;
    spec.q_min = -2.0;
    spec.q_max = 2.0;
    if (a.k < 1) throw UsageError("--k must be >= 1");
    spec.theta_span = 2.0 * kPi / a.k;
  } else if (a.grid_type == "flux") {
    spec.kind = DatasetKind::FluxGrid;
    spec.d_min = -0.5;
    spec.d_max = 1.2;
    spec.q_max = 1.5;
  } else if (a.grid_type != "current") {
    throw UsageError("--grid-type: expected current or flux");
  }
  if (!a.grid.empty()) {
    const auto dims = parse_grid_dims(a.grid);
    if (dims.size() != (harmonic ? 3u : 2u)) {
      throw UsageError(std::string("--grid: expected ") + (harmonic ? "DxQxT" : "DxQ") + " for kind " + a.kind);
    }
    spec.n_d = dims[0];
    spec.n_q = dims[1];
    if (harmonic) spec.n_theta = dims[2];
  }
  if (!a.d_range.empty()) std::tie(spec.d_min, spec.d_max) = parse_range(a.d_range, "--d-range");
  if (!a.q_range.empty()) std::tie(spec.q_min, spec.q_max) = parse_range(a.q_range, "--q-range");
  try {
    spec.validate();
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  if (a.mirror && spec.q_min != 0.0) throw UsageError("--mirror needs a half-plane grid (q range starting at 0)");

  SampleGrid g;
  json params;
  if (a.kind == "saturable") {
    SaturableParams p;
    if (a.L_d) p.L_d = *a.L_d;
    if (a.L_q) p.L_q = *a.L_q;
    if (a.psi_f) p.psi_f = *a.psi_f;
    g = synth_saturable(spec, p);
    params = {{"psi_f", p.psi_f}, {"L_d", p.L_d}, {"L_q", p.L_q}, {"k_d", p.k_d}, {"k_q", p.k_q},
              {"L_c", p.L_c}, {"k_c", p.k_c}, {"L_sigma", p.L_sigma}, {"S", p.S}};
  } else if (a.kind == "linear") {
    const double L_d = a.L_d.value_or(0.36), L_q = a.L_q.value_or(0.84), psi_f = a.psi_f.value_or(0.0);
    g = synth_linear(spec, L_d, L_q, psi_f);
    params = {{"L_d", L_d}, {"L_q", L_q}, {"psi_f", psi_f}};
  } else {
    const auto v = parse_variant(a.variant);
    if (!v || !is_harmonic(*v)) throw UsageError("--variant: expected harmonic-flux or harmonic-current");
    g = synth_from_model(spec, harmonic_reference(*v, a.seed, a.hidden, a.k));
    params = {{"teacher", a.variant}, {"seed", a.seed}, {"hidden", a.hidden}, {"k", a.k}};
  }
  const std::size_t generated = g.size();
  if (a.mirror) g = mirror_q_axis(g);
  save_grid(a.out, g);

  write_json(summary_path(a.out),
             {{"command", "gen-data"}, {"output", a.out}, {"kind", a.kind},
              {"dataset_kind", std::string(to_string(g.kind))}, {"dims", g.dims},
              {"generated_samples", generated}, {"samples", g.size()}, {"mirrored", a.mirror},
              {"parameters", params}, {"psi_max", g.psi_max}, {"i_max", g.i_max}, {"tau_max", g.tau_max}});
  std::cout << "wrote " << g.size() << " samples (" << format_dims(g.dims) << ") to " << a.out << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data, variant = "current-sym", activation = "pnorm", out;
  int hidden = 12, p = 8, k = MagneticModel::kDefaultHarmonicOrder, stride = 10, epochs = 50000;
  int batch = 0;
  std::uint64_t seed = 0;
  double lr = 1e-2, final_lr_fraction = 0.01, weight_decay = 1e-4, beta = 1.0;
};

int cmd_train(const TrainArgs &a) {
  const auto variant = parse_variant(a.variant);
  if (!variant || *variant == Variant::LinearBaseline) {
    throw UsageError("--variant: expected current, current-sym, flux, flux-sym, harmonic-current or harmonic-flux");
  }
  const auto act = parse_activation(a.activation);
  if (!act) throw UsageError("--activation: expected squareplus, sigmoid, softmax or pnorm");
  if (a.hidden < 1) throw UsageError("--hidden must be >= 1");
  if (a.stride < 1) throw UsageError("--stride must be >= 1");
  std::vector<std::string> warnings;
  if (*act == Activation::Squareplus && is_coenergy_based(*variant)) {
    warnings.push_back("squareplus is rectifier-shaped and unsuited to saturating flux-linkage maps; "
                       "consider sigmoid, softmax or pnorm");
    std::cerr << "warning: " << warnings.back() << '\n';
  }
  std::vector<std::string> data_warnings;
  const SampleGrid grid = read_data(a.data, &data_warnings);
  const auto [train, hold] = subsample(grid, a.stride);

  const ActivationKind kind{*act, a.beta, a.p};
  try {
    kind.validate();
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  MagneticModel m0 = MagneticModel::create(*variant, a.hidden, kind, a.seed, a.k);
  require_compatible(m0, train, "train");
  m0 = make_model(*variant, a.hidden, kind, a.seed, train, a.k);

  TrainConfig c;
  c.learning_rate = a.lr;
  c.final_lr_fraction = a.final_lr_fraction;
  c.weight_decay = a.weight_decay;
  c.epochs = a.epochs;
  c.batch_size = a.batch;
  c.seed = a.seed;
  c.subsample_stride = a.stride;
  c.holdout_every = std::max(1, a.epochs / 100);
  try {
    c.validate();
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  const FitResult r = fit(m0, train, c, hold.empty() ? nullptr : &hold);
  save_model(a.out, r.model);

  std::filesystem::path trace_path(a.out);
  trace_path.replace_extension(".training.csv");
  std::ofstream t = open_output(trace_path.string());
  t << "epoch,loss,e_rms_holdout\n";
  for (const TraceEntry &e : r.trace) {
    t << e.epoch << ',' << e.loss << ',';
    if (!std::isnan(e.e_rms_holdout)) t << e.e_rms_holdout;
    t << '\n';
  }

  const ErrorReport all = evaluate(r.model, grid);
  json summary{{"command", "train"},
               {"data", a.data},
               {"output", a.out},
               {"training_trace", trace_path.string()},
               {"variant", a.variant},
               {"activation", a.activation},
               {"hidden", a.hidden},
               {"parameter_count", r.model.parameter_count()},
               {"seed", a.seed},
               {"stride", a.stride},
               {"train_samples", train.size()},
               {"holdout_samples", hold.size()},
               {"epochs", a.epochs},
               {"learning_rate", a.lr},
               {"final_lr_fraction", a.final_lr_fraction},
               {"weight_decay", a.weight_decay},
               {"initial_loss", r.initial_loss},
               {"final_loss", r.final_loss},
               {"beta", r.model.net().activation().beta},
               {"error_train", to_json(evaluate(r.model, train))},
               {"error_all", to_json(all)},
               {"warnings", warnings},
               {"data_warnings", data_warnings}};
  if (!hold.empty()) summary["error_holdout"] = to_json(evaluate(r.model, hold));
  write_json(summary_path(a.out), summary);
  std::cout << "trained " << a.variant << " (" << a.activation << ", N = " << a.hidden << ", "
            << r.model.parameter_count() << " parameters) on " << train.size() << " of " << grid.size()
            << " samples: " << all.primal_name << " e_rms " << all.primal.e_rms;
  if (all.torque) std::cout << ", torque e_rms " << all.torque->e_rms;
  std::cout << '\n';
  if (!(r.final_loss <= r.initial_loss)) {
    throw NumericalError("train: final loss " + std::to_string(r.final_loss) + " exceeds the initial loss " +
                         std::to_string(r.initial_loss));
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string &model_path, const std::string &data, const std::string &out) {
  const MagneticModel m = read_model(model_path);
  const SampleGrid g = read_data(data);
  require_compatible(m, g, "eval");
  const ErrorReport r = evaluate(m, g);
  json j = to_json(r);
  j["command"] = "eval";
  j["model"] = model_path;
  j["data"] = data;
  j["variant"] = std::string(to_string(m.variant()));
  j["samples"] = g.size();
  std::cout << r.primal_name << " e_rms " << r.primal.e_rms << ", e_max " << r.primal.e_max << ", e_std "
            << r.primal.e_std;
  if (r.torque) std::cout << "; torque e_rms " << r.torque->e_rms;
  std::cout << '\n';
  if (!out.empty()) {
    write_json(out, j);
  } else {
    std::cout << j.dump(2) << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// invert

struct InvertArgs {
  std::string model, in, out, map;
  std::vector<std::string> targets;
  double theta = 0.0, tol = 1e-12;
  int max_iter = 100;
};

int cmd_invert(const InvertArgs &a) {
  const MagneticModel m = read_model(a.model);
  bool current;
  if (a.map.empty()) {
    current = m.provides_current_map();
  } else if (a.map == "current" || a.map == "flux") {
    current = a.map == "current";
  } else {
    throw UsageError("--map: expected current or flux");
  }
  if (current ? !m.provides_current_map() : !m.provides_flux_map()) {
    throw DataError("invert: model '" + a.model + "' (" + std::string(to_string(m.variant())) + ") has no " +
                    (current ? "current" : "flux") + " map");
  }
  struct Target {
    Vec2 y;
    double theta;
  };
  std::vector<Target> targets;
  for (const std::string &t : a.targets) {
    const auto v = parse_list(t, "--target");
    if (v.size() != 2) throw UsageError("--target: expected 'd,q'");
    targets.push_back({{v[0], v[1]}, a.theta});
  }
  if (!a.in.empty()) {
    std::ifstream f(a.in);
    if (!f) throw DataError("cannot open '" + a.in + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      line = detail::trim(line);
      if (line.empty() || line[0] == '#' || line_no == 1) continue;  // header
      const auto cols = detail::split(line, ',');
      if (cols.size() != 2 && cols.size() != 3) {
        throw DataError(a.in + ":" + std::to_string(line_no) + ": expected target_d,target_q[,theta_m]");
      }
      const std::string where = a.in + ":" + std::to_string(line_no);
      targets.push_back({{detail::parse_number(cols[0], where), detail::parse_number(cols[1], where)},
                         cols.size() == 3 ? detail::parse_number(cols[2], where) : a.theta});
    }
  }
  if (targets.empty()) throw UsageError("invert: give --target d,q or --in FILE");

  std::ofstream out = open_output(a.out);
  out << "target_d,target_q,theta_m,x_d,x_q,residual,iterations,converged\n";
  int failed = 0;
  double worst = 0.0;
  for (const Target &t : targets) {
    const NewtonOptions opt{a.tol, a.max_iter};
    const InversionResult r =
        current ? solve_current_map(m, t.y, t.theta, {}, opt) : solve_flux_map(m, t.y, t.theta, {}, opt);
    failed += !r.converged;
    worst = std::max(worst, r.residual);
    out << t.y.d << ',' << t.y.q << ',' << t.theta << ',' << r.x.d << ',' << r.x.q << ',' << r.residual << ','
        << r.iterations << ',' << (r.converged ? 1 : 0) << '\n';
  }
  write_json(summary_path(a.out), {{"command", "invert"},
                                   {"model", a.model},
                                   {"output", a.out},
                                   {"inverted_map", current ? "current" : "flux"},
                                   {"solution", current ? "psi" : "i"},
                                   {"points", targets.size()},
                                   {"failed", failed},
                                   {"max_residual", worst},
                                   {"tolerance", a.tol}});
  std::cout << "inverted " << targets.size() << " points, max residual " << worst << '\n';
  if (failed) throw NumericalError("invert: " + std::to_string(failed) + " points did not converge");
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string model, control, out;
  double speed_ref = 1.0, ramp = 0.1, imax = 2.0, duration = 1.0, load = 0.0;
  double R_s = 0.04, H = 0.05, base_frequency = 60.0, dt = 2.0 * kPi / 1000.0;
  double speed_bandwidth = 0.1, flux_bandwidth = 0.3;
  int record_every = 1;
};

int cmd_simulate(const SimulateArgs &a) {
  const MagneticModel plant = read_model(a.model);
  if (!plant.provides_current_map()) {
    throw DataError("simulate: the plant model must be a current map (got '" +
                    std::string(to_string(plant.variant())) + "')");
  }
  std::optional<MagneticModel> control;
  if (!a.control.empty()) {
    control = read_model(a.control);
    if (!control->provides_flux_map()) {
      throw DataError("simulate: the control model must be a flux map (got '" +
                      std::string(to_string(control->variant())) + "')");
    }
  } else {
    control = linearized_flux_map(plant);
  }
  SimConfig c;
  c.R_s = a.R_s;
  c.inertia_H = a.H;
  c.base_frequency = a.base_frequency;
  c.load_torque = a.load;
  c.dt = a.dt;
  c.max_current = a.imax;
  c.speed_bandwidth = a.speed_bandwidth;
  c.flux_bandwidth = a.flux_bandwidth;
  c.record_every = a.record_every;
  if (!(a.duration > 0.0) || !(a.ramp >= 0.0)) throw UsageError("--duration must be > 0 and --ramp >= 0");
  c.t_end = c.seconds_to_pu(a.duration);
  c.speed_ref = speed_ramp(a.speed_ref, c.seconds_to_pu(a.ramp));
  try {
    c.validate();
  } catch (const std::invalid_argument &e) {
    throw UsageError(e.what());
  }
  const SimTrace tr = run_acceleration(plant, *control, c);
  {
    std::ofstream out = open_output(a.out);
    write_trace_csv(out, tr);
  }

  json summary{{"command", "simulate"},
               {"model", a.model},
               {"control_model", a.control.empty() ? "linearized plant" : a.control},
               {"output", a.out},
               {"t_end", c.t_end},
               {"steps", std::lround(std::ceil(c.t_end / c.dt - 1e-9))},
               {"final_speed", tr.final.omega_m},
               {"final_rotor_angle", tr.final.theta_m},
               {"final_flux", to_json(tr.final.psi)},
               {"peak_current", tr.peak_current()},
               {"electrical_energy", tr.electrical_energy},
               {"mechanical_energy", tr.mechanical_energy},
               {"field_energy_change", tr.field_energy_change},
               {"energy_residual", tr.energy_residual()}};
  if (!a.control.empty() && control->linear_baseline()) summary["control_model"] = a.control;
  const int revolutions = int(std::floor(std::abs(tr.final.theta_m) / (2.0 * kPi)));
  const int periods = std::min(10, revolutions / 2);
  if (periods >= 1) {
    const int max_order = 2 * (plant.harmonic() ? plant.k() : 6);
    const auto spectrum = torque_spectrum(tr, periods, max_order);
    summary["spectrum_periods"] = periods;
    summary["torque_spectrum"] = spectrum;
    summary["ripple_peak_order"] = ripple_peak_order(spectrum);
  }
  write_json(summary_path(a.out), summary);
  std::cout << "simulated " << a.duration << " s: final speed " << tr.final.omega_m << ", peak current "
            << tr.peak_current() << ", energy residual " << tr.energy_residual();
  if (summary.contains("ripple_peak_order")) {
    std::cout << ", ripple peak order " << summary["ripple_peak_order"].get<int>();
  }
  std::cout << '\n';
  const double scale = std::max({1.0, std::abs(tr.electrical_energy), std::abs(tr.mechanical_energy)});
  if (!(std::abs(tr.energy_residual()) <= 1e-6 * scale)) {
    throw NumericalError("simulate: energy balance residual " + std::to_string(tr.energy_residual()) +
                         " exceeds the tolerance");
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// loci

struct LociArgs {
  std::string model, imax, mtpv, out;
  int points = 181, mtpa_levels = 21;
};

int cmd_loci(const LociArgs &a) {
  const MagneticModel m = read_model(a.model);
  const auto limits = parse_list(a.imax, "--imax");
  for (double v : limits) {
    if (v < 0.0) throw UsageError("--imax: current limits must be >= 0");
  }
  if (a.points < 3) throw UsageError("--points must be >= 3");
  if (a.mtpa_levels < 2) throw UsageError("--mtpa-levels must be >= 2");
  std::vector<double> mtpv_levels;
  if (!a.mtpv.empty()) {
    mtpv_levels = parse_list(a.mtpv, "--mtpv");
    for (double v : mtpv_levels) {
      if (!(v > 0.0)) throw UsageError("--mtpv: flux levels must be > 0");
    }
  }

  std::ofstream out = open_output(a.out);
  out << "curve,level,index,i_d,i_q,psi_d,psi_q,tau,angle\n";
  const auto write = [&](const std::string &curve, double level, const std::vector<LocusPoint> &pts) {
    for (std::size_t n = 0; n < pts.size(); ++n) {
      const LocusPoint &p = pts[n];
      out << curve << ',' << level << ',' << n << ',' << p.i.d << ',' << p.i.q << ',' << p.psi.d << ','
          << p.psi.q << ',' << p.tau << ',' << p.angle << '\n';
    }
  };
  json curves = json::array();
  const auto certify = [&](const LocusPoint &p, double mag) {
    // +-1 degree optimality certificate at the same current magnitude.
    const double step = kPi / 180.0;
    const double g = std::atan2(p.i.q, p.i.d);
    for (double s : {-step, step}) {
      const Vec2 i{mag * std::cos(g + s), mag * std::sin(g + s)};
      if (point_at_current(m, i).tau > p.tau + 1e-9 * std::max(1.0, std::abs(p.tau))) return false;
    }
    return true;
  };
  for (double i_max : limits) {
    const auto pts = current_limit_curve(m, i_max, a.points);
    write("current-limit", i_max, pts);
    const double closure = norm(pts.front().psi - pts.back().psi);
    double peak = 0.0;
    for (const LocusPoint &p : pts) peak = std::max(peak, p.tau);
    curves.push_back({{"curve", "current-limit"}, {"level", i_max}, {"points", pts.size()},
                      {"closure_error", closure}, {"max_torque", peak}});
    if (closure > 1e-12) throw NumericalError("loci: current-limit curve not closed");
  }

  const double i_top = *std::max_element(limits.begin(), limits.end());
  int failed_certificates = 0;
  if (i_top > 0.0) {
    LociOptions opt;
    opt.current_limit = i_top;
    const double top = max_torque_at_current(m, i_top, true, opt).tau;
    std::vector<double> levels;
    for (int k = 0; k < a.mtpa_levels; ++k) levels.push_back(top * k / (a.mtpa_levels - 1));
    levels.back() *= 1.0 - 1e-9;
    const auto pts = mtpa_locus(m, levels, opt);
    for (std::size_t n = 1; n < pts.size(); ++n) failed_certificates += !certify(pts[n], norm(pts[n].i));
    write("mtpa", i_top, pts);
    curves.push_back({{"curve", "mtpa"}, {"level", i_top}, {"points", pts.size()}, {"max_torque", top}});
  }
  if (!mtpv_levels.empty()) {
    const auto pts = mtpv_locus(m, mtpv_levels);
    for (std::size_t n = 0; n < pts.size(); ++n) write("mtpv", mtpv_levels[n], {pts[n]});
    curves.push_back({{"curve", "mtpv"}, {"points", pts.size()}});
  }
  write_json(summary_path(a.out), {{"command", "loci"},
                                   {"model", a.model},
                                   {"output", a.out},
                                   {"harmonic_averaged", m.harmonic()},
                                   {"curves", curves},
                                   {"failed_certificates", failed_certificates}});
  std::cout << "wrote " << curves.size() << " curves to " << a.out << '\n';
  if (failed_certificates) {
    throw NumericalError("loci: " + std::to_string(failed_certificates) + " MTPA points failed the certificate");
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// export-maps

struct ExportArgs {
  std::string model, grid = "61x61", d_range, q_range, theta = "0", out;
};

int cmd_export_maps(const ExportArgs &a) {
  const MagneticModel m = read_model(a.model);
  const auto dims = parse_grid_dims(a.grid);
  if (dims.size() != 2) throw UsageError("--grid: expected DxQ");
  const bool current_input = m.provides_flux_map() && !m.provides_current_map();
  const bool flux_input = !current_input;
  // Default ranges: the typical per-unit operating region.
  auto d = flux_input ? std::make_pair(-0.5, 1.2) : std::make_pair(-2.0, 2.0);
  auto q = flux_input ? std::make_pair(-1.5, 1.5) : std::make_pair(-2.0, 2.0);
  if (!a.d_range.empty()) d = parse_range(a.d_range, "--d-range");
  if (!a.q_range.empty()) q = parse_range(a.q_range, "--q-range");
  const auto thetas = parse_list(a.theta, "--theta");

  std::ofstream out = open_output(a.out);
  out << "theta_m,i_d,i_q,psi_d,psi_q,tau\n";
  std::size_t rows = 0;
  for (double th : thetas) {
    for (int r = 0; r < dims[0]; ++r) {
      for (int s = 0; s < dims[1]; ++s) {
        const Vec2 x{dims[0] == 1 ? d.first : d.first + (d.second - d.first) * r / (dims[0] - 1),
                     dims[1] == 1 ? q.first : q.first + (q.second - q.first) * s / (dims[1] - 1)};
        const MagneticOutput o = m.primal_map(x, th);
        const Vec2 i = current_input ? x : o.primal, psi = current_input ? o.primal : x;
        if (!is_finite(o.primal) || !std::isfinite(o.torque)) {
          throw NumericalError("export-maps: non-finite model output");
        }
        out << th << ',' << i.d << ',' << i.q << ',' << psi.d << ',' << psi.q << ',' << o.torque << '\n';
        ++rows;
      }
    }
  }
  write_json(summary_path(a.out), {{"command", "export-maps"},
                                   {"model", a.model},
                                   {"output", a.out},
                                   {"input", current_input ? "i" : "psi"},
                                   {"grid", dims},
                                   {"d_range", {d.first, d.second}},
                                   {"q_range", {q.first, q.second}},
                                   {"theta_m", thetas},
                                   {"rows", rows}});
  std::cout << "wrote " << rows << " rows to " << a.out << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"gradmag: physics-consistent magnetic models of synchronous machines"};
  app.footer(kSchemaHelp);
  app.require_subcommand(1);

  GenDataArgs gen;
  auto *g = app.add_subcommand("gen-data", "Generate a synthetic dataset CSV");
  g->add_option("--kind", gen.kind, "saturable, linear or harmonic")->capture_default_str();
  g->add_option("--grid", gen.grid, "Grid points DxQ (harmonic: DxQxT); default 21x13 or 13x13x12");
  g->add_option("--grid-type", gen.grid_type, "current or flux (grid coordinates)")->capture_default_str();
  g->add_option("--d-range", gen.d_range, "d-coordinate range lo,hi");
  g->add_option("--q-range", gen.q_range, "q-coordinate range lo,hi");
  g->add_flag("--mirror", gen.mirror, "Mirror a q >= 0 half grid to the full plane");
  g->add_option("--Ld", gen.L_d, "d-axis inductance");
  g->add_option("--Lq", gen.L_q, "q-axis inductance");
  g->add_option("--psi-f", gen.psi_f, "Magnet flux linkage");
  g->add_option("--variant", gen.variant, "Harmonic teacher: harmonic-flux or harmonic-current")
      ->capture_default_str();
  g->add_option("--seed", gen.seed, "Harmonic teacher seed")->capture_default_str();
  g->add_option("--hidden", gen.hidden, "Harmonic teacher hidden units")->capture_default_str();
  g->add_option("--k", gen.k, "Harmonic order")->capture_default_str();
  g->add_option("--out", gen.out, "Output dataset CSV")->required();

  TrainArgs tr;
  auto *t = app.add_subcommand("train", "Train a gradient-network magnetic model");
  t->add_option("--data", tr.data, "Dataset CSV")->required();
  t->add_option("--variant", tr.variant,
                "current, current-sym, flux, flux-sym, harmonic-current or harmonic-flux")
      ->capture_default_str();
  t->add_option("--activation", tr.activation, "squareplus, sigmoid, softmax or pnorm")->capture_default_str();
  t->add_option("--hidden", tr.hidden, "Hidden units N")->capture_default_str();
  t->add_option("--p", tr.p, "p-norm exponent (even)")->capture_default_str();
  t->add_option("--beta", tr.beta, "Initial activation shape parameter")->capture_default_str();
  t->add_option("--k", tr.k, "Harmonic order")->capture_default_str();
  t->add_option("--stride", tr.stride, "Train on every stride-th sample (10 = 10 %)")->capture_default_str();
  t->add_option("--seed", tr.seed, "Initialization and mini-batch seed")->capture_default_str();
  t->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
  t->add_option("--lr", tr.lr, "Initial learning rate")->capture_default_str();
  t->add_option("--final-lr-fraction", tr.final_lr_fraction, "Final learning rate / initial (cosine decay)")
      ->capture_default_str();
  t->add_option("--weight-decay", tr.weight_decay, "Decoupled weight decay")->capture_default_str();
  t->add_option("--batch", tr.batch, "Mini-batch size (0 = full batch)")->capture_default_str();
  t->add_option("--out", tr.out, "Output model JSON")->required();

  std::string eval_model, eval_data, eval_out;
  auto *e = app.add_subcommand("eval", "Report e_rms, e_max, e_std of a model on a dataset");
  e->add_option("--model", eval_model, "Model JSON")->required();
  e->add_option("--data", eval_data, "Dataset CSV")->required();
  e->add_option("--out", eval_out, "Output report JSON (default: stdout)");

  InvertArgs inv;
  auto *iv = app.add_subcommand("invert", "Invert a magnetic map by damped Newton iteration");
  iv->add_option("--model", inv.model, "Model JSON")->required();
  iv->add_option("--map", inv.map, "Map to invert: current (solve for psi) or flux (solve for i)");
  iv->add_option("--target", inv.targets, "Target value d,q (repeatable)");
  iv->add_option("--in", inv.in, "CSV of targets: target_d,target_q[,theta_m] with a header line");
  iv->add_option("--theta", inv.theta, "Rotor angle for --target and two-column input")->capture_default_str();
  iv->add_option("--tol", inv.tol, "Residual tolerance")->capture_default_str();
  iv->add_option("--max-iter", inv.max_iter, "Newton iteration limit")->capture_default_str();
  iv->add_option("--out", inv.out, "Output CSV")->required();

  SimulateArgs sim;
  auto *s = app.add_subcommand("simulate", "Simulate a speed-controlled acceleration from standstill");
  s->add_option("--model", sim.model, "Plant model JSON (current map)")->required();
  s->add_option("--control", sim.control, "Control model JSON (flux map); default: linearized plant");
  s->add_option("--speed-ref", sim.speed_ref, "Final speed reference")->capture_default_str();
  s->add_option("--ramp", sim.ramp, "Speed-reference ramp time in seconds")->capture_default_str();
  s->add_option("--imax", sim.imax, "Maximum current magnitude")->capture_default_str();
  s->add_option("--duration", sim.duration, "Simulated time in seconds")->capture_default_str();
  s->add_option("--load", sim.load, "Load torque")->capture_default_str();
  s->add_option("--Rs", sim.R_s, "Stator resistance")->capture_default_str();
  s->add_option("--H", sim.H, "Inertia constant in seconds")->capture_default_str();
  s->add_option("--base-frequency", sim.base_frequency, "Base frequency in Hz")->capture_default_str();
  s->add_option("--dt", sim.dt, "RK4 step in per-unit time")->capture_default_str();
  s->add_option("--speed-bandwidth", sim.speed_bandwidth, "Speed-loop bandwidth")->capture_default_str();
  s->add_option("--flux-bandwidth", sim.flux_bandwidth, "Flux-control gain")->capture_default_str();
  s->add_option("--record-every", sim.record_every, "Record every n-th step")->capture_default_str();
  s->add_option("--out", sim.out, "Output trace CSV")->required();

  LociArgs loc;
  auto *l = app.add_subcommand("loci", "Export current-limit curves and MTPA/MTPV loci");
  l->add_option("--model", loc.model, "Model JSON")->required();
  l->add_option("--imax", loc.imax, "Current limits, comma separated (e.g. 0.5,1.0,2.0)")->required();
  l->add_option("--points", loc.points, "Points per current-limit curve")->capture_default_str();
  l->add_option("--mtpa-levels", loc.mtpa_levels, "MTPA torque levels up to the largest limit")
      ->capture_default_str();
  l->add_option("--mtpv", loc.mtpv, "MTPV flux-linkage levels, comma separated");
  l->add_option("--out", loc.out, "Output CSV")->required();

  ExportArgs ex;
  auto *x = app.add_subcommand("export-maps", "Evaluate a model on a dense grid for plotting");
  x->add_option("--model", ex.model, "Model JSON")->required();
  x->add_option("--grid", ex.grid, "Grid points DxQ")->capture_default_str();
  x->add_option("--d-range", ex.d_range, "Input d range lo,hi");
  x->add_option("--q-range", ex.q_range, "Input q range lo,hi");
  x->add_option("--theta", ex.theta, "Rotor angles, comma separated")->capture_default_str();
  x->add_option("--out", ex.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(eval_model, eval_data, eval_out);
    if (*iv) return cmd_invert(inv);
    if (*s) return cmd_simulate(sim);
    if (*l) return cmd_loci(loc);
    if (*x) return cmd_export_maps(ex);
  } catch (const UsageError &err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const DataError &err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const nlohmann::json::exception &err) {
    std::cerr << "data error: " << err.what() << '\n';
    return kData;
  } catch (const NumericalError &err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return kNumerical;
  } catch (const InversionError &err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return kNumerical;
  } catch (const LocusError &err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return kNumerical;
  } catch (const SimulationError &err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return kNumerical;
  } catch (const TrainingDiverged &err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return kNumerical;
  } catch (const std::invalid_argument &err) {
    std::cerr << "error: " << err.what() << '\n';
    return kUsage;
  } catch (const std::exception &err) {
    std::cerr << "numerical failure: " << err.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
