// Fitting magnetic models to grid datasets: sample containers, mean-squared
// losses with analytic parameter gradients, Adam with decoupled weight decay,
// subsampling and error statistics.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gradmag/core.hpp"
#include "gradmag/gradnet.hpp"
#include "gradmag/magnetics.hpp"

namespace gradmag {

struct Sample {
  Vec2 psi;
  Vec2 i;
  double theta_m = 0.0;
  double tau = 0.0;
};

// Which coordinates span the grid: currents, flux linkages, or currents and
// rotor angle.
enum class DatasetKind { CurrentGrid, FluxGrid, HarmonicGrid };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::CurrentGrid: return "current-grid";
    case DatasetKind::FluxGrid: return "flux-grid";
    case DatasetKind::HarmonicGrid: return "harmonic-grid";
  }
  return "unknown";
}

inline std::optional<DatasetKind> parse_dataset_kind(std::string_view s) {
  for (auto k : {DatasetKind::CurrentGrid, DatasetKind::FluxGrid, DatasetKind::HarmonicGrid}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct SampleGrid {
  DatasetKind kind = DatasetKind::CurrentGrid;
  std::vector<Sample> samples;
  // Grid shape in storage order (fastest index last); empty or product equal
  // to the sample count.
  std::vector<int> dims;
  bool has_theta = false;
  bool has_torque = false;
  // Normalizers: largest flux-linkage and current magnitude and largest
  // absolute torque in the set.
  double psi_max = 0.0;
  double i_max = 0.0;
  double tau_max = 0.0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  void refresh_normalizers() {
    psi_max = i_max = tau_max = 0.0;
    for (const Sample &s : samples) {
      psi_max = std::max(psi_max, norm(s.psi));
      i_max = std::max(i_max, norm(s.i));
      tau_max = std::max(tau_max, std::abs(s.tau));
    }
  }

  void validate() const {
    if (!dims.empty()) {
      std::size_t prod = 1;
      for (int d : dims) {
        if (d < 1) throw std::invalid_argument("sample grid: dimensions must be positive");
        prod *= std::size_t(d);
      }
      if (prod != samples.size()) {
        throw std::invalid_argument("sample grid: dimensions give " + std::to_string(prod) +
                                    " points but the grid holds " +
                                    std::to_string(samples.size()));
      }
    }
    for (std::size_t n = 0; n < samples.size(); ++n) {
      const Sample &s = samples[n];
      if (!is_finite(s.psi) || !is_finite(s.i) || !std::isfinite(s.theta_m) ||
          !std::isfinite(s.tau)) {
        throw std::invalid_argument("sample grid: non-finite value in sample " + std::to_string(n));
      }
    }
    if (!samples.empty() && !(psi_max > 0.0)) {
      throw std::invalid_argument("sample grid: psi_max must be positive");
    }
    if (has_torque && !(tau_max > 0.0)) {
      throw std::invalid_argument("sample grid: tau_max must be positive when torque is present");
    }
  }

  SampleGrid subset(const std::vector<std::size_t> &indices) const {
    SampleGrid g;
    g.kind = kind;
    g.has_theta = has_theta;
    g.has_torque = has_torque;
    g.samples.reserve(indices.size());
    for (std::size_t k : indices) g.samples.push_back(samples.at(k));
    g.dims = {int(indices.size())};
    g.refresh_normalizers();
    return g;
  }
};

// Primal argument and target of a sample for a given model.
inline Vec2 model_input(const MagneticModel &m, const Sample &s) {
  return m.provides_current_map() ? s.psi : s.i;
}
inline Vec2 model_target(const MagneticModel &m, const Sample &s) {
  return m.provides_current_map() ? s.i : s.psi;
}

inline void check_compatible(const MagneticModel &m, const SampleGrid &grid) {
  if (grid.empty()) throw std::invalid_argument("training: empty sample grid");
  if (m.harmonic() && !grid.has_theta) {
    throw std::invalid_argument("training: harmonic variant '" + std::string(to_string(m.variant())) +
                                "' needs rotor angles in the dataset");
  }
}

// ---------------------------------------------------------------------------
// Losses

struct LossValue {
  double value = 0.0;
  ParamGrad grad;
};

namespace detail {

// Mean over the listed samples of |primal - target|^2 / primal_scale^2
// (+ (tau - tau_hat)^2 / tau_scale^2 when tau_scale > 0), optionally with its
// parameter gradient.
inline double mse(const MagneticModel &m, const SampleGrid &grid,
                  const std::vector<std::size_t> *indices, double primal_scale, double tau_scale,
                  ParamGrad *grad) {
  const std::size_t count = indices ? indices->size() : grid.size();
  if (count == 0) throw std::invalid_argument("loss: empty batch");
  const double wp = 1.0 / (primal_scale * primal_scale);
  const double wt = tau_scale > 0.0 ? 1.0 / (tau_scale * tau_scale) : 0.0;
  const double inv_l = 1.0 / double(count);
  double sum = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    const Sample &s = grid.samples[indices ? (*indices)[n] : n];
    const Vec2 x = model_input(m, s);
    const MagneticOutput out = m.primal_map(x, s.theta_m);
    const Vec2 e = out.primal - model_target(m, s);
    const double et = out.torque - s.tau;
    sum += wp * dot(e, e) + wt * et * et;
    if (grad) {
      m.accumulate_output_grad(x, s.theta_m, (2.0 * wp * inv_l) * e, 2.0 * wt * inv_l * et, *grad);
    }
  }
  return sum * inv_l;
}

}  // namespace detail

// (1/L) sum |i - i_hat|^2 for current maps.
inline double loss_current(const MagneticModel &m, const SampleGrid &batch) {
  if (!m.provides_current_map()) throw std::invalid_argument("loss_current: not a current map");
  return detail::mse(m, batch, nullptr, 1.0, 0.0, nullptr);
}

// (1/L) sum |psi - psi_hat|^2 for flux-linkage maps.
inline double loss_flux(const MagneticModel &m, const SampleGrid &batch) {
  if (!m.provides_flux_map()) throw std::invalid_argument("loss_flux: not a flux-linkage map");
  return detail::mse(m, batch, nullptr, 1.0, 0.0, nullptr);
}

// (1/L) sum [|y - y_hat|^2 / y_max^2 + (tau - tau_hat)^2 / tau_max^2] where y
// is the flux linkage (co-energy models, y_max = psi_max) or the current
// (energy-based models, y_max = i_max).
inline double loss_combined(const MagneticModel &m, const SampleGrid &batch) {
  if (!batch.has_torque) throw std::invalid_argument("loss_combined: dataset has no torque labels");
  if (m.linear_baseline()) throw std::invalid_argument("loss_combined: needs a network model");
  const double scale = m.provides_current_map() ? batch.i_max : batch.psi_max;
  return detail::mse(m, batch, nullptr, scale, batch.tau_max, nullptr);
}

enum class LossKind { PrimalMse, Combined };

// Torque-supervised loss for harmonic models, plain MSE otherwise.
inline LossKind default_loss(const MagneticModel &m, const SampleGrid &grid) {
  return m.harmonic() && grid.has_torque ? LossKind::Combined : LossKind::PrimalMse;
}

// Loss and parameter gradient over a batch of sample indices (all samples
// when indices is null). Normalizers come from `norms` so that mini-batches
// share the scaling of the full training set.
inline LossValue loss_and_grad(const MagneticModel &m, const SampleGrid &grid, LossKind kind,
                               const std::vector<std::size_t> *indices = nullptr,
                               const SampleGrid *norms = nullptr) {
  if (m.linear_baseline()) throw std::invalid_argument("loss_and_grad: needs a network model");
  const SampleGrid &nz = norms ? *norms : grid;
  LossValue out{0.0, ParamGrad::zeros(m.net().input_dim(), m.net().hidden())};
  if (kind == LossKind::Combined) {
    if (!grid.has_torque) throw std::invalid_argument("loss_combined: dataset has no torque labels");
    const double scale = m.provides_current_map() ? nz.i_max : nz.psi_max;
    out.value = detail::mse(m, grid, indices, scale, nz.tau_max, &out.grad);
  } else {
    out.value = detail::mse(m, grid, indices, 1.0, 0.0, &out.grad);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error statistics

struct ErrorStats {
  double e_rms = 0.0;
  double e_max = 0.0;
  double e_std = 0.0;
  std::size_t count = 0;
};

// Statistics of non-negative error magnitudes: rms, maximum and population
// standard deviation.
inline ErrorStats error_stats(const std::vector<double> &errors) {
  if (errors.empty()) throw std::invalid_argument("error_stats: no samples");
  ErrorStats st;
  st.count = errors.size();
  double sq = 0.0, sum = 0.0;
  for (double e : errors) {
    sq += e * e;
    sum += e;
    st.e_max = std::max(st.e_max, e);
  }
  const double l = double(errors.size());
  st.e_rms = std::sqrt(sq / l);
  const double mean = sum / l;
  double var = 0.0;
  for (double e : errors) var += (e - mean) * (e - mean);
  st.e_std = std::sqrt(var / l);
  return st;
}

struct ErrorReport {
  // "current" or "flux", whichever the model predicts.
  std::string primal_name;
  ErrorStats primal;
  std::optional<ErrorStats> torque;
};

inline ErrorReport evaluate(const MagneticModel &m, const SampleGrid &grid) {
  if (grid.empty()) throw std::invalid_argument("evaluate: empty sample grid");
  check_compatible(m, grid);
  std::vector<double> ep, et;
  ep.reserve(grid.size());
  for (const Sample &s : grid.samples) {
    const MagneticOutput out = m.primal_map(model_input(m, s), s.theta_m);
    ep.push_back(norm(out.primal - model_target(m, s)));
    if (grid.has_torque) et.push_back(std::abs(out.torque - s.tau));
  }
  ErrorReport r;
  r.primal_name = m.provides_current_map() ? "current" : "flux";
  r.primal = error_stats(ep);
  if (grid.has_torque) r.torque = error_stats(et);
  return r;
}

// ---------------------------------------------------------------------------
// Subsampling and normalization

// Every stride-th sample in storage order goes to the training set, the rest
// to the holdout set.
inline std::pair<SampleGrid, SampleGrid> subsample(const SampleGrid &grid, int stride) {
  if (stride < 1) throw std::invalid_argument("subsample: stride must be >= 1");
  std::vector<std::size_t> train, hold;
  for (std::size_t n = 0; n < grid.size(); ++n) (n % std::size_t(stride) == 0 ? train : hold).push_back(n);
  if (train.empty()) throw std::invalid_argument("subsample: empty training set");
  return {grid.subset(train), grid.subset(hold)};
}

// Input normalization mapping the primal arguments of the grid onto [-1, 1]
// per axis, with an output gain chosen so that an identity-like network
// reproduces the average secant slope of the data. Harmonic feature inputs
// are already in [-1, 1] and stay unscaled.
inline Normalization fit_normalization(Variant variant, const SampleGrid &grid) {
  if (grid.empty()) throw std::invalid_argument("fit_normalization: empty sample grid");
  const bool current_map = is_energy_based(variant);
  Vec2 lo_x{INFINITY, INFINITY}, hi_x{-INFINITY, -INFINITY};
  Vec2 lo_y = lo_x, hi_y = hi_x;
  for (const Sample &s : grid.samples) {
    const Vec2 x = current_map ? s.psi : s.i, y = current_map ? s.i : s.psi;
    lo_x = {std::min(lo_x.d, x.d), std::min(lo_x.q, x.q)};
    hi_x = {std::max(hi_x.d, x.d), std::max(hi_x.q, x.q)};
    lo_y = {std::min(lo_y.d, y.d), std::min(lo_y.q, y.q)};
    hi_y = {std::max(hi_y.d, y.d), std::max(hi_y.q, y.q)};
  }
  const int d = input_dim_for(variant);
  Normalization n = Normalization::identity(d);
  const double span_x[2] = {hi_x.d - lo_x.d, hi_x.q - lo_x.q};
  const double mid_x[2] = {0.5 * (hi_x.d + lo_x.d), 0.5 * (hi_x.q + lo_x.q)};
  const double span_y[2] = {hi_y.d - lo_y.d, hi_y.q - lo_y.q};
  double slope = 1.0;
  for (int j = 0; j < 2; ++j) {
    const double sx = span_x[j] > 0.0 ? span_x[j] : 1.0;
    n.in_scale[j] = 2.0 / sx;
    // Symmetric variants keep q = 0 at the network's q = 0.
    n.in_offset[j] = (is_symmetric(variant) && j == 1) ? 0.0 : -n.in_scale[j] * mid_x[j];
    // Per axis c S^2 should match span_y / span_x, i.e. c = span_y span_x / 4.
    const double sy = span_y[j] > 0.0 ? span_y[j] : sx;
    slope *= sy * sx / 4.0;
  }
  n.out_gain = std::sqrt(slope);
  return n;
}

// Fresh network model with normalization fitted to the grid.
inline MagneticModel make_model(Variant variant, int hidden, ActivationKind act, std::uint64_t seed,
                                const SampleGrid &grid, int k = MagneticModel::kDefaultHarmonicOrder,
                                double mu_floor = GradientNetwork::kDefaultMuFloor) {
  MagneticModel m = MagneticModel::create(variant, hidden, act, seed, k, mu_floor);
  m.set_normalization(fit_normalization(variant, grid));
  return m;
}

// ---------------------------------------------------------------------------
// Optimizer and fitting loop

// Adam with decoupled weight decay, applied to a flat parameter vector.
class AdamW {
 public:
  AdamW(Eigen::Index size, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps),
        m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {
    if (!(lr > 0.0)) throw std::invalid_argument("AdamW: learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("AdamW: weight decay must be >= 0");
  }

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

  void step(Eigen::VectorXd &params, const Eigen::VectorXd &grad) {
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    params *= 1.0 - lr_ * wd_;
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  double learning_rate = 1e-2;
  // Learning rate at the last epoch as a fraction of the initial one; the
  // rate decays along a half cosine. 1 keeps it constant.
  double final_lr_fraction = 0.01;
  double weight_decay = 1e-4;
  int epochs = 50000;
  // 0 trains on the full batch.
  int batch_size = 0;
  std::uint64_t seed = 0;
  int subsample_stride = 1;
  // Holdout error is recorded every this many epochs (and at the last one).
  int holdout_every = 100;
  // Loss to minimize; by default torque-supervised for harmonic models.
  std::optional<LossKind> loss;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
      throw std::invalid_argument("train config: final_lr_fraction must be in (0, 1]");
    }
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train config: weight_decay must be >= 0");
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (batch_size < 0) throw std::invalid_argument("train config: batch_size must be >= 0");
    if (subsample_stride < 1) throw std::invalid_argument("train config: subsample_stride must be >= 1");
    if (holdout_every < 1) throw std::invalid_argument("train config: holdout_every must be >= 1");
  }
};


struct TraceEntry {
  int epoch = 0;
  double loss = 0.0;
  // NaN on epochs without a holdout evaluation.
  double e_rms_holdout = NAN;
};

struct FitResult {
  MagneticModel model;
  std::vector<TraceEntry> trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, double loss)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                           " (loss = " + std::to_string(loss) + ")"),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Trains the model's network parameters on `train`. The trace records the
// full-batch training loss before each update and, periodically, the rms
// primal error on `holdout`. Deterministic for a given config.
inline FitResult fit(MagneticModel model, const SampleGrid &train, const TrainConfig &config,
                     const SampleGrid *holdout = nullptr) {
  config.validate();
  if (model.linear_baseline()) throw std::invalid_argument("fit: the linear baseline is not trained");
  check_compatible(model, train);
  const LossKind kind = config.loss.value_or(default_loss(model, train));

  FitResult res;
  GradientNetwork &net = model.net();
  Eigen::VectorXd params = net.pack();
  AdamW opt(params.size(), config.learning_rate, config.weight_decay);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  const bool full = config.batch_size == 0 || std::size_t(config.batch_size) >= train.size();

  const auto holdout_rms = [&](const MagneticModel &m) {
    return holdout && !holdout->empty() ? evaluate(m, *holdout).primal.e_rms : NAN;
  };
  const auto check_structure = [&](int epoch) {
    if (!(net.a0_diag().array() >= 0.0).all() || !(net.activation().beta > 0.0)) {
      throw std::logic_error("fit: structural invariant violated at epoch " +
                             std::to_string(epoch));
    }
  };

  res.initial_loss = res.final_loss = loss_and_grad(model, train, kind).value;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.final_lr_fraction < 1.0 && config.epochs > 1) {
      const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / (config.epochs - 1)));
      opt.set_learning_rate(config.learning_rate *
                            (config.final_lr_fraction + (1.0 - config.final_lr_fraction) * c));
    }
    double epoch_loss = 0.0;
    if (full) {
      const LossValue lv = loss_and_grad(model, train, kind);
      epoch_loss = lv.value;
      if (!std::isfinite(epoch_loss)) throw TrainingDiverged(epoch, epoch_loss);
      opt.step(params, net.flatten(lv.grad));
      net.unpack(params);
    } else {
      std::shuffle(order.begin(), order.end(), rng);
      double weighted = 0.0;
      for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch_size)) {
        const std::size_t stop = std::min(order.size(), start + std::size_t(config.batch_size));
        const std::vector<std::size_t> batch(order.begin() + long(start), order.begin() + long(stop));
        const LossValue lv = loss_and_grad(model, train, kind, &batch, &train);
        if (!std::isfinite(lv.value)) throw TrainingDiverged(epoch, lv.value);
        weighted += lv.value * double(batch.size());
        opt.step(params, net.flatten(lv.grad));
        net.unpack(params);
      }
      epoch_loss = weighted / double(order.size());
    }
    check_structure(epoch);
    TraceEntry e{epoch, epoch_loss, NAN};
    if ((epoch + 1) % config.holdout_every == 0 || epoch + 1 == config.epochs) {
      e.e_rms_holdout = holdout_rms(model);
    }
    res.trace.push_back(e);
  }
  res.final_loss = loss_and_grad(model, train, kind).value;
  if (!std::isfinite(res.final_loss)) throw TrainingDiverged(config.epochs, res.final_loss);
  res.model = std::move(model);
  return res;
}

}  // namespace gradmag
