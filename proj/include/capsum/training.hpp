#pragma once

// Self-supervised training of a shared-weight (Siamese) affine projection
// head over frozen sentence embeddings. Both the caption branch and the
// summary branch read the same ProjectionModel.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "capsum/error.hpp"
#include "capsum/format.hpp"
#include "capsum/matrix.hpp"
#include "capsum/scoring.hpp"

namespace capsum {

struct ProjectionModel {
  Matrix weight;  // d x d
  Vector bias;    // d

  /// Identity weight and zero bias, so untrained scores equal the raw
  /// pre-trained similarities.
  static ProjectionModel init(std::size_t d) {
    if (d == 0) throw Error(Errc::DimensionMismatch, "projection dimension must be positive");
    return {Matrix::identity(d), Vector(d, 0.0)};
  }

  std::size_t dim() const noexcept { return bias.size(); }

  Vector project(std::span<const double> x) const { return affine(weight, bias, x); }

  Matrix project_rows(const Matrix& x) const {
    Matrix out(x.rows(), weight.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const auto y = project(x.row(i));
      std::copy(y.begin(), y.end(), out.row(i).begin());
    }
    return out;
  }

  bool operator==(const ProjectionModel&) const = default;
};

struct TrainConfig {
  double learning_rate = 5e-5;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossConfig loss;

  void validate() const {
    // a zero rate is accepted: it runs the loop without moving the model
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw Error(Errc::ConfigError, "learning_rate must be finite and nonnegative");
    if (max_epochs < 1) throw Error(Errc::ConfigError, "max_epochs must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0))
      throw Error(Errc::ConfigError, "invalid Adam moments");
    loss.validate();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double margin_term = 0.0;
  double sparsity_term = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  double mean_score = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainTrace {
  EpochRecord initial;               // before any update (epoch 0)
  std::vector<EpochRecord> epochs;   // after each update, epochs 1..max_epochs
  FrameScores final_scores;

  bool operator==(const TrainTrace&) const = default;
};

struct TrainResult {
  ProjectionModel model;
  TrainTrace trace;
  double sigma1 = 1.0;  // awl noise scalers after training
  double sigma2 = 1.0;
};

/// Thrown when the loss or a parameter stops being finite; carries the
/// trace recorded so far.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, TrainTrace partial)
      : Error(Errc::NonFiniteLoss, what), trace_(std::move(partial)) {}
  const TrainTrace& trace() const noexcept { return trace_; }

 private:
  TrainTrace trace_;
};

/// Loss of the model on one video through the plain forward path.
inline LossBreakdown evaluate_objective(const ProjectionModel& model, const Matrix& embs,
                                        std::span<const double> summary, const LossConfig& cfg,
                                        std::optional<double> diversity, FrameScores* scores_out = nullptr) {
  const Vector t = model.project(summary);
  auto scores = frame_scores(model.project_rows(embs), t);
  auto loss = pdl_loss(scores, cfg, diversity);
  if (scores_out) *scores_out = std::move(scores);
  return loss;
}

struct ObjectiveGradient {
  LossBreakdown loss;
  FrameScores scores;
  Matrix d_weight;
  Vector d_bias;
  double d_sigma1 = 0.0;  // awl mode only
  double d_sigma2 = 0.0;
};

/// Loss and its (sub)gradient with respect to weight, bias and, in awl mode,
/// the two sigmas. Subgradient 0 is used at every |.| and hinge kink.
/// S_avg is differentiated through.
inline ObjectiveGradient objective_and_gradient(const ProjectionModel& model, const Matrix& embs,
                                                std::span<const double> summary, const LossConfig& cfg,
                                                std::optional<double> diversity) {
  const std::size_t n = embs.rows();
  const std::size_t d = model.dim();
  if (embs.cols() != d || summary.size() != d) throw Error(Errc::DimensionMismatch, "embedding dim != model dim");

  const Matrix u = model.project_rows(embs);
  const Vector v = model.project(summary);
  const double nv = norm2(v);
  if (!(nv > 0.0)) throw Error(Errc::ZeroNormVector, "projected summary has zero norm");

  std::vector<double> nu(n), s(n), S(n);
  for (std::size_t i = 0; i < n; ++i) {
    nu[i] = norm2(u.row(i));
    if (!(nu[i] > 0.0)) throw Error(Errc::ZeroNormVector, "projected caption " + std::to_string(i) + " has zero norm");
    s[i] = dot(u.row(i), v) / (nu[i] * nv);
    S[i] = std::fmin(1.0, std::fmax(0.0, 0.5 * (1.0 + s[i])));
  }

  ObjectiveGradient g;
  g.scores = FrameScores(S);
  g.loss = pdl_loss(g.scores, cfg, diversity);
  const double mean = g.scores.mean();
  const double nd = static_cast<double>(n);

  double w_margin = 1.0;
  double w_sparse = g.loss.lambda;
  switch (cfg.mode) {
    case LossMode::margin_only: w_sparse = 0.0; break;
    case LossMode::sparsity_only: w_margin = 0.0; w_sparse = 1.0; break;
    case LossMode::awl:
      w_margin = 1.0 / (2.0 * cfg.sigma1 * cfg.sigma1);
      w_sparse = 1.0 / (2.0 * cfg.sigma2 * cfg.sigma2);
      g.d_sigma1 = -g.loss.margin_term / (cfg.sigma1 * cfg.sigma1 * cfg.sigma1) + 1.0 / cfg.sigma1;
      g.d_sigma2 = -g.loss.sparsity_term / (cfg.sigma2 * cfg.sigma2 * cfg.sigma2) + 1.0 / cfg.sigma2;
      break;
    default: break;
  }

  // dL/dS_j
  auto sign = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
  std::vector<double> act(n);
  double act_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dev = S[i] - mean;
    const bool active = cfg.margin - std::fabs(dev) > 0.0;
    act[i] = active ? sign(dev) : 0.0;
    act_sum += act[i];
  }
  const double sparse_grad = sign(mean - cfg.epsilon) / nd;
  std::vector<double> dS(n);
  for (std::size_t j = 0; j < n; ++j)
    dS[j] = w_margin * (-(act[j] - act_sum / nd) / nd) + w_sparse * sparse_grad;

  // back through S = (1+s)/2 and the cosine into both branches
  g.d_weight = Matrix(d, d);
  g.d_bias.assign(d, 0.0);
  Vector dv(d, 0.0);
  Vector du(d);
  for (std::size_t j = 0; j < n; ++j) {
    const double ds = 0.5 * dS[j];
    if (ds == 0.0) continue;
    const auto uj = u.row(j);
    for (std::size_t k = 0; k < d; ++k) {
      du[k] = ds * (v[k] / (nu[j] * nv) - s[j] * uj[k] / (nu[j] * nu[j]));
      dv[k] += ds * (uj[k] / (nu[j] * nv) - s[j] * v[k] / (nv * nv));
    }
    const auto ej = embs.row(j);
    for (std::size_t r = 0; r < d; ++r) {
      auto wr = g.d_weight.row(r);
      for (std::size_t c = 0; c < d; ++c) wr[c] += du[r] * ej[c];
      g.d_bias[r] += du[r];
    }
  }
  for (std::size_t r = 0; r < d; ++r) {
    auto wr = g.d_weight.row(r);
    for (std::size_t c = 0; c < d; ++c) wr[c] += dv[r] * summary[c];
    g.d_bias[r] += dv[r];
  }
  return g;
}

namespace detail {

inline EpochRecord make_record(std::size_t epoch, const LossBreakdown& l, const FrameScores& s) {
  return {epoch, l.margin_term, l.sparsity_term, l.lambda, l.total, s.mean()};
}

class Adam {
 public:
  Adam(std::size_t n, const TrainConfig& cfg) : m_(n, 0.0), v_(n, 0.0), cfg_(cfg) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / b1t;
      const double vhat = v_[i] / b2t;
      params[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
    }
  }

 private:
  std::vector<double> m_, v_;
  const TrainConfig& cfg_;
  std::size_t t_ = 0;
};

}  // namespace detail

/// Full-batch Adam on one video. `diversity` is computed beforehand from the
/// unprojected caption embeddings and held fixed for the run. In awl mode
/// the sigmas are trained through their logarithms so they stay positive.
inline TrainResult train_video(const Matrix& embs, std::span<const double> summary, const TrainConfig& cfg,
                               std::optional<double> diversity) {
  cfg.validate();
  if (embs.rows() < 2) throw Error(Errc::LengthMismatch, "training needs at least 2 captions");
  const std::size_t d = embs.cols();

  TrainResult res;
  res.model = ProjectionModel::init(d);
  LossConfig loss = cfg.loss;
  const bool awl = loss.mode == LossMode::awl;

  // parameter vector: weight (d*d), bias (d), then log sigma1, log sigma2
  const std::size_t n_params = d * d + d + (awl ? 2 : 0);
  std::vector<double> params(n_params);
  std::vector<double> grad(n_params);
  auto pack = [&] {
    auto w = res.model.weight.values();
    std::copy(w.begin(), w.end(), params.begin());
    std::copy(res.model.bias.begin(), res.model.bias.end(), params.begin() + static_cast<std::ptrdiff_t>(d * d));
    if (awl) {
      params[d * d + d] = std::log(loss.sigma1);
      params[d * d + d + 1] = std::log(loss.sigma2);
    }
  };
  auto unpack = [&] {
    auto w = res.model.weight.values();
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(d * d), w.begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(d * d),
              params.begin() + static_cast<std::ptrdiff_t>(d * d + d), res.model.bias.begin());
    if (awl) {
      loss.sigma1 = std::exp(params[d * d + d]);
      loss.sigma2 = std::exp(params[d * d + d + 1]);
    }
  };
  pack();

  detail::Adam adam(n_params, cfg);
  auto check_finite = [&](const LossBreakdown& l, std::size_t epoch) {
    bool ok = std::isfinite(l.total);
    for (double p : params) ok = ok && std::isfinite(p);
    if (!ok) throw TrainingAborted("non-finite loss or parameter at epoch " + std::to_string(epoch), res.trace);
  };

  ObjectiveGradient g;
  try {
    g = objective_and_gradient(res.model, embs, summary, loss, diversity);
  } catch (const Error& e) {
    if (e.code() == Errc::MissingDiversity || e.code() == Errc::DimensionMismatch) throw;
    throw TrainingAborted(std::string("initial evaluation failed: ") + e.what(), res.trace);
  }
  res.trace.initial = detail::make_record(0, g.loss, g.scores);
  check_finite(g.loss, 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto dw = g.d_weight.values();
    std::copy(dw.begin(), dw.end(), grad.begin());
    std::copy(g.d_bias.begin(), g.d_bias.end(), grad.begin() + static_cast<std::ptrdiff_t>(d * d));
    if (awl) {
      // chain rule through sigma = exp(rho)
      grad[d * d + d] = g.d_sigma1 * loss.sigma1;
      grad[d * d + d + 1] = g.d_sigma2 * loss.sigma2;
    }
    adam.step(params, grad);
    unpack();
    try {
      g = objective_and_gradient(res.model, embs, summary, loss, diversity);
    } catch (const Error& e) {
      throw TrainingAborted("epoch " + std::to_string(epoch) + ": " + e.what(), res.trace);
    }
    check_finite(g.loss, epoch);
    res.trace.epochs.push_back(detail::make_record(epoch, g.loss, g.scores));
  }
  res.trace.final_scores = g.scores;
  res.sigma1 = loss.sigma1;
  res.sigma2 = loss.sigma2;
  return res;
}

/// Largest coordinate-wise relative gap between the analytic gradient and
/// central differences: |ga - gfd| / max(1e-8, |ga| + |gfd|). The point
/// must sit at least 10h away from every hinge and absolute-value kink;
/// otherwise KinkProximity is thrown and the caller should resample.
inline double finite_diff_gradcheck(const ProjectionModel& model, const Matrix& embs, std::span<const double> summary,
                                    const LossConfig& cfg, std::optional<double> diversity, double h = 1e-5) {
  const auto g = objective_and_gradient(model, embs, summary, cfg, diversity);
  const double mean = g.scores.mean();
  for (std::size_t i = 0; i < g.scores.size(); ++i) {
    const double dev = std::fabs(g.scores[i] - mean);
    if (dev <= 10.0 * h || std::fabs(dev - cfg.margin) < 10.0 * h)
      throw Error(Errc::KinkProximity, "frame " + std::to_string(i) + " sits near a kink");
  }
  const bool uses_sparsity = cfg.mode != LossMode::margin_only && g.loss.lambda != 0.0;
  if (uses_sparsity && std::fabs(mean - cfg.epsilon) <= 10.0 * h)
    throw Error(Errc::KinkProximity, "mean score sits near epsilon");

  double worst = 0.0;
  auto compare = [&](double analytic, double numeric) {
    const double rel = std::fabs(analytic - numeric) / std::fmax(1e-8, std::fabs(analytic) + std::fabs(numeric));
    worst = std::fmax(worst, rel);
  };
  auto eval = [&](const ProjectionModel& m, const LossConfig& c) {
    return evaluate_objective(m, embs, summary, c, diversity).total;
  };

  ProjectionModel probe = model;
  const std::size_t d = model.dim();
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double keep = probe.weight(r, c);
      probe.weight(r, c) = keep + h;
      const double up = eval(probe, cfg);
      probe.weight(r, c) = keep - h;
      const double down = eval(probe, cfg);
      probe.weight(r, c) = keep;
      compare(g.d_weight(r, c), (up - down) / (2.0 * h));
    }
  }
  for (std::size_t r = 0; r < d; ++r) {
    const double keep = probe.bias[r];
    probe.bias[r] = keep + h;
    const double up = eval(probe, cfg);
    probe.bias[r] = keep - h;
    const double down = eval(probe, cfg);
    probe.bias[r] = keep;
    compare(g.d_bias[r], (up - down) / (2.0 * h));
  }
  if (cfg.mode == LossMode::awl) {
    LossConfig c = cfg;
    c.sigma1 = cfg.sigma1 + h;
    double up = eval(model, c);
    c.sigma1 = cfg.sigma1 - h;
    double down = eval(model, c);
    compare(g.d_sigma1, (up - down) / (2.0 * h));
    c = cfg;
    c.sigma2 = cfg.sigma2 + h;
    up = eval(model, c);
    c.sigma2 = cfg.sigma2 - h;
    down = eval(model, c);
    compare(g.d_sigma2, (up - down) / (2.0 * h));
  }
  return worst;
}

/// Tab-separated trace: epoch, L_m, L_s, lambda, total, mean_S. Row 0 is
/// the untrained model.
inline void write_trace_table(std::ostream& out, const TrainTrace& trace) {
  out << "epoch\tL_m\tL_s\tlambda\ttotal\tmean_S\n";
  auto row = [&](const EpochRecord& r) {
    out << r.epoch << '\t' << format_double(r.margin_term) << '\t' << format_double(r.sparsity_term) << '\t'
        << format_double(r.lambda) << '\t' << format_double(r.total) << '\t' << format_double(r.mean_score) << '\n';
  };
  row(trace.initial);
  for (const auto& r : trace.epochs) row(r);
}

}  // namespace capsum
