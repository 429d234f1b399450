#ifndef SHAPEGRASP_MULTIHEAD_HPP
#define SHAPEGRASP_MULTIHEAD_HPP

#include "shapegrasp/common.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace shapegrasp {

template <typename Scalar>
using Joints = Eigen::Matrix<Scalar, 12, 1>;
/// Translation (3) followed by a rotation vector (3).
template <typename Scalar>
using PoseDelta = Eigen::Matrix<Scalar, 6, 1>;

template <typename Scalar>
struct HeadOutput {
  Joints<Scalar> q = Joints<Scalar>::Zero();
  PoseDelta<Scalar> dh = PoseDelta<Scalar>::Zero();
  Scalar s = 0;
  Scalar logit = 0;
};

template <typename Scalar>
using MultiHeadPrediction = std::vector<HeadOutput<Scalar>>;

template <typename Scalar>
struct GroundTruthGrasp {
  Joints<Scalar> q = Joints<Scalar>::Zero();
  PoseDelta<Scalar> dh = PoseDelta<Scalar>::Zero();
  Scalar s = 0;
};

enum class VectorLoss { L2, L1 };       // unsquared Euclidean, or sum of |.|
enum class ScalarLoss { L1, Squared };

template <typename Scalar>
struct LossWeights {
  Scalar joint = 1, quality = 1, pose = 1, cls = 1;
  VectorLoss pose_loss = VectorLoss::L2;
  ScalarLoss quality_loss = ScalarLoss::L1;
};

template <typename Scalar>
struct LossBreakdown {
  std::size_t winner = 0;
  Scalar joint = 0, quality = 0, pose = 0, cls = 0, total = 0;
  LossWeights<Scalar> weights;
};

template <typename Scalar>
struct HeadGradient {
  Joints<Scalar> q = Joints<Scalar>::Zero();
  PoseDelta<Scalar> dh = PoseDelta<Scalar>::Zero();
  Scalar s = 0;
  Scalar logit = 0;
};

template <typename Scalar>
void require_heads(const MultiHeadPrediction<Scalar>& pred) {
  if (pred.empty())
    throw Error(ErrorKind::InvalidArgument, "prediction needs at least one head");
}

/// argmin_k |q_hat - q_k|, ties to the lowest index.
template <typename Scalar>
std::size_t select_winner(const MultiHeadPrediction<Scalar>& pred,
                          const Joints<Scalar>& q_hat) {
  require_heads(pred);
  std::size_t best = 0;
  Scalar best_d = (q_hat - pred[0].q).squaredNorm();
  for (std::size_t k = 1; k < pred.size(); ++k) {
    const Scalar d = (q_hat - pred[k].q).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

/// Head of maximal logit, ties to the lowest index.
template <typename Scalar>
std::size_t select_inference_index(const MultiHeadPrediction<Scalar>& pred) {
  require_heads(pred);
  std::size_t best = 0;
  for (std::size_t k = 1; k < pred.size(); ++k)
    if (pred[k].logit > pred[best].logit) best = k;
  return best;
}

template <typename Scalar>
const HeadOutput<Scalar>& select_inference(const MultiHeadPrediction<Scalar>& pred) {
  return pred[select_inference_index(pred)];
}

template <typename Scalar>
std::vector<Scalar> head_probabilities(const MultiHeadPrediction<Scalar>& pred) {
  require_heads(pred);
  Scalar m = pred[0].logit;
  for (const auto& h : pred) m = std::max(m, h.logit);
  std::vector<Scalar> c(pred.size());
  Scalar z = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    c[k] = std::exp(pred[k].logit - m);
    z += c[k];
  }
  for (auto& v : c) v /= z;
  return c;
}

/// -log softmax(l)_j, computed stably.
template <typename Scalar>
Scalar class_loss(const MultiHeadPrediction<Scalar>& pred, std::size_t j) {
  Scalar m = pred[0].logit;
  for (const auto& h : pred) m = std::max(m, h.logit);
  Scalar z = 0;
  for (const auto& h : pred) z += std::exp(h.logit - m);
  return std::log(z) + m - pred[j].logit;
}

namespace detail {

template <typename Derived>
bool finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <typename Scalar, int N>
Scalar vector_loss(const Eigen::Matrix<Scalar, N, 1>& diff, VectorLoss kind) {
  return kind == VectorLoss::L2 ? diff.norm() : diff.cwiseAbs().sum();
}

// Zero subgradient at the kinks.
template <typename Scalar, int N>
Eigen::Matrix<Scalar, N, 1> vector_loss_grad(
    const Eigen::Matrix<Scalar, N, 1>& diff, VectorLoss kind) {
  if (kind == VectorLoss::L1)
    return diff.unaryExpr([](Scalar x) {
      return x > 0 ? Scalar(1) : (x < 0 ? Scalar(-1) : Scalar(0));
    });
  const Scalar n = diff.norm();
  if (n == 0) return Eigen::Matrix<Scalar, N, 1>::Zero();
  return diff / n;
}

template <typename Scalar>
Scalar scalar_loss(Scalar diff, ScalarLoss kind) {
  return kind == ScalarLoss::L1 ? std::abs(diff) : diff * diff;
}

template <typename Scalar>
Scalar scalar_loss_grad(Scalar diff, ScalarLoss kind) {
  if (kind == ScalarLoss::Squared) return 2 * diff;
  return diff > 0 ? Scalar(1) : (diff < 0 ? Scalar(-1) : Scalar(0));
}

}  // namespace detail

template <typename Scalar>
void require_finite(const MultiHeadPrediction<Scalar>& pred,
                    const GroundTruthGrasp<Scalar>& gt) {
  bool ok = detail::finite(gt.q) && detail::finite(gt.dh) && std::isfinite(gt.s);
  for (const auto& h : pred)
    ok = ok && detail::finite(h.q) && detail::finite(h.dh) &&
         std::isfinite(h.s) && std::isfinite(h.logit);
  if (!ok) throw Error(ErrorKind::NonFinite, "non-finite loss input");
}

/// Winner-take-all loss: regression terms on the winner only plus the
/// softmax classification term for the winner's index.
template <typename Scalar>
LossBreakdown<Scalar> compute_losses(const MultiHeadPrediction<Scalar>& pred,
                                     const GroundTruthGrasp<Scalar>& gt,
                                     const LossWeights<Scalar>& w = {}) {
  require_heads(pred);
  require_finite(pred, gt);
  LossBreakdown<Scalar> out;
  out.weights = w;
  out.winner = select_winner(pred, gt.q);
  const auto& head = pred[out.winner];
  out.joint = (gt.q - head.q).norm();
  out.quality = detail::scalar_loss<Scalar>(head.s - gt.s, w.quality_loss);
  out.pose = detail::vector_loss<Scalar, 6>(head.dh - gt.dh, w.pose_loss);
  out.cls = class_loss(pred, out.winner);
  out.total = w.joint * out.joint + w.quality * out.quality + w.pose * out.pose +
              w.cls * out.cls;
  return out;
}

/// d total / d head parameters. Non-winners get only the logit term
/// c_k - [k == winner].
template <typename Scalar>
std::vector<HeadGradient<Scalar>> loss_gradients(
    const MultiHeadPrediction<Scalar>& pred, const GroundTruthGrasp<Scalar>& gt,
    const LossWeights<Scalar>& w = {}) {
  require_heads(pred);
  require_finite(pred, gt);
  const std::size_t j = select_winner(pred, gt.q);
  const auto c = head_probabilities(pred);
  std::vector<HeadGradient<Scalar>> grads(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k)
    grads[k].logit = w.cls * (c[k] - (k == j ? Scalar(1) : Scalar(0)));
  const auto& head = pred[j];
  grads[j].q = w.joint *
               detail::vector_loss_grad<Scalar, 12>(head.q - gt.q, VectorLoss::L2);
  grads[j].dh = w.pose * detail::vector_loss_grad<Scalar, 6>(head.dh - gt.dh,
                                                             w.pose_loss);
  grads[j].s = w.quality * detail::scalar_loss_grad<Scalar>(head.s - gt.s,
                                                            w.quality_loss);
  return grads;
}

template <typename Scalar>
struct FitOptions {
  LossWeights<Scalar> weights;
  /// Abort when the mean loss exceeds this multiple of its initial value.
  Scalar divergence_factor = 10;
};

template <typename Scalar>
struct FitResult {
  MultiHeadPrediction<Scalar> heads;
  std::vector<Scalar> history;  // mean loss before each step and at the end
};

template <typename Scalar>
Scalar mean_loss(const MultiHeadPrediction<Scalar>& heads,
                 std::span<const GroundTruthGrasp<Scalar>> samples,
                 const LossWeights<Scalar>& w) {
  Scalar sum = 0;
  for (const auto& gt : samples) sum += compute_losses(heads, gt, w).total;
  return sum / static_cast<Scalar>(samples.size());
}

/// Gradient descent on the mean loss with the head parameters as free
/// variables. Heads start at the data mean plus Gaussian noise of the
/// per-dimension data spread; logits start at 0. The step size decays
/// linearly to zero over `steps`.
template <typename Scalar>
FitResult<Scalar> fit_modes(std::span<const GroundTruthGrasp<Scalar>> samples,
                            std::size_t n_heads, std::size_t steps,
                            Scalar step_size, std::uint64_t seed,
                            const FitOptions<Scalar>& options = {}) {
  if (samples.empty())
    throw Error(ErrorKind::InvalidArgument, "need at least one sample");
  if (n_heads < 1) throw Error(ErrorKind::InvalidArgument, "need at least one head");
  if (!(step_size > 0))
    throw Error(ErrorKind::InvalidArgument, "step size must be positive");
  const auto count = static_cast<Scalar>(samples.size());

  Joints<Scalar> q_mean = Joints<Scalar>::Zero(), q_sq = Joints<Scalar>::Zero();
  PoseDelta<Scalar> dh_mean = PoseDelta<Scalar>::Zero(),
                    dh_sq = PoseDelta<Scalar>::Zero();
  Scalar s_mean = 0, s_sq = 0;
  for (const auto& gt : samples) {
    q_mean += gt.q;
    q_sq += gt.q.cwiseProduct(gt.q);
    dh_mean += gt.dh;
    dh_sq += gt.dh.cwiseProduct(gt.dh);
    s_mean += gt.s;
    s_sq += gt.s * gt.s;
  }
  q_mean /= count;
  dh_mean /= count;
  s_mean /= count;
  const Joints<Scalar> q_std =
      (q_sq / count - q_mean.cwiseProduct(q_mean)).cwiseMax(Scalar(0)).cwiseSqrt();
  const PoseDelta<Scalar> dh_std =
      (dh_sq / count - dh_mean.cwiseProduct(dh_mean)).cwiseMax(Scalar(0)).cwiseSqrt();
  const Scalar s_std = std::sqrt(std::max(Scalar(0), s_sq / count - s_mean * s_mean));

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  FitResult<Scalar> result;
  result.heads.resize(n_heads);
  for (auto& h : result.heads) {
    for (int i = 0; i < 12; ++i) h.q[i] = q_mean[i] + q_std[i] * Scalar(gauss(rng));
    for (int i = 0; i < 6; ++i) h.dh[i] = dh_mean[i] + dh_std[i] * Scalar(gauss(rng));
    h.s = s_mean + s_std * Scalar(gauss(rng));
    h.logit = 0;
  }

  const auto& w = options.weights;
  const Scalar initial = mean_loss(result.heads, samples, w);
  result.history.push_back(initial);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<HeadGradient<Scalar>> total(n_heads);
    for (const auto& gt : samples) {
      const auto g = loss_gradients(result.heads, gt, w);
      for (std::size_t k = 0; k < n_heads; ++k) {
        total[k].q += g[k].q;
        total[k].dh += g[k].dh;
        total[k].s += g[k].s;
        total[k].logit += g[k].logit;
      }
    }
    const Scalar lr = step_size * (Scalar(1) - static_cast<Scalar>(t) /
                                                   static_cast<Scalar>(steps));
    for (std::size_t k = 0; k < n_heads; ++k) {
      auto& h = result.heads[k];
      h.q -= lr / count * total[k].q;
      h.dh -= lr / count * total[k].dh;
      h.s -= lr / count * total[k].s;
      h.logit -= lr / count * total[k].logit;
    }
    const Scalar loss = mean_loss(result.heads, samples, w);
    result.history.push_back(loss);
    if (!std::isfinite(loss) || loss > options.divergence_factor * initial)
      throw Error(ErrorKind::Divergence,
                  "fit diverged at step " + std::to_string(t + 1) + ": loss " +
                      std::to_string(static_cast<double>(loss)) + " vs initial " +
                      std::to_string(static_cast<double>(initial)));
  }
  return result;
}

// Double-precision I/O.

std::string prediction_to_json(const MultiHeadPrediction<double>& pred);
MultiHeadPrediction<double> prediction_from_json(const std::string& text);
std::string labels_to_json(std::span<const GroundTruthGrasp<double>> labels);
std::vector<GroundTruthGrasp<double>> labels_from_json(const std::string& text);
std::string loss_history_csv(std::span<const double> history);

}  // namespace shapegrasp

#endif  // SHAPEGRASP_MULTIHEAD_HPP
