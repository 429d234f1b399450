#include "support.hpp"

#include "shapegrasp/multihead.hpp"

#include <doctest.h>

using namespace shapegrasp;

namespace {

using Head = HeadOutput<double>;
using Pred = MultiHeadPrediction<double>;
using Gt = GroundTruthGrasp<double>;

Pred random_prediction(Rng& rng, std::size_t n) {
  std::normal_distribution<double> g;
  Pred p(n);
  for (auto& h : p) {
    for (int i = 0; i < 12; ++i) h.q[i] = g(rng);
    for (int i = 0; i < 6; ++i) h.dh[i] = g(rng);
    h.s = g(rng);
    h.logit = g(rng);
  }
  return p;
}

Gt random_truth(Rng& rng) {
  std::normal_distribution<double> g;
  Gt t;
  for (int i = 0; i < 12; ++i) t.q[i] = g(rng);
  for (int i = 0; i < 6; ++i) t.dh[i] = g(rng);
  t.s = g(rng);
  return t;
}

// Flat view of every head parameter: q, dh, s, logit per head.
double& param(Pred& p, std::size_t i) {
  Head& h = p[i / 20];
  const std::size_t r = i % 20;
  if (r < 12) return h.q[static_cast<int>(r)];
  if (r < 18) return h.dh[static_cast<int>(r - 12)];
  return r == 18 ? h.s : h.logit;
}

double grad_entry(const std::vector<HeadGradient<double>>& g, std::size_t i) {
  const auto& h = g[i / 20];
  const std::size_t r = i % 20;
  if (r < 12) return h.q[static_cast<int>(r)];
  if (r < 18) return h.dh[static_cast<int>(r - 12)];
  return r == 18 ? h.s : h.logit;
}

struct TwoModes {
  std::vector<Gt> data;
  Joints<double> qa, qb;
};

TwoModes two_modes() {
  TwoModes m;
  m.qa = Joints<double>::Constant(0.2);
  m.qb = Joints<double>::Constant(0.2);
  m.qb.segment<6>(0).setConstant(1.0);
  for (int i = 0; i < 100; ++i) {
    const bool a = i % 10 < 7;
    Gt gt;
    gt.q = a ? m.qa : m.qb;
    gt.dh[0] = a ? 0.05 : -0.05;
    gt.s = a ? 0.3 : 0.1;
    m.data.push_back(gt);
  }
  return m;
}

}  // namespace

TEST_SUITE("multihead") {

TEST_CASE("gradients match central finite differences") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const LossWeights<double> defaults;
  LossWeights<double> other;
  other.pose_loss = VectorLoss::L1;
  other.quality_loss = ScalarLoss::Squared;
  for (int trial = 0; trial < 100; ++trial) {
    LossWeights<double> w = trial % 2 ? other : defaults;
    w.joint = u(rng);
    w.quality = u(rng);
    w.pose = u(rng);
    w.cls = u(rng);
    Pred p = random_prediction(rng, 5);
    const Gt gt = random_truth(rng);
    const auto g = loss_gradients(p, gt, w);
    const double h = 1e-6;
    double err = 0, norm = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      double& x = param(p, i);
      const double keep = x;
      x = keep + h;
      const double up = compute_losses(p, gt, w).total;
      x = keep - h;
      const double down = compute_losses(p, gt, w).total;
      x = keep;
      const double fd = (up - down) / (2 * h);
      err += (fd - grad_entry(g, i)) * (fd - grad_entry(g, i));
      norm += grad_entry(g, i) * grad_entry(g, i);
    }
    CHECK(std::sqrt(err / norm) <= 1e-4);
  }
}

TEST_CASE("uniform logits give ln N") {
  Rng rng(2);
  for (std::size_t n : {1, 2, 5, 9}) {
    Pred p = random_prediction(rng, n);
    for (auto& h : p) h.logit = 0.37;
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(class_loss(p, j) - std::log(double(n))) < 1e-12);
    for (double c : head_probabilities(p)) CHECK(c == doctest::Approx(1.0 / double(n)));
  }
  Pred p = random_prediction(rng, 5);
  for (auto& h : p) h.logit = 0;
  const auto loss = compute_losses(p, random_truth(rng));
  CHECK(std::abs(loss.cls - std::log(5.0)) <= 1e-9);
}

TEST_CASE("class loss is stable for large logits") {
  Rng rng(3);
  Pred p = random_prediction(rng, 3);
  p[0].logit = 1000;
  p[1].logit = 998;
  p[2].logit = -1000;
  CHECK(class_loss(p, 0) == doctest::Approx(std::log(1 + std::exp(-2.0))));
  CHECK(std::isfinite(class_loss(p, 2)));
  const auto c = head_probabilities(p);
  CHECK(c[0] + c[1] + c[2] == doctest::Approx(1.0));
}

TEST_CASE("winner and inference selection") {
  Pred p(3);
  p[0].q.setConstant(1);
  p[1].q.setConstant(0.5);
  p[2].q.setConstant(0.5);
  const Joints<double> target = Joints<double>::Constant(0.4);
  CHECK(select_winner(p, target) == 1);  // tie between 1 and 2 goes low
  p[2].q[0] = 0.45;
  CHECK(select_winner(p, target) == 2);

  p[0].logit = 2;
  p[1].logit = 3;
  p[2].logit = 3;
  CHECK(select_inference_index(p) == 1);
  CHECK(&select_inference(p) == &p[1]);
  CHECK_THROWS_AS(select_winner(Pred{}, target), Error);
  CHECK_THROWS_AS(select_inference_index(Pred{}), Error);
}

TEST_CASE("exact match: regression terms vanish, non-winners get only the logit term") {
  Rng rng(4);
  Pred p = random_prediction(rng, 5);
  Gt gt;
  gt.q = p[3].q;
  gt.dh = p[3].dh;
  gt.s = p[3].s;
  const auto loss = compute_losses(p, gt);
  CHECK(loss.winner == 3);
  CHECK(loss.joint == 0);
  CHECK(loss.pose == 0);
  CHECK(loss.quality == 0);
  CHECK(loss.total == doctest::Approx(class_loss(p, 3)));

  const auto g = loss_gradients(p, gt);
  const auto c = head_probabilities(p);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(g[k].logit == doctest::Approx(c[k] - (k == 3)));
    if (k == 3) continue;
    CHECK(g[k].q.isZero(0));
    CHECK(g[k].dh.isZero(0));
    CHECK(g[k].s == 0);
  }
  CHECK(g[3].q.isZero(0));  // subgradient 0 at the kink
}

TEST_CASE("loss inputs are validated") {
  Rng rng(5);
  Pred p = random_prediction(rng, 2);
  Gt gt = random_truth(rng);
  gt.s = std::numeric_limits<double>::quiet_NaN();
  try {
    compute_losses(p, gt);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
  }
  gt = random_truth(rng);
  p[1].logit = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(loss_gradients(p, gt), Error);
  CHECK_THROWS_AS(compute_losses(Pred{}, gt), Error);
}

TEST_CASE("single precision instantiation") {
  MultiHeadPrediction<float> p(2);
  p[1].q.setConstant(1.0f);
  GroundTruthGrasp<float> gt;
  gt.q.setConstant(0.9f);
  const auto loss = compute_losses(p, gt);
  CHECK(loss.winner == 1);
  CHECK(loss.joint == doctest::Approx(std::sqrt(12.0) * 0.1).epsilon(1e-5));
}

TEST_CASE("fit_modes recovers two modes with their frequencies") {
  const auto m = two_modes();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto fit = fit_modes<double>(m.data, 5, 2000, 0.5, seed);
    const auto c = head_probabilities(fit.heads);
    const auto near = [&](const Joints<double>& q) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < 5; ++k)
        if ((fit.heads[k].q - q).norm() < (fit.heads[best].q - q).norm()) best = k;
      return best;
    };
    const std::size_t a = near(m.qa), b = near(m.qb);
    CHECK(a != b);
    CHECK((fit.heads[a].q - m.qa).norm() <= 1e-2);
    CHECK((fit.heads[b].q - m.qb).norm() <= 1e-2);
    CHECK(std::abs(c[a] - 0.7) <= 0.05);
    CHECK(std::abs(c[b] - 0.3) <= 0.05);
    CHECK(fit.history.size() == 2001);
    CHECK(fit.history.back() < fit.history.front());
  }
}

TEST_CASE("fit_modes with one head settles on the geometric median") {
  // Unsquared L2 makes the 70 % mode the minimizer, not the weighted mean.
  const auto m = two_modes();
  const auto fit = fit_modes<double>(m.data, 1, 2000, 0.5, 1);
  CHECK((fit.heads[0].q - m.qa).norm() < 1e-2);
  const Joints<double> mean = 0.7 * m.qa + 0.3 * m.qb;
  CHECK((fit.heads[0].q - mean).norm() > 0.5);
}

TEST_CASE("fit_modes edge cases") {
  Rng rng(9);
  const std::vector<Gt> one{random_truth(rng)};
  const auto fit = fit_modes<double>(one, 3, 500, 0.2, 1);
  const auto best = select_winner(fit.heads, one[0].q);
  CHECK((fit.heads[best].q - one[0].q).norm() < 1e-2);
  CHECK(fit_modes<double>(one, 3, 0, 0.2, 1).history.size() == 1);

  const auto m = two_modes();
  try {
    fit_modes<double>(m.data, 2, 50, 1e4, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Divergence);
  }
  CHECK_THROWS_AS(fit_modes<double>(std::vector<Gt>{}, 2, 5, 0.1, 1), Error);
  CHECK_THROWS_AS(fit_modes<double>(m.data, 0, 5, 0.1, 1), Error);
  CHECK_THROWS_AS(fit_modes<double>(m.data, 2, 5, -0.1, 1), Error);
  std::vector<Gt> bad = m.data;
  bad[4].q[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_modes<double>(bad, 2, 5, 0.1, 1), Error);

  const auto a = fit_modes<double>(m.data, 5, 100, 0.5, 7);
  const auto b = fit_modes<double>(m.data, 5, 100, 0.5, 7);
  CHECK(prediction_to_json(a.heads) == prediction_to_json(b.heads));
}

TEST_CASE("prediction, label and history I/O") {
  Rng rng(10);
  const Pred p = random_prediction(rng, 4);
  const Pred back = prediction_from_json(prediction_to_json(p));
  REQUIRE(back.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(back[k].q == p[k].q);
    CHECK(back[k].dh == p[k].dh);
    CHECK(back[k].s == p[k].s);
    CHECK(back[k].logit == p[k].logit);
  }
  const std::vector<Gt> labels{random_truth(rng), random_truth(rng)};
  const auto lb = labels_from_json(labels_to_json(labels));
  REQUIRE(lb.size() == 2);
  CHECK(lb[1].q == labels[1].q);
  CHECK(lb[1].s == labels[1].s);
  CHECK_THROWS_AS(prediction_from_json("[]"), Error);
  CHECK_THROWS_AS(prediction_from_json("{}"), Error);
  CHECK_THROWS_AS(prediction_from_json("[{\"q\": [1, 2]}]"), Error);
  CHECK_THROWS_AS(labels_from_json("not json"), Error);

  const std::vector<double> hist{2.5, 1.25, 0.1};
  CHECK(loss_history_csv(hist) == "step,loss\n0,2.5\n1,1.25\n2,0.10000000000000001\n");
}

}  // TEST_SUITE
