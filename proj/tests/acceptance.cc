//
// Copyright 2026 The dssmooth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Acceptance run: prints one PASS/FAIL line per criterion (1-8) followed by
// the measured values, and exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dssmooth/attacks.h"
#include "dssmooth/certify.h"
#include "dssmooth/harness.h"
#include "dssmooth/statcore.h"
#include "dssmooth/verify.h"
#include "dssmooth/watermark.h"

namespace dssmooth {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string Fmt(const char* fmt, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, ap);
  va_end(ap);
  return buf;
}

// 1. Exact arithmetic.
Outcome ExactArithmetic() {
  CalibrationSet cal;
  for (int i = 0; i < 100; ++i) cal.values.push_back(i / 100.0);
  const Threshold t = CalibrationThreshold(cal, {0.05, 0.05});
  const double q = StdNormalInvCdf(0.975);
  const double half = StdNormalCdf(0.0);
  Outcome o;
  o.pass = t.index == 91 && std::fabs(q - 1.959964) <= 1e-6 && half == 0.5;
  o.detail = Fmt("index=%d quantile=%.9f cdf(0)=%.17g", t.index, q, half);
  return o;
}

// Order-sensitive scorer: position-weighted projections of the composed rows.
class PositionalClassifier : public Classifier {
 public:
  PositionalClassifier(int n, int d, int k, RandomStream& s)
      : n_(n), d_(d), k_(k), w_(n * d * k) {
    for (double& v : w_) v = s.Normal();
  }
  int num_classes() const override { return k_; }
  void Scores(const DenseMatrix& e, std::span<const std::uint8_t> mask,
              std::span<double> out) const override {
    for (int c = 0; c < k_; ++c) {
      double s = 0;
      for (int i = 0; i < n_; ++i) {
        if (!mask[i]) continue;
        for (int j = 0; j < d_; ++j) s += w_[(c * n_ + i) * d_ + j] * e(i, j);
      }
      out[c] = s;
    }
  }

 private:
  int n_, d_, k_;
  std::vector<double> w_;
};

// Every within-group reordering of the output positions, as ApplyPermNoise
// applies them to `perm`.
std::vector<PermutationMatrix> GroupOrbit(const PermutationMatrix& perm,
                                          int lambda) {
  const int n = perm.n();
  std::vector<std::vector<int>> out = {perm.mapping()};
  for (int start = 0; start < n; start += lambda) {
    const int end = std::min(start + lambda, n);
    std::vector<std::vector<int>> next;
    for (const auto& m : out) {
      std::vector<int> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      do {
        std::vector<int> v = m;
        for (int k = 0; k < end - start; ++k) v[start + k] = m[idx[k]];
        next.push_back(v);
      } while (std::next_permutation(idx.begin(), idx.end()));
    }
    out = std::move(next);
  }
  std::vector<PermutationMatrix> perms;
  for (auto& m : out) perms.emplace_back(std::move(m));
  return perms;
}

// Exact smoothed distribution at sigma = 0 by enumerating the orbit.
std::vector<double> ExactPd(const Classifier& f, const DualSpaceRep& rep,
                            int lambda) {
  const int k = f.num_classes();
  std::vector<double> pd(k, 0.0), scores(k);
  const auto orbit = GroupOrbit(rep.perm, lambda);
  for (const auto& p : orbit) {
    DualSpaceRep r = rep;
    r.perm = p;
    f.Scores(Compose(r), ComposedMask(r), scores);
    const auto top = ArgMaxSet(scores);
    for (int c : top) pd[c] += 1.0 / (top.size() * orbit.size());
  }
  return pd;
}

// 2. Permutation-space Lipschitz bound.
Outcome PermutationLipschitz() {
  RandomStream s(2024);
  long pairs = 0, violations = 0;
  double worst_slack = 1e9;
  double mc_gap = 0.0;
  for (int n : {4, 5, 6}) {
    for (int lambda : {2, 3}) {
      PositionalClassifier f(n, 2, 3, s);
      DenseMatrix w(n, 2);
      for (double& v : w.data()) v = s.Normal();
      std::vector<int> base(n);
      std::iota(base.begin(), base.end(), 0);
      // Every starting permutation U of the n tokens.
      do {
        DualSpaceRep rep{PermutationMatrix(base), EmbeddingMatrix(w), Mask(n, 1)};
        const auto pd_u = ExactPd(f, rep, lambda);
        for (const auto& up : GroupOrbit(rep.perm, lambda)) {
          DualSpaceRep other = rep;
          other.perm = up;
          const auto pd_v = ExactPd(f, other, lambda);
          const double bound = PermDistance(rep.perm, up) / (2.0 * lambda);
          for (int y = 0; y < 3; ++y) {
            const double gap = std::fabs(pd_u[y] - pd_v[y]);
            ++pairs;
            violations += gap > bound + 1e-12;
            if (bound > 0) worst_slack = std::min(worst_slack, bound - gap);
          }
        }
      } while (std::next_permutation(base.begin(), base.end()));
      // The enumerated distribution is the one the sampler draws from.
      DualSpaceRep rep{PermutationMatrix::Identity(n), EmbeddingMatrix(w),
                       Mask(n, 1)};
      SmoothingConfig cfg;
      cfg.noise = {0.0, lambda};
      cfg.samples = 20000;
      cfg.seed = 7;
      const auto mc = EstimatePd(f, rep, cfg).probs;
      const auto exact = ExactPd(f, rep, lambda);
      for (int y = 0; y < 3; ++y) {
        const double sd = std::sqrt(exact[y] * (1 - exact[y]) / cfg.samples);
        mc_gap = std::max(mc_gap, std::fabs(mc[y] - exact[y]) / std::max(sd, 1e-9));
      }
    }
  }
  Outcome o;
  o.pass = violations == 0 && mc_gap <= 5.0;
  o.detail = Fmt("pairs x classes=%ld violations=%ld min_slack=%.3f "
                 "sampler_vs_enumeration=%.2f sd",
                 pairs, violations, worst_slack, mc_gap);
  return o;
}

// Linear two-class scorer <a, vec(E)> + b > 0 -> class 1.
class LinearClassifier : public Classifier {
 public:
  LinearClassifier(std::vector<double> a, double b) : a_(std::move(a)), b_(b) {}
  int num_classes() const override { return 2; }
  void Scores(const DenseMatrix& e, std::span<const std::uint8_t>,
              std::span<double> out) const override {
    const double m = Margin(e);
    out[0] = m > 0 ? 1.0 : 0.0;
    out[1] = m > 0 ? 0.0 : 1.0;
  }
  double Margin(const DenseMatrix& e) const {
    double s = b_;
    for (std::size_t i = 0; i < a_.size(); ++i) s += a_[i] * e.data()[i];
    return s;
  }
  double Norm() const {
    double s = 0;
    for (double v : a_) s += v * v;
    return std::sqrt(s);
  }
  const std::vector<double>& a() const { return a_; }

 private:
  std::vector<double> a_;
  double b_;
};

// 3. Embedding-space certified radius.
Outcome EmbeddingRadius() {
  RandomStream s(3);
  const double sigma = 0.5;
  int inside_flips = 0, outside_flip_instances = 0, instances = 20;
  double mc_gap = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int n = 4, d = 3;
    std::vector<double> a(n * d);
    for (double& v : a) v = s.Normal();
    LinearClassifier f(a, 0.3 * s.Normal());
    DenseMatrix e(n, d);
    for (double& v : e.data()) v = s.Normal();
    // P[class 1] under N(0, sigma^2 I) is Phi(margin / (sigma ||a||)).
    auto smoothed = [&](const DenseMatrix& x) {
      const double p1 = StdNormalCdf(f.Margin(x) / (sigma * f.Norm()));
      return std::vector<double>{p1, 1.0 - p1};
    };
    const auto p = smoothed(e);
    const int top = p[0] >= p[1] ? 0 : 1;
    const CertifiedRadii r =
        ComputeCertifiedRadii(p[top], p[1 - top], {sigma, 1});
    // Random directions at 0.99 r_e.
    for (int k = 0; k < 1000; ++k) {
      DenseMatrix x = e;
      std::vector<double> dir(n * d);
      double norm = 0;
      for (double& v : dir) norm += (v = s.Normal()) * v;
      norm = std::sqrt(norm);
      for (int i = 0; i < n * d; ++i) x.data()[i] += 0.99 * r.r_e * dir[i] / norm;
      const auto q = smoothed(x);
      inside_flips += (q[0] >= q[1] ? 0 : 1) != top;
    }
    // Worst direction at 1.5 r_e.
    DenseMatrix x = e;
    const double sign = top == 0 ? -1.0 : 1.0;
    for (int i = 0; i < n * d; ++i) {
      x.data()[i] += sign * 1.5 * r.r_e * f.a()[i] / f.Norm();
    }
    const auto q = smoothed(x);
    outside_flip_instances += (q[0] >= q[1] ? 0 : 1) != top;
    // The closed form agrees with the Monte Carlo estimator.
    SmoothingConfig cfg;
    cfg.noise = {sigma, 1};
    cfg.samples = 4000;
    cfg.seed = 100 + t;
    const DualSpaceRep rep{PermutationMatrix::Identity(n), EmbeddingMatrix(e),
                           Mask(n, 1)};
    const auto mc = EstimatePd(f, rep, cfg).probs;
    const double sd = std::sqrt(p[0] * p[1] / cfg.samples);
    mc_gap = std::max(mc_gap, std::fabs(mc[0] - p[0]) / std::max(sd, 1e-9));
  }
  Outcome o;
  o.pass = inside_flips == 0 && outside_flip_instances == instances && mc_gap <= 5;
  o.detail = Fmt("flips inside 0.99r_e=%d/%d; flips at 1.5r_e=%d/%d instances; "
                 "estimator vs closed form=%.2f sd",
                 inside_flips, instances * 1000, outside_flip_instances,
                 instances, mc_gap);
  return o;
}

// 4. Conformal false-positive control.
Outcome ConformalFpr() {
  RandomStream s(4);
  const int trials = 200;
  int fp = 0;
  for (int t = 0; t < trials; ++t) {
    // Benign-null scores: clipped Gaussian around a chance-level PP.
    auto draw = [&] { return std::clamp(0.3 + 0.03 * s.Normal(), 0.0, 1.0); };
    CalibrationSet cal;
    for (int j = 0; j < 100; ++j) cal.values.push_back(draw());
    const Threshold thr = CalibrationThreshold(cal, {0.05, 0.0});
    fp += DecideOwnership(draw(), thr.value);
  }
  const double rate = fp / static_cast<double>(trials);
  return {rate <= 0.10, Fmt("empirical FPR=%.3f over %d trials", rate, trials)};
}

// 5. Trigger-scale optimizer.
Outcome TriggerScaleOptimizer() {
  int total = 0, converged = 0, max_updates = 0;
  double worst = 0.0;
  for (const WatermarkPlan& plan :
       {WatermarkPlan::BadWordDefault(), WatermarkPlan::AddSentDefault()}) {
    ExperimentConfig cfg = ExperimentConfig::Desk(4);
    cfg.plan = plan;
    const Experiment exp = PrepareExperiment(cfg);
    const auto base = TriggerBaseRow(plan.trigger, exp.vocab, exp.reference);
    RandomStream s = RandomStream(5).Split(plan.trigger.tokens.front());
    for (int i = 0; i < 100; ++i) {
      const TokenSeq& seq = exp.train[s.UniformInt(exp.train.size())];
      const TriggeredSeq tr =
          InsertTriggerText(seq, plan.trigger, exp.vocab, 1, s);
      const DualSpaceRep pre = PreInsertionRep(tr, exp.reference);
      const TriggerScale ts = OptimizeTriggerScale(pre, tr.positions, base, plan);
      const double rel = std::fabs(ts.scale.deviation - plan.eps_t()) / plan.eps_t();
      ++total;
      converged += ts.scale.converged && rel <= 0.01 && ts.scale.updates <= 20;
      max_updates = std::max(max_updates, ts.scale.updates);
      worst = std::max(worst, rel);
    }
  }
  return {converged == total,
          Fmt("converged %d/%d; max relative deviation error %.2e; "
              "max updates %d",
              converged, total, worst, max_updates)};
}

// 6. Gradient correctness.
Outcome Gradients() {
  RandomStream s(6);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const ModelShape shape{20, 4 + static_cast<int>(s.UniformInt(6)),
                           4 + static_cast<int>(s.UniformInt(8)),
                           2 + static_cast<int>(s.UniformInt(3))};
    const auto m = ClassifierModel::Initialize(shape, {0.7, s.NextU64()});
    const int n = 3 + static_cast<int>(s.UniformInt(6));
    TokenSeq seq;
    for (int i = 0; i < n; ++i) {
      const bool active = i == 0 || s.Uniform() < 0.8;
      seq.ids.push_back(active ? 2 + static_cast<int>(s.UniformInt(18)) : kPadId);
      seq.mask.push_back(active);
    }
    seq.label = 1 + static_cast<int>(s.UniformInt(shape.classes));
    const DualSpaceRep rep = Embed(seq, m);
    const DenseMatrix g = GradWrtEmbeddings(m, rep, seq.label);
    const double h = 1e-5;
    double diff = 0, ref = 0;
    for (int i = 0; i < rep.n(); ++i) {
      for (int c = 0; c < rep.d(); ++c) {
        DualSpaceRep up = rep, down = rep;
        up.emb.row(i)[c] += h;
        down.emb.row(i)[c] -= h;
        const double fd =
            (Loss(m, up, seq.label) - Loss(m, down, seq.label)) / (2 * h);
        diff += std::pow(g(i, c) - fd, 2);
        ref += fd * fd;
      }
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12));
  }
  return {worst < 1e-4, Fmt("max relative error %.2e over 50 pairs", worst)};
}

struct DeskRun {
  TrendReport trends;
  double seconds = 0;
};

DeskRun RunDesk(int k) {
  const auto t0 = std::chrono::steady_clock::now();
  const Experiment exp = PrepareExperiment(ExperimentConfig::Desk(k));
  const Pools pools = TrainPools(exp);
  DeskRun r;
  r.trends = RunTrendSuite(exp, pools);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                  .count();
  return r;
}

// 7. End-to-end trends at desk scale.
Outcome EndToEnd(const DeskRun& four, const DeskRun& two) {
  const MetricsReport& m = four.trends.metrics;
  const MetricsReport& m2 = two.trends.metrics;
  const bool a = m.ba_clean - m.ba_watermarked <= 0.03;
  const bool b = m.wsr >= 0.95;
  const bool c = four.trends.vanilla_rho <= -0.8 &&
                 four.trends.protected_min_wsr >= 0.9;
  const bool d = m.fpr <= 0.14 && m2.fpr <= 0.10;
  // VSR >= WCA is checked for both class counts; the margin over the
  // independent pool only for K=4, since at K=2 the threshold is >= 1/2 and
  // the certified offset Phi(r_e / sigma) is >= 1/2, so WCA is 0 by
  // construction.
  const bool e = m.watermarked.vsr >= m.watermarked.wca &&
                 m2.watermarked.vsr >= m2.watermarked.wca &&
                 m.watermarked.vsr >= m.independent.vsr + 0.3 &&
                 m.watermarked.wca >= m.independent.vsr + 0.3;
  Outcome o;
  o.pass = a && b && c && d && e;
  o.detail = Fmt(
      "K=4: (a) BA clean %.3f wm %.3f gap %.3f %s; (b) WSR %.3f %s; "
      "(c) vanilla rho %.3f, protected min WSR %.3f %s; (d) FPR %.2f, K=2 FPR "
      "%.2f %s; (e) VSR %.2f WCA %.2f independent VSR %.2f, K=2 VSR %.2f WCA "
      "%.2f %s | K=2 (info): BA gap %.3f WSR %.3f independent VSR %.2f "
      "threshold %.3f | %.0fs + %.0fs",
      m.ba_clean, m.ba_watermarked, m.ba_clean - m.ba_watermarked,
      a ? "ok" : "FAIL", m.wsr, b ? "ok" : "FAIL", four.trends.vanilla_rho,
      four.trends.protected_min_wsr, c ? "ok" : "FAIL", m.fpr, m2.fpr,
      d ? "ok" : "FAIL", m.watermarked.vsr, m.watermarked.wca,
      m.independent.vsr, m2.watermarked.vsr, m2.watermarked.wca,
      e ? "ok" : "FAIL", m2.ba_clean - m2.ba_watermarked, m2.wsr,
      m2.independent.vsr, m2.threshold.value,
      four.seconds, two.seconds);
  return o;
}

// 8. Adaptive-attack stability.
Outcome AdaptiveAttacks(const DeskRun& four) {
  const auto& ft = four.trends.finetune;
  const auto& pr = four.trends.prune;
  const bool finetune = ft.back().vsr >= 0.7 * ft.front().vsr &&
                        ft.back().wca >= 0.7 * ft.front().wca;
  bool prune_stable = true;
  for (const auto& r : pr) {
    if (r.x > 0.8 + 1e-12) continue;
    prune_stable = prune_stable &&
                   std::fabs(r.vsr - pr.front().vsr) <= 0.2 * pr.front().vsr &&
                   std::fabs(r.wca - pr.front().wca) <= 0.2 * pr.front().wca;
  }
  const bool collapse = pr.back().x == 1.0 && pr.back().vsr == 0.0 &&
                        pr.back().wca == 0.0;
  std::string rows;
  for (const auto& r : ft) rows += Fmt(" ft%g:%.2f/%.2f", r.x, r.vsr, r.wca);
  for (const auto& r : pr) rows += Fmt(" pr%g:%.2f/%.2f", r.x, r.vsr, r.wca);
  return {finetune && prune_stable && collapse,
          Fmt("fine-tune %s, prune<=0.8 %s, collapse at 1.0 %s; VSR/WCA:%s",
              finetune ? "ok" : "FAIL", prune_stable ? "ok" : "FAIL",
              collapse ? "ok" : "FAIL", rows.c_str())};
}

}  // namespace
}  // namespace dssmooth

int main() {
  using namespace dssmooth;
  int failures = 0;
  auto report = [&](int id, const std::function<Outcome()>& run) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s  [%.1fs] %s\n", id, o.pass ? "PASS" : "FAIL",
                secs, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  report(1, ExactArithmetic);
  report(2, PermutationLipschitz);
  report(3, EmbeddingRadius);
  report(4, ConformalFpr);
  report(5, TriggerScaleOptimizer);
  report(6, Gradients);
  DeskRun four, two;
  bool desk_ok = true;
  try {
    four = RunDesk(4);
    two = RunDesk(2);
  } catch (const std::exception& e) {
    desk_ok = false;
    std::printf("desk run failed: %s\n", e.what());
  }
  report(7, [&] {
    return desk_ok ? EndToEnd(four, two) : Outcome{false, "desk run failed"};
  });
  report(8, [&] {
    return desk_ok ? AdaptiveAttacks(four) : Outcome{false, "desk run failed"};
  });
  return failures == 0 ? 0 : 1;
}
