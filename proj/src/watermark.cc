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

#include "dssmooth/watermark.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dssmooth/errors.h"

namespace dssmooth {
namespace {

double Norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

const char* KindName(TriggerKind k) {
  return k == TriggerKind::kBadWord ? "badword" : "addsent";
}

TriggerKind KindFromName(const std::string& s) {
  if (s == "badword") return TriggerKind::kBadWord;
  if (s == "addsent") return TriggerKind::kAddSent;
  throw SchemaError("unknown trigger kind '" + s + "'");
}

const char* PlacementName(Placement p) {
  switch (p) {
    case Placement::kRandom:
      return "random";
    case Placement::kStart:
      return "start";
    case Placement::kMiddle:
      return "middle";
    case Placement::kEnd:
      return "end";
  }
  return "random";
}

Placement PlacementFromName(const std::string& s) {
  if (s == "random") return Placement::kRandom;
  if (s == "start") return Placement::kStart;
  if (s == "middle") return Placement::kMiddle;
  if (s == "end") return Placement::kEnd;
  throw SchemaError("unknown placement '" + s + "'");
}

// First slot of a block of `k` slots among `total` under a placement policy.
int BlockStart(Placement p, int total, int k, RandomStream& stream) {
  const int room = total - k;
  switch (p) {
    case Placement::kStart:
      return 0;
    case Placement::kEnd:
      return room;
    case Placement::kMiddle:
      return room / 2;
    case Placement::kRandom:
      break;
  }
  return static_cast<int>(stream.UniformInt(room + 1));
}

}  // namespace

TriggerSpec TriggerSpec::BadWord(std::vector<std::string> words,
                                 Placement placement) {
  TriggerSpec s;
  s.kind = TriggerKind::kBadWord;
  s.tokens = std::move(words);
  s.placement = placement;
  return s;
}

TriggerSpec TriggerSpec::AddSent(std::string_view sentence,
                                 Placement placement) {
  TriggerSpec s;
  s.kind = TriggerKind::kAddSent;
  s.tokens = Tokenize(sentence);
  s.placement = placement;
  return s;
}

void TriggerSpec::Validate() const {
  if (tokens.empty()) throw ParameterError("trigger has no tokens");
}

WatermarkPlan WatermarkPlan::BadWordDefault() {
  WatermarkPlan p;
  p.trigger = TriggerSpec::BadWord({"cf", "mn"});
  p.eps_max = 0.05;
  p.embedding_budget = 0.6;
  return p;
}

WatermarkPlan WatermarkPlan::AddSentDefault() {
  WatermarkPlan p;
  p.trigger = TriggerSpec::AddSent("I watch this 3D movie.", Placement::kEnd);
  p.eps_max = 0.15;
  p.embedding_budget = 1.0;
  return p;
}

void WatermarkPlan::Validate() const {
  trigger.Validate();
  if (!(rate > 0.0 && rate < 1.0)) {
    throw ParameterError("watermark rate must lie in (0, 1)");
  }
  if (!(eps_max > 0.0) || !(eta > 0.0 && eta < 1.0)) {
    throw ParameterError("need eps_max > 0 and eta in (0, 1)");
  }
  if (group_size < 1) throw ParameterError("group_size must be >= 1");
  if (!(tol > 0.0) || max_iters < 1) {
    throw ParameterError("need tol > 0 and max_iters >= 1");
  }
  if (target_label < 1) throw ParameterError("target_label must be >= 1");
}

nlohmann::json WatermarkPlan::ToJson() const {
  return {{"trigger",
           {{"kind", KindName(trigger.kind)},
            {"tokens", trigger.tokens},
            {"placement", PlacementName(trigger.placement)}}},
          {"target_label", target_label},
          {"rate", rate},
          {"eps_max", eps_max},
          {"eta", eta},
          {"group_size", group_size},
          {"window", window},
          {"tol", tol},
          {"max_iters", max_iters},
          {"embedding_budget", embedding_budget},
          {"permutation_budget", permutation_budget},
          {"seed", seed}};
}

WatermarkPlan WatermarkPlan::FromJson(const nlohmann::json& j) {
  const auto& t = j.at("trigger");
  const TriggerKind kind = KindFromName(t.at("kind").get<std::string>());
  WatermarkPlan p = kind == TriggerKind::kBadWord ? BadWordDefault()
                                                  : AddSentDefault();
  if (t.contains("tokens")) {
    p.trigger.tokens = t.at("tokens").get<std::vector<std::string>>();
  }
  if (t.contains("placement")) {
    p.trigger.placement = PlacementFromName(t.at("placement").get<std::string>());
  }
  p.target_label = j.value("target_label", p.target_label);
  p.rate = j.value("rate", p.rate);
  p.eps_max = j.value("eps_max", p.eps_max);
  p.eta = j.value("eta", p.eta);
  p.group_size = j.value("group_size", p.group_size);
  p.window = j.value("window", p.window);
  p.tol = j.value("tol", p.tol);
  p.max_iters = j.value("max_iters", p.max_iters);
  p.embedding_budget = j.value("embedding_budget", p.embedding_budget);
  p.permutation_budget = j.value("permutation_budget", p.permutation_budget);
  p.seed = j.value("seed", p.seed);
  p.Validate();
  return p;
}

std::vector<std::size_t> SelectSubset(std::size_t n, const WatermarkPlan& plan) {
  if (!(plan.rate > 0.0 && plan.rate < 1.0)) {
    throw ParameterError("SelectSubset: rate must lie in (0, 1)");
  }
  const auto count =
      static_cast<std::size_t>(std::floor(plan.rate * static_cast<double>(n)));
  if (count == 0) {
    throw ParameterError("SelectSubset: floor(rate * N) is 0, nothing to mark");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  RandomStream stream = RandomStream(plan.seed).Split("subset");
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.UniformInt(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

TriggeredSeq InsertTriggerText(const TokenSeq& seq, const TriggerSpec& spec,
                               const Vocab& vocab, int target_label,
                               RandomStream& stream) {
  spec.Validate();
  const int n = seq.n();
  const int k = static_cast<int>(spec.tokens.size());
  if (k > n) {
    throw ParameterError("trigger of " + std::to_string(k) +
                         " tokens does not fit n=" + std::to_string(n));
  }
  std::vector<int> trigger_ids;
  for (const auto& tok : spec.tokens) {
    if (!vocab.Contains(tok)) {
      throw InputError("trigger token '" + tok + "' is not in the vocabulary");
    }
    trigger_ids.push_back(vocab.Id(tok));
  }
  std::vector<int> active;
  for (int i = 0; i < n; ++i) {
    if (seq.mask[i] != 0) active.push_back(seq.ids[i]);
  }
  const int total = std::min(static_cast<int>(active.size()) + k, n);

  std::vector<int> positions;
  if (spec.kind == TriggerKind::kBadWord &&
      spec.placement == Placement::kRandom) {
    std::vector<int> slots(total);
    std::iota(slots.begin(), slots.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(stream.UniformInt(total - i));
      std::swap(slots[i], slots[j]);
    }
    positions.assign(slots.begin(), slots.begin() + k);
    std::sort(positions.begin(), positions.end());
  } else {
    const int start = BlockStart(spec.placement, total, k, stream);
    for (int i = 0; i < k; ++i) positions.push_back(start + i);
  }

  TriggeredSeq out;
  out.seq.ids.assign(n, kPadId);
  out.seq.mask.assign(n, 0);
  out.seq.label = target_label;
  out.seq.watermarked = seq.watermarked;
  std::vector<char> is_trigger(total, 0);
  for (int i = 0; i < k; ++i) {
    out.seq.ids[positions[i]] = trigger_ids[i];
    is_trigger[positions[i]] = 1;
  }
  int src = 0;
  for (int i = 0; i < total; ++i) {
    out.seq.mask[i] = 1;
    if (!is_trigger[i]) out.seq.ids[i] = active[src++];
  }
  out.positions = std::move(positions);
  return out;
}

int AdaptiveWindow(int active_tokens) {
  if (active_tokens < 10) return 2;
  if (active_tokens >= 80) return 10;
  return 2 + (8 * (active_tokens - 10)) / 70;
}

std::vector<double> LocalPooledEmbedding(const EmbeddingMatrix& emb,
                                         std::span<const std::uint8_t> mask,
                                         std::span<const int> positions,
                                         int u) {
  const int n = emb.n();
  const int d = emb.d();
  if (static_cast<int>(mask.size()) != n) {
    throw ShapeError("LocalPooledEmbedding: mask length");
  }
  if (positions.empty()) throw ParameterError("LocalPooledEmbedding: no positions");
  if (u < 0) throw ParameterError("LocalPooledEmbedding: window < 0");
  std::vector<double> h(d, 0.0);
  std::vector<double> local(d);
  for (int p : positions) {
    if (p < 0 || p >= n) throw IndexError("position " + std::to_string(p));
    std::fill(local.begin(), local.end(), 0.0);
    int count = 0;
    for (int i = std::max(0, p - u); i <= std::min(n - 1, p + u); ++i) {
      if (mask[i] == 0) continue;
      ++count;
      const auto r = emb.row(i);
      for (int c = 0; c < d; ++c) local[c] += r[c];
    }
    if (count == 0) {
      throw DegenerateError("window around position " + std::to_string(p) +
                            " is fully masked");
    }
    for (int c = 0; c < d; ++c) h[c] += local[c] / count;
  }
  for (double& v : h) v /= static_cast<double>(positions.size());
  return h;
}

ScaleResult IterateScale(
    const std::function<std::vector<double>(double)>& response, double eps_t,
    double tol, int max_iters) {
  if (!(eps_t > 0.0)) throw ParameterError("IterateScale: eps_t must be > 0");
  ScaleResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  double alpha = 1.0;
  for (int update = 0;; ++update) {
    const double dev = Norm2(response(alpha));
    if (!(dev > 0.0) || !std::isfinite(dev)) {
      throw DegenerateError("trigger produces no pooled deviation at alpha=" +
                            std::to_string(alpha));
    }
    const double gap = std::fabs(dev - eps_t);
    if (gap < best_gap) {
      best_gap = gap;
      best = {alpha, dev, update, false};
    }
    if (gap <= tol * eps_t) {
      return {alpha, dev, update, true};
    }
    if (update == max_iters) break;
    alpha *= eps_t / dev;
  }
  best.updates = max_iters;
  return best;
}

DualSpaceRep PreInsertionRep(const TriggeredSeq& triggered,
                             const ClassifierModel& model) {
  DualSpaceRep rep = Embed(triggered.seq, model);
  for (int p : triggered.positions) {
    for (double& v : rep.emb.row(p)) v = 0.0;
  }
  return rep;
}

std::vector<double> TriggerBaseRow(const TriggerSpec& spec, const Vocab& vocab,
                                   const ClassifierModel& model) {
  spec.Validate();
  std::vector<double> base(model.shape().dim, 0.0);
  for (const auto& tok : spec.tokens) {
    if (!vocab.Contains(tok)) {
      throw InputError("trigger token '" + tok + "' is not in the vocabulary");
    }
    const int id = vocab.Id(tok);
    if (id >= model.shape().vocab_size) {
      throw IndexError("trigger token id outside the model vocabulary");
    }
    const auto r = model.embedding_table.row(id);
    for (int c = 0; c < model.shape().dim; ++c) base[c] += r[c];
  }
  for (double& v : base) v /= static_cast<double>(spec.tokens.size());
  return base;
}

TriggerScale OptimizeTriggerScale(const DualSpaceRep& pre_insertion,
                                  std::span<const int> positions,
                                  std::span<const double> base_row,
                                  const WatermarkPlan& plan) {
  pre_insertion.Validate();
  if (static_cast<int>(base_row.size()) != pre_insertion.d()) {
    throw ShapeError("OptimizeTriggerScale: base row width");
  }
  const int u = plan.window >= 0 ? plan.window
                                 : AdaptiveWindow(pre_insertion.ActiveCount());
  const std::vector<double> h0 =
      LocalPooledEmbedding(pre_insertion.emb, pre_insertion.mask, positions, u);
  EmbeddingMatrix work = pre_insertion.emb;
  auto response = [&](double alpha) {
    for (int p : positions) {
      auto r = work.row(p);
      for (std::size_t c = 0; c < base_row.size(); ++c) {
        r[c] = alpha * base_row[c];
      }
    }
    std::vector<double> h =
        LocalPooledEmbedding(work, pre_insertion.mask, positions, u);
    for (std::size_t c = 0; c < h.size(); ++c) h[c] -= h0[c];
    return h;
  };
  TriggerScale out;
  out.scale = IterateScale(response, plan.eps_t(), plan.tol, plan.max_iters);
  out.delta.positions.assign(positions.begin(), positions.end());
  std::vector<double> row(base_row.begin(), base_row.end());
  for (double& v : row) v *= out.scale.alpha;
  out.delta.rows.assign(positions.size(), row);
  return out;
}

EmbeddingWatermark BuildWatermarkedEmbeddings(const EmbeddingMatrix& emb,
                                              const EmbeddingDelta& delta,
                                              double budget) {
  if (delta.positions.size() != delta.rows.size()) {
    throw ShapeError("EmbeddingDelta: positions and rows disagree");
  }
  EmbeddingWatermark out{emb, 0.0};
  std::vector<char> seen(emb.n(), 0);
  for (std::size_t i = 0; i < delta.positions.size(); ++i) {
    const int p = delta.positions[i];
    if (p < 0 || p >= emb.n() || seen[p]) {
      throw ParameterError("EmbeddingDelta: invalid or repeated position");
    }
    seen[p] = 1;
    if (static_cast<int>(delta.rows[i].size()) != emb.d()) {
      throw ShapeError("EmbeddingDelta: row width");
    }
    std::copy(delta.rows[i].begin(), delta.rows[i].end(),
              out.emb.row(p).begin());
  }
  out.delta_e = EmbDistance(out.emb, emb);
  if (!(out.delta_e < budget)) {
    throw BudgetError("embedding watermark delta_e=" +
                      std::to_string(out.delta_e) + " is not below budget " +
                      std::to_string(budget) + "; lower eta or eps_max");
  }
  return out;
}

PermWatermark ApplyPermWatermark(const PermutationMatrix& perm, int lambda_w,
                                 int anchor, std::span<const std::uint8_t> mask,
                                 RandomStream& stream, double budget) {
  const int n = perm.n();
  if (lambda_w < 1 || lambda_w > std::max(n, 1)) {
    throw ParameterError("ApplyPermWatermark: lambda_w outside [1, n]");
  }
  if (anchor < 0 || anchor >= std::max(n, 1)) {
    throw IndexError("ApplyPermWatermark: anchor " + std::to_string(anchor));
  }
  if (!mask.empty() && static_cast<int>(mask.size()) != n) {
    throw ShapeError("ApplyPermWatermark: mask length");
  }
  std::vector<int> out = perm.mapping();
  if (lambda_w > 1) {
    const int start = (anchor / lambda_w) * lambda_w;
    const int end = std::min(n, start + lambda_w);
    std::vector<int> slots;
    for (int i = start; i < end; ++i) {
      if (mask.empty() || mask[perm[i]] != 0) slots.push_back(i);
    }
    std::vector<int> order = slots;
    stream.Shuffle(std::span<int>(order));
    for (std::size_t k = 0; k < slots.size(); ++k) {
      out[slots[k]] = perm[order[k]];
    }
  }
  PermWatermark pw{PermutationMatrix(std::move(out)), 0.0};
  pw.delta_p = PermDistance(pw.perm, perm);
  if (!(pw.delta_p < budget)) {
    throw BudgetError("permutation watermark delta_p=" +
                      std::to_string(pw.delta_p) + " is not below budget " +
                      std::to_string(budget));
  }
  return pw;
}

nlohmann::json WatermarkedSample::ManifestEntry() const {
  return {{"index", index},
          {"positions", triggered.positions},
          {"alpha", scale.alpha},
          {"deviation", scale.deviation},
          {"updates", scale.updates},
          {"converged", scale.converged},
          {"delta_e", delta_e},
          {"delta_p", delta_p},
          {"permutation", watermarked.perm.mapping()},
          {"stream", stream_path}};
}

WatermarkedSample WatermarkSample(const TokenSeq& seq, std::size_t index,
                                  const Vocab& vocab,
                                  const ClassifierModel& model,
                                  const WatermarkPlan& plan,
                                  const RandomStream& stream) {
  WatermarkedSample s;
  s.index = index;
  s.original = seq;
  s.stream_path = stream.PathString();
  RandomStream insert_stream = stream.Split("insert");
  RandomStream perm_stream = stream.Split("perm");
  s.triggered = InsertTriggerText(seq, plan.trigger, vocab, plan.target_label,
                                  insert_stream);
  s.pre_insertion = PreInsertionRep(s.triggered, model);
  const std::vector<double> base = TriggerBaseRow(plan.trigger, vocab, model);
  const TriggerScale ts =
      OptimizeTriggerScale(s.pre_insertion, s.triggered.positions, base, plan);
  s.scale = ts.scale;
  EmbeddingWatermark ew = BuildWatermarkedEmbeddings(
      s.pre_insertion.emb, ts.delta, plan.embedding_budget);
  PermWatermark pw = ApplyPermWatermark(
      s.pre_insertion.perm, plan.group_size, s.triggered.positions.front(),
      s.pre_insertion.mask, perm_stream, plan.permutation_budget);
  s.delta_e = ew.delta_e;
  s.delta_p = pw.delta_p;
  s.watermarked.perm = std::move(pw.perm);
  s.watermarked.emb = std::move(ew.emb);
  s.watermarked.mask = s.pre_insertion.mask;

  const int n = seq.n();
  s.stored.ids.resize(n);
  s.stored.mask.resize(n);
  for (int i = 0; i < n; ++i) {
    const int src = s.watermarked.perm[i];
    s.stored.ids[i] = s.triggered.seq.ids[src];
    s.stored.mask[i] = s.triggered.seq.mask[src];
  }
  s.stored.label = plan.target_label;
  s.stored.watermarked = true;
  const PermutationMatrix inverse = s.watermarked.perm.Inverse();
  for (int p : s.triggered.positions) {
    s.stored.trigger_positions.push_back(inverse[p]);
  }
  std::sort(s.stored.trigger_positions.begin(),
            s.stored.trigger_positions.end());
  s.stored.trigger_norm =
      s.delta_e / std::sqrt(static_cast<double>(s.triggered.positions.size()));
  return s;
}

WatermarkedDataset BuildWatermarkedDataset(std::span<const TokenSeq> dataset,
                                           const Vocab& vocab,
                                           const WatermarkPlan& plan,
                                           const ClassifierModel& model) {
  plan.Validate();
  if (plan.target_label > model.shape().classes) {
    throw ParameterError("target label exceeds the class count");
  }
  WatermarkedDataset out;
  out.subset = SelectSubset(dataset.size(), plan);
  out.samples.assign(dataset.begin(), dataset.end());
  const RandomStream root = RandomStream(plan.seed).Split("sample");
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t idx : out.subset) {
    WatermarkedSample s = WatermarkSample(dataset[idx], idx, vocab, model, plan,
                                          root.Split(idx));
    out.samples[idx] = s.stored;
    entries.push_back(s.ManifestEntry());
    out.watermarked.push_back(std::move(s));
  }
  out.manifest = {{"format", "dssmooth-manifest"},
                  {"version", 1},
                  {"plan", plan.ToJson()},
                  {"dataset_size", dataset.size()},
                  {"marked", out.subset.size()},
                  {"remaining", dataset.size() - out.subset.size()},
                  {"entries", std::move(entries)}};
  return out;
}

}  // namespace dssmooth
