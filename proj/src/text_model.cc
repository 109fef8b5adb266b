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

#include "dssmooth/text_model.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "dssmooth/errors.h"

namespace dssmooth {
namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "dssmooth-model";

// Activations of one forward pass, kept for backprop.
struct Activations {
  std::vector<double> pooled;
  std::vector<double> hidden;  // tanh output
  std::vector<double> probs;
  int active = 0;
};

void Softmax(std::span<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logits) v /= z;
}

// Head forward from a pooled vector.
void HeadForward(const ClassifierModel& m, Activations& act) {
  const int d = m.shape().dim;
  const int h = m.shape().hidden;
  const int k = m.shape().classes;
  act.hidden.assign(h, 0.0);
  for (int j = 0; j < h; ++j) act.hidden[j] = m.b_hidden[j];
  for (int i = 0; i < d; ++i) {
    const double x = act.pooled[i];
    if (x == 0.0) continue;
    const auto w = m.w_hidden.row(i);
    for (int j = 0; j < h; ++j) act.hidden[j] += x * w[j];
  }
  for (double& v : act.hidden) v = std::tanh(v);
  act.probs.assign(k, 0.0);
  for (int c = 0; c < k; ++c) act.probs[c] = m.b_out[c];
  for (int j = 0; j < h; ++j) {
    const double a = act.hidden[j];
    const auto w = m.w_out.row(j);
    for (int c = 0; c < k; ++c) act.probs[c] += a * w[c];
  }
  Softmax(act.probs);
}

Activations ForwardPooledComposed(const ClassifierModel& m,
                                  const DenseMatrix& composed,
                                  std::span<const std::uint8_t> mask) {
  const int d = m.shape().dim;
  if (static_cast<int>(composed.cols()) != d ||
      mask.size() != composed.rows()) {
    throw ShapeError("Forward: composed input has shape " +
                     std::to_string(composed.rows()) + "x" +
                     std::to_string(composed.cols()) + ", model dim " +
                     std::to_string(d));
  }
  Activations act;
  act.pooled.assign(d, 0.0);
  for (std::size_t i = 0; i < composed.rows(); ++i) {
    if (mask[i] == 0) continue;
    ++act.active;
    const auto r = composed.row(i);
    for (int c = 0; c < d; ++c) act.pooled[c] += r[c];
  }
  if (act.active == 0) return act;
  for (double& v : act.pooled) v /= act.active;
  HeadForward(m, act);
  return act;
}

// Backprop from probabilities to the pooled vector, accumulating head
// gradients scaled by `weight` when the accumulators are non-null.
std::vector<double> HeadBackward(const ClassifierModel& m,
                                 const Activations& act, int label_index,
                                 double weight, DenseMatrix* g_w_hidden,
                                 std::vector<double>* g_b_hidden,
                                 DenseMatrix* g_w_out,
                                 std::vector<double>* g_b_out) {
  const int d = m.shape().dim;
  const int h = m.shape().hidden;
  const int k = m.shape().classes;
  std::vector<double> d_logits(act.probs);
  d_logits[label_index] -= 1.0;
  std::vector<double> d_pre(h, 0.0);
  for (int j = 0; j < h; ++j) {
    const auto w = m.w_out.row(j);
    double s = 0.0;
    for (int c = 0; c < k; ++c) s += w[c] * d_logits[c];
    d_pre[j] = s * (1.0 - act.hidden[j] * act.hidden[j]);
  }
  if (g_w_out != nullptr) {
    for (int j = 0; j < h; ++j) {
      auto g = g_w_out->row(j);
      const double a = act.hidden[j] * weight;
      for (int c = 0; c < k; ++c) g[c] += a * d_logits[c];
    }
    for (int c = 0; c < k; ++c) (*g_b_out)[c] += weight * d_logits[c];
    for (int i = 0; i < d; ++i) {
      const double x = act.pooled[i] * weight;
      if (x == 0.0) continue;
      auto g = g_w_hidden->row(i);
      for (int j = 0; j < h; ++j) g[j] += x * d_pre[j];
    }
    for (int j = 0; j < h; ++j) (*g_b_hidden)[j] += weight * d_pre[j];
  }
  std::vector<double> d_pooled(d, 0.0);
  for (int i = 0; i < d; ++i) {
    const auto w = m.w_hidden.row(i);
    double s = 0.0;
    for (int j = 0; j < h; ++j) s += w[j] * d_pre[j];
    d_pooled[i] = s;
  }
  return d_pooled;
}

int LabelIndex(const ClassifierModel& m, int label) {
  if (label < 1 || label > m.shape().classes) {
    throw InputError("label " + std::to_string(label) + " outside 1.." +
                     std::to_string(m.shape().classes));
  }
  return label - 1;
}

nlohmann::json MatrixToJson(const DenseMatrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

DenseMatrix MatrixFromJson(const nlohmann::json& j) {
  return DenseMatrix(j.at("rows").get<std::size_t>(),
                     j.at("cols").get<std::size_t>(),
                     j.at("data").get<std::vector<double>>());
}

}  // namespace

int ArgMax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<int> ArgMaxSet(std::span<const double> values) {
  std::vector<int> out;
  if (values.empty()) return out;
  const double mx = *std::max_element(values.begin(), values.end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == mx) out.push_back(static_cast<int>(i));
  }
  return out;
}

// ---------------------------------------------------------------- Vocab

Vocab::Vocab() {
  Add("<pad>");
  Add("<unk>");
}

void Vocab::Add(const std::string& token) {
  if (ids_.contains(token)) return;
  ids_.emplace(token, size());
  tokens_.push_back(token);
}

Vocab Vocab::Build(std::span<const std::string> texts,
                   std::span<const std::string> extra_tokens) {
  std::set<std::string> all;
  for (const auto& t : texts) {
    for (auto& tok : Tokenize(t)) all.insert(std::move(tok));
  }
  for (const auto& t : extra_tokens) {
    for (auto& tok : Tokenize(t)) all.insert(std::move(tok));
  }
  Vocab v;
  for (const auto& tok : all) v.Add(tok);
  return v;
}

int Vocab::Id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::Contains(std::string_view token) const {
  return ids_.contains(std::string(token));
}

const std::string& Vocab::Token(int id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("Vocab::Token: id " + std::to_string(id));
  }
  return tokens_[id];
}

nlohmann::json Vocab::ToJson() const { return tokens_; }

Vocab Vocab::FromJson(const nlohmann::json& j) {
  const auto tokens = j.get<std::vector<std::string>>();
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw SchemaError("vocab must start with <pad>, <unk>");
  }
  Vocab v;
  for (std::size_t i = 2; i < tokens.size(); ++i) v.Add(tokens[i]);
  return v;
}

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

int TokenSeq::ActiveCount() const {
  return static_cast<int>(std::count_if(mask.begin(), mask.end(),
                                        [](std::uint8_t m) { return m != 0; }));
}

TokenSeq Encode(std::string_view text, const Vocab& vocab, int n, int label) {
  if (n < 1) throw ParameterError("Encode: n must be >= 1");
  TokenSeq seq;
  seq.ids.assign(n, kPadId);
  seq.mask.assign(n, 0);
  seq.label = label;
  const auto tokens = Tokenize(text);
  const int count = std::min<int>(n, static_cast<int>(tokens.size()));
  for (int i = 0; i < count; ++i) {
    seq.ids[i] = vocab.Id(tokens[i]);
    seq.mask[i] = 1;
  }
  return seq;
}

std::string Decode(const TokenSeq& seq, const Vocab& vocab) {
  std::string out;
  for (int i = 0; i < seq.n(); ++i) {
    if (seq.mask[i] == 0) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.Token(seq.ids[i]);
  }
  return out;
}

// ------------------------------------------------------- ClassifierModel

ClassifierModel::ClassifierModel(const ModelShape& shape)
    : embedding_table(shape.vocab_size, shape.dim),
      w_hidden(shape.dim, shape.hidden),
      b_hidden(shape.hidden, 0.0),
      w_out(shape.hidden, shape.classes),
      b_out(shape.classes, 0.0),
      shape_(shape) {
  if (shape.vocab_size < 2 || shape.dim < 1 || shape.hidden < 1 ||
      shape.classes < 2) {
    throw ParameterError("ModelShape: invalid dimensions");
  }
}

ClassifierModel ClassifierModel::Initialize(const ModelShape& shape,
                                            const InitConfig& init) {
  ClassifierModel m(shape);
  m.init_seed = init.seed;
  RandomStream root(init.seed);
  RandomStream s_emb = root.Split("embedding");
  for (int r = 1; r < shape.vocab_size; ++r) {
    for (double& v : m.embedding_table.row(r)) {
      v = init.embedding_scale * s_emb.Normal();
    }
  }
  RandomStream s_head = root.Split("head");
  const double s1 = 1.0 / std::sqrt(static_cast<double>(shape.dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  for (double& v : m.w_hidden.data()) v = s1 * s_head.Normal();
  for (double& v : m.w_out.data()) v = s2 * s_head.Normal();
  // Small nonzero biases keep magnitude pruning counts exact.
  for (double& v : m.b_hidden) v = 0.01 * s_head.Normal();
  for (double& v : m.b_out) v = 0.01 * s_head.Normal();
  return m;
}

void ClassifierModel::Scores(const DenseMatrix& composed,
                             std::span<const std::uint8_t> composed_mask,
                             std::span<double> out) const {
  const ForwardResult r = ForwardComposed(composed, composed_mask);
  std::copy(r.probs.begin(), r.probs.end(), out.begin());
}

ForwardResult ClassifierModel::ForwardComposed(
    const DenseMatrix& composed, std::span<const std::uint8_t> mask) const {
  Activations act = ForwardPooledComposed(*this, composed, mask);
  ForwardResult r;
  if (act.active == 0) {
    r.probs.assign(shape_.classes, 1.0 / shape_.classes);
    r.uniform_fallback = true;
    return r;
  }
  r.probs = std::move(act.probs);
  return r;
}

ForwardResult ClassifierModel::ForwardTokens(const TokenSeq& seq) const {
  Activations act;
  act.pooled.assign(shape_.dim, 0.0);
  for (int i = 0; i < seq.n(); ++i) {
    if (seq.mask[i] == 0) continue;
    const int id = seq.ids[i];
    if (id < 0 || id >= shape_.vocab_size) {
      throw IndexError("token id " + std::to_string(id) + " out of range");
    }
    ++act.active;
    const auto r = embedding_table.row(id);
    for (int c = 0; c < shape_.dim; ++c) act.pooled[c] += r[c];
  }
  ForwardResult out;
  if (act.active == 0) {
    out.probs.assign(shape_.classes, 1.0 / shape_.classes);
    out.uniform_fallback = true;
    return out;
  }
  for (double& v : act.pooled) v /= act.active;
  HeadForward(*this, act);
  out.probs = std::move(act.probs);
  return out;
}

int ClassifierModel::PredictTokens(const TokenSeq& seq) const {
  return ArgMax(ForwardTokens(seq).probs) + 1;
}

bool ClassifierModel::AllFinite() const {
  auto finite = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(),
                       [](double x) { return std::isfinite(x); });
  };
  return embedding_table.AllFinite() && w_hidden.AllFinite() &&
         w_out.AllFinite() && finite(b_hidden) && finite(b_out);
}

std::size_t ClassifierModel::HeadParameterCount() const {
  return w_hidden.size() + b_hidden.size() + w_out.size() + b_out.size();
}

std::size_t ClassifierModel::HeadZeroCount() const {
  std::size_t z = 0;
  auto count = [&z](std::span<const double> v) {
    for (double x : v) z += x == 0.0;
  };
  count(w_hidden.data());
  count(b_hidden);
  count(w_out.data());
  count(b_out);
  return z;
}

nlohmann::json ClassifierModel::ToJson() const {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"shape",
           {{"vocab_size", shape_.vocab_size},
            {"dim", shape_.dim},
            {"hidden", shape_.hidden},
            {"classes", shape_.classes}}},
          {"init_seed", init_seed},
          {"activation", "tanh"},
          {"embedding_table", MatrixToJson(embedding_table)},
          {"w_hidden", MatrixToJson(w_hidden)},
          {"b_hidden", b_hidden},
          {"w_out", MatrixToJson(w_out)},
          {"b_out", b_out}};
}

ClassifierModel ClassifierModel::FromJson(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) {
    throw SchemaError("not a dssmooth model checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw SchemaError("unsupported checkpoint version " +
                      j.at("version").dump());
  }
  ModelShape shape;
  const auto& s = j.at("shape");
  shape.vocab_size = s.at("vocab_size").get<int>();
  shape.dim = s.at("dim").get<int>();
  shape.hidden = s.at("hidden").get<int>();
  shape.classes = s.at("classes").get<int>();
  ClassifierModel m(shape);
  m.init_seed = j.at("init_seed").get<std::uint64_t>();
  m.embedding_table = MatrixFromJson(j.at("embedding_table"));
  m.w_hidden = MatrixFromJson(j.at("w_hidden"));
  m.b_hidden = j.at("b_hidden").get<std::vector<double>>();
  m.w_out = MatrixFromJson(j.at("w_out"));
  m.b_out = j.at("b_out").get<std::vector<double>>();
  if (m.embedding_table.rows() != static_cast<std::size_t>(shape.vocab_size) ||
      m.embedding_table.cols() != static_cast<std::size_t>(shape.dim) ||
      m.w_hidden.rows() != static_cast<std::size_t>(shape.dim) ||
      m.w_hidden.cols() != static_cast<std::size_t>(shape.hidden) ||
      m.b_hidden.size() != static_cast<std::size_t>(shape.hidden) ||
      m.w_out.rows() != static_cast<std::size_t>(shape.hidden) ||
      m.w_out.cols() != static_cast<std::size_t>(shape.classes) ||
      m.b_out.size() != static_cast<std::size_t>(shape.classes)) {
    throw SchemaError("checkpoint parameter shapes disagree with header");
  }
  return m;
}

// -------------------------------------------------------- free functions

DualSpaceRep Embed(const TokenSeq& seq, const ClassifierModel& model) {
  const int d = model.shape().dim;
  DenseMatrix w(seq.n(), d);
  for (int j = 0; j < seq.n(); ++j) {
    const int id = seq.ids[j];
    if (id < 0 || id >= model.shape().vocab_size) {
      throw IndexError("Embed: token id " + std::to_string(id) +
                       " outside vocabulary of " +
                       std::to_string(model.shape().vocab_size));
    }
    const auto src = model.embedding_table.row(id);
    std::copy(src.begin(), src.end(), w.row(j).begin());
  }
  DualSpaceRep rep;
  rep.perm = PermutationMatrix::Identity(seq.n());
  rep.emb = EmbeddingMatrix(std::move(w));
  rep.mask = seq.mask;
  return rep;
}

ForwardResult Forward(const ClassifierModel& model, const DualSpaceRep& rep) {
  return model.ForwardComposed(Compose(rep), ComposedMask(rep));
}

double Loss(const ClassifierModel& model, const DualSpaceRep& rep, int label) {
  const int li = LabelIndex(model, label);
  const ForwardResult r = Forward(model, rep);
  return -std::log(r.probs[li]);
}

ParameterGrads Backward(const ClassifierModel& model, const DualSpaceRep& rep,
                        int label) {
  const int li = LabelIndex(model, label);
  const DenseMatrix composed = Compose(rep);
  const Mask mask = ComposedMask(rep);
  const ModelShape& s = model.shape();
  ParameterGrads g;
  g.w_hidden = DenseMatrix(s.dim, s.hidden);
  g.b_hidden.assign(s.hidden, 0.0);
  g.w_out = DenseMatrix(s.hidden, s.classes);
  g.b_out.assign(s.classes, 0.0);
  g.composed = DenseMatrix(composed.rows(), composed.cols());
  Activations act = ForwardPooledComposed(model, composed, mask);
  if (act.active == 0) {
    // Uniform fallback has no parameter dependence.
    g.loss = std::log(static_cast<double>(s.classes));
    return g;
  }
  g.loss = -std::log(act.probs[li]);
  const std::vector<double> d_pooled = HeadBackward(
      model, act, li, 1.0, &g.w_hidden, &g.b_hidden, &g.w_out, &g.b_out);
  const double inv = 1.0 / act.active;
  for (std::size_t i = 0; i < composed.rows(); ++i) {
    if (mask[i] == 0) continue;
    auto row = g.composed.row(i);
    for (int c = 0; c < s.dim; ++c) row[c] = d_pooled[c] * inv;
  }
  return g;
}

DenseMatrix GradWrtEmbeddings(const ClassifierModel& model,
                              const DualSpaceRep& rep, int label) {
  return Backward(model, rep, label).composed;
}

TrainResult TrainWithHistory(const ClassifierModel& init,
                             std::span<const TokenSeq> dataset,
                             const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.augment_views < 0 ||
      !std::isfinite(cfg.learning_rate)) {
    throw ParameterError("TrainConfig: invalid counts or rate");
  }
  TrainResult result{init, {}};
  if (cfg.epochs == 0) return result;
  if (dataset.empty()) throw InputError("Train: empty dataset");
  ClassifierModel& m = result.model;
  const ModelShape s = m.shape();
  for (const auto& seq : dataset) LabelIndex(m, seq.label);

  DenseMatrix g_wh(s.dim, s.hidden), g_wo(s.hidden, s.classes);
  std::vector<double> g_bh(s.hidden), g_bo(s.classes);
  DenseMatrix g_table(s.vocab_size, s.dim);
  std::vector<char> touched(s.vocab_size, 0);
  std::vector<int> touched_rows;

  DenseMatrix v_wh(s.dim, s.hidden), v_wo(s.hidden, s.classes);
  std::vector<double> v_bh(s.hidden, 0.0), v_bo(s.classes, 0.0);
  DenseMatrix v_table(s.vocab_size, s.dim);
  const double mu = cfg.optimizer == Optimizer::kMomentum ? cfg.momentum : 0.0;

  // One entry per (sample, view) shown in an epoch. View 0 is the plain
  // token sequence, views >= 1 are noisy copies.
  auto selected = [&](const TokenSeq& seq) {
    return cfg.augment_scope == AugmentScope::kAll ||
           (cfg.augment_scope == AugmentScope::kWatermarked && seq.watermarked);
  };
  std::vector<std::pair<std::size_t, int>> order;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!selected(dataset[i])) {
      order.emplace_back(i, 0);
      continue;
    }
    if (cfg.augment_keep_plain) order.emplace_back(i, 0);
    for (int v = 1; v <= cfg.augment_views; ++v) order.emplace_back(i, v);
  }
  const RandomStream root(cfg.seed);

  auto step = [&](std::span<double> param, std::span<double> grad,
                  std::span<double> vel, double scale) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = mu * vel[i] + grad[i] * scale;
      param[i] -= cfg.learning_rate * vel[i];
      grad[i] = 0.0;
    }
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RandomStream shuffle = root.Split("shuffle").Split(epoch);
    shuffle.Shuffle(std::span<std::pair<std::size_t, int>>(order));
    const RandomStream aug_root = root.Split("augment").Split(epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const auto [index, view] = order[b];
        const TokenSeq& seq = dataset[index];
        const int li = seq.label - 1;
        RandomStream draw = aug_root.Split(index).Split(view);
        const bool augment = view > 0;
        // Rows of the (possibly perturbed) composed input and the table row
        // each one came from; -1 marks a row with no trainable source.
        Activations act;
        act.pooled.assign(s.dim, 0.0);
        std::vector<int> row_ids;
        if (augment) {
          NoiseSpec noise = cfg.augment_noise;
          if (cfg.randomize_sigma) noise.sigma *= draw.Uniform();
          noise.lambda = std::min(noise.lambda, seq.n());
          DualSpaceRep clean = Embed(seq, m);
          std::vector<char> is_trigger(seq.n(), 0);
          const bool token_view = cfg.alternate_trigger_views && view % 2 == 0;
          if (!seq.trigger_positions.empty() && !token_view) {
            std::vector<double> dir(s.dim, 0.0);
            for (int p : seq.trigger_positions) {
              is_trigger.at(p) = 1;
              const auto r = m.embedding_table.row(seq.ids[p]);
              for (int c = 0; c < s.dim; ++c) dir[c] += r[c];
            }
            double norm = 0.0;
            for (double v : dir) norm += v * v;
            norm = std::sqrt(norm);
            const double f = norm > 0.0 ? seq.trigger_norm / norm : 0.0;
            for (int p : seq.trigger_positions) {
              auto r = clean.emb.row(p);
              for (int c = 0; c < s.dim; ++c) r[c] = f * dir[c];
            }
          }
          const DualSpaceRep rep = PerturbRep(clean, noise, draw.Split("noise"));
          const DenseMatrix composed = Compose(rep);
          const Mask mask = ComposedMask(rep);
          act = ForwardPooledComposed(m, composed, mask);
          for (int i = 0; i < seq.n(); ++i) {
            if (mask[i] == 0) continue;
            const int src = rep.perm[i];
            row_ids.push_back(is_trigger[src] ? -1 : seq.ids[src]);
          }
        } else {
          for (int i = 0; i < seq.n(); ++i) {
            if (seq.mask[i] == 0) continue;
            row_ids.push_back(seq.ids[i]);
            const auto r = m.embedding_table.row(seq.ids[i]);
            for (int c = 0; c < s.dim; ++c) act.pooled[c] += r[c];
          }
          act.active = static_cast<int>(row_ids.size());
          if (act.active > 0) {
            for (double& v : act.pooled) v /= act.active;
            HeadForward(m, act);
          }
        }
        if (act.active == 0) continue;
        const double loss = -std::log(act.probs[li]);
        if (!std::isfinite(loss)) {
          throw TrainingError("non-finite loss at epoch " +
                              std::to_string(epoch));
        }
        loss_sum += loss;
        const std::vector<double> d_pooled =
            HeadBackward(m, act, li, 1.0, &g_wh, &g_bh, &g_wo, &g_bo);
        const double inv = 1.0 / act.active;
        for (int id : row_ids) {
          if (id < 0) continue;
          if (!touched[id]) {
            touched[id] = 1;
            touched_rows.push_back(id);
          }
          auto g = g_table.row(id);
          for (int c = 0; c < s.dim; ++c) g[c] += d_pooled[c] * inv;
        }
      }
      step(m.w_hidden.data(), g_wh.data(), v_wh.data(), scale);
      step(m.b_hidden, g_bh, v_bh, scale);
      step(m.w_out.data(), g_wo.data(), v_wo.data(), scale);
      step(m.b_out, g_bo, v_bo, scale);
      // Table rows: rows without gradient this batch still coast on their
      // velocity under momentum.
      if (mu > 0.0) {
        for (int r = 1; r < s.vocab_size; ++r) {
          step(m.embedding_table.row(r), g_table.row(r), v_table.row(r), scale);
        }
      } else {
        for (int r : touched_rows) {
          step(m.embedding_table.row(r), g_table.row(r), v_table.row(r), scale);
        }
      }
      for (int r : touched_rows) touched[r] = 0;
      touched_rows.clear();
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(mean_loss) || !m.AllFinite()) {
      throw TrainingError("training diverged at epoch " +
                          std::to_string(epoch));
    }
    result.epoch_losses.push_back(mean_loss);
  }
  return result;
}

ClassifierModel Train(const ClassifierModel& init,
                      std::span<const TokenSeq> dataset,
                      const TrainConfig& cfg) {
  return TrainWithHistory(init, dataset, cfg).model;
}

ClassifierModel FineTune(const ClassifierModel& model,
                         std::span<const TokenSeq> dataset,
                         const TrainConfig& cfg) {
  return Train(model, dataset, cfg);
}

ClassifierModel Prune(const ClassifierModel& model, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ParameterError("Prune: rate must lie in [0, 1]");
  }
  ClassifierModel out = model;
  std::vector<double*> params;
  params.reserve(out.HeadParameterCount());
  for (double& v : out.w_hidden.data()) params.push_back(&v);
  for (double& v : out.b_hidden) params.push_back(&v);
  for (double& v : out.w_out.data()) params.push_back(&v);
  for (double& v : out.b_out) params.push_back(&v);
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(params.size())));
  if (k == 0) return out;
  std::vector<std::size_t> idx(params.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(*params[a]) < std::fabs(*params[b]);
  });
  for (std::size_t i = 0; i < k; ++i) *params[idx[i]] = 0.0;
  return out;
}

void SaveModel(const ClassifierModel& model, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << model.ToJson().dump() << "\n";
}

ClassifierModel LoadModel(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return ClassifierModel::FromJson(j);
}

}  // namespace dssmooth
