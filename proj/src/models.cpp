// Copyright 2026 The HotFlip Authors
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

#include "hotflip/models.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "hotflip/util.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace hotflip::models {

using diff::Tape;
using diff::Tensor;
using diff::Var;
using nlohmann::json;

namespace {

Tensor xavier(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
              Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(Tensor::count(shape));
  for (double& v : data) v = rng.uniform(-a, a);
  return Tensor(std::move(shape), std::move(data));
}

LstmCellParams init_lstm_cell(int in_dim, int hidden, Rng& rng) {
  const auto z = static_cast<std::size_t>(in_dim + hidden);
  const auto h = static_cast<std::size_t>(hidden);
  LstmCellParams c;
  c.w_i = xavier({z, h}, z, h, rng);
  c.w_f = xavier({z, h}, z, h, rng);
  c.w_o = xavier({z, h}, z, h, rng);
  c.w_g = xavier({z, h}, z, h, rng);
  c.b_i = Tensor::zeros({h});
  c.b_f = Tensor::full({h}, 1.0);  // open forget gate at the start
  c.b_o = Tensor::zeros({h});
  c.b_g = Tensor::zeros({h});
  return c;
}

Var lstm_step(Tape& t, const LstmCellParams& cp,
              const std::array<Var, 8>& w,  // staged leaves in field order
              Var x, Var h_prev, Var c_prev, Var& c_out) {
  (void)cp;
  Var z = t.concat({x, h_prev});
  Var i = t.sigmoid(t.affine(z, w[0], w[1]));
  Var f = t.sigmoid(t.affine(z, w[2], w[3]));
  Var o = t.sigmoid(t.affine(z, w[4], w[5]));
  Var g = t.tanh(t.affine(z, w[6], w[7]));
  c_out = t.add(t.mul(f, c_prev), t.mul(i, g));
  return t.mul(o, t.tanh(c_out));
}

}  // namespace

corpus::WordVocab CharModelParams::vocab() const {
  corpus::WordVocab v;
  v.words.insert(vocab_words.begin(), vocab_words.end());
  return v;
}

CharModelParams init_char_model(const CharHyper& hyper, const corpus::Alphabet& alphabet,
                                std::vector<std::string> vocab_words, std::uint64_t seed,
                                bool lowercased) {
  if (hyper.max_word_len < hyper.kernel_width) {
    throw ContractError("char model: max_word_len must be >= kernel_width");
  }
  if (alphabet.size() != hyper.alphabet_size) {
    throw ContractError("char model: hyper.alphabet_size disagrees with alphabet");
  }
  CharModelParams p;
  p.hyper = hyper;
  p.alphabet = alphabet;
  std::sort(vocab_words.begin(), vocab_words.end());
  vocab_words.erase(std::unique(vocab_words.begin(), vocab_words.end()), vocab_words.end());
  p.vocab_words = std::move(vocab_words);
  p.lowercased = lowercased;

  Rng rng = substream(seed, "init");
  const auto V = static_cast<std::size_t>(hyper.alphabet_size);
  const auto d = static_cast<std::size_t>(hyper.char_dim);
  const auto w = static_cast<std::size_t>(hyper.kernel_width);
  const auto k = static_cast<std::size_t>(hyper.num_kernels);
  const auto h = static_cast<std::size_t>(hyper.hidden);
  const auto cls = static_cast<std::size_t>(hyper.num_classes);

  p.embedding = xavier({V, d}, V, d, rng);
  p.conv_kernels = xavier({w, d, k}, w * d, k, rng);
  for (int l = 0; l < hyper.highway_layers; ++l) {
    HighwayParams hw;
    hw.w_t = xavier({k, k}, k, k, rng);
    hw.b_t = Tensor::full({k}, -1.0);  // bias toward carry
    hw.w_h = xavier({k, k}, k, k, rng);
    hw.b_h = Tensor::zeros({k});
    p.highway.push_back(std::move(hw));
  }
  for (int l = 0; l < hyper.lstm_layers; ++l) {
    const int in_dim = l == 0 ? hyper.num_kernels : hyper.hidden;
    p.lstm.push_back(init_lstm_cell(in_dim, hyper.hidden, rng));
  }
  p.out_w = xavier({h, cls}, h, cls, rng);
  p.out_b = Tensor::zeros({cls});
  return p;
}

std::vector<std::pair<std::string, diff::Tensor*>> tensor_refs(CharModelParams& p) {
  std::vector<std::pair<std::string, Tensor*>> refs;
  refs.emplace_back("embedding", &p.embedding);
  refs.emplace_back("conv_kernels", &p.conv_kernels);
  for (std::size_t l = 0; l < p.highway.size(); ++l) {
    const std::string b = "highway" + std::to_string(l) + ".";
    refs.emplace_back(b + "w_t", &p.highway[l].w_t);
    refs.emplace_back(b + "b_t", &p.highway[l].b_t);
    refs.emplace_back(b + "w_h", &p.highway[l].w_h);
    refs.emplace_back(b + "b_h", &p.highway[l].b_h);
  }
  for (std::size_t l = 0; l < p.lstm.size(); ++l) {
    const std::string b = "lstm" + std::to_string(l) + ".";
    refs.emplace_back(b + "w_i", &p.lstm[l].w_i);
    refs.emplace_back(b + "b_i", &p.lstm[l].b_i);
    refs.emplace_back(b + "w_f", &p.lstm[l].w_f);
    refs.emplace_back(b + "b_f", &p.lstm[l].b_f);
    refs.emplace_back(b + "w_o", &p.lstm[l].w_o);
    refs.emplace_back(b + "b_o", &p.lstm[l].b_o);
    refs.emplace_back(b + "w_g", &p.lstm[l].w_g);
    refs.emplace_back(b + "b_g", &p.lstm[l].b_g);
  }
  refs.emplace_back("out_w", &p.out_w);
  refs.emplace_back("out_b", &p.out_b);
  return refs;
}

std::vector<std::pair<std::string, const diff::Tensor*>> tensor_refs(const CharModelParams& p) {
  auto mut = tensor_refs(const_cast<CharModelParams&>(p));
  std::vector<std::pair<std::string, const Tensor*>> refs;
  refs.reserve(mut.size());
  for (auto& [n, t] : mut) refs.emplace_back(n, t);
  return refs;
}

namespace {

// Parameter leaves staged on a tape, in tensor_refs order.
struct CharStage {
  Var emb, conv;
  std::vector<std::array<Var, 4>> highway;  // w_t, b_t, w_h, b_h
  std::vector<std::array<Var, 8>> lstm;     // w_i, b_i, w_f, b_f, w_o, b_o, w_g, b_g
  Var out_w, out_b;
  std::vector<Var> flat;
};

CharStage stage_char_params(Tape& t, const CharModelParams& p) {
  CharStage s;
  auto push = [&](const Tensor& tensor) {
    Var v = t.leaf(tensor);
    s.flat.push_back(v);
    return v;
  };
  s.emb = push(p.embedding);
  s.conv = push(p.conv_kernels);
  for (const auto& hw : p.highway) {
    std::array<Var, 4> a;
    a[0] = push(hw.w_t);
    a[1] = push(hw.b_t);
    a[2] = push(hw.w_h);
    a[3] = push(hw.b_h);
    s.highway.push_back(a);
  }
  for (const auto& c : p.lstm) {
    std::array<Var, 8> a;
    a[0] = push(c.w_i);
    a[1] = push(c.b_i);
    a[2] = push(c.w_f);
    a[3] = push(c.b_f);
    a[4] = push(c.w_o);
    a[5] = push(c.b_o);
    a[6] = push(c.w_g);
    a[7] = push(c.b_g);
    s.lstm.push_back(a);
  }
  s.out_w = push(p.out_w);
  s.out_b = push(p.out_b);
  return s;
}

/// Per-word feature: embedding lookup -> conv -> tanh -> max-over-time ->
/// highway stack. Shared by the document forward and single-word probes.
Var char_word_feature(Tape& t, const CharStage& s, Var embedded, int num_kernels) {
  Var feat = t.max_over_time(t.conv1d(embedded, s.conv));
  for (const auto& hw : s.highway) {
    Var gate = t.sigmoid(t.affine(feat, hw[0], hw[1]));
    Var cand = t.relu(t.affine(feat, hw[2], hw[3]));
    Var carry =
        t.sub(t.leaf(Tensor::full({static_cast<std::size_t>(num_kernels)}, 1.0)), gate);
    feat = t.add(t.mul(gate, cand), t.mul(carry, feat));
  }
  return feat;
}

}  // namespace

CharForward char_forward(Tape& t, const CharModelParams& p, const corpus::OneHotText& x,
                         const CharForwardOptions& opts) {
  const auto& hy = p.hyper;
  if (x.alphabet_size() != hy.alphabet_size || x.max_word_len() != hy.max_word_len ||
      x.max_words() != hy.max_words) {
    throw ShapeError("char_forward: input shaped " + std::to_string(x.max_words()) + "x" +
                     std::to_string(x.max_word_len()) + "x" +
                     std::to_string(x.alphabet_size()) + " does not fit the model");
  }
  if (opts.input_override &&
      static_cast<int>(opts.input_override->size()) != x.max_words()) {
    throw ContractError("char_forward: override must supply all word matrices");
  }

  CharForward out;
  CharStage s = stage_char_params(t, p);
  out.param_leaves = s.flat;

  const int m = x.max_words();
  for (int i = 0; i < m; ++i) {
    out.input_words.push_back(
        t.leaf(opts.input_override ? (*opts.input_override)[i] : x.word_matrix(i)));
  }

  std::vector<Var> reprs;
  for (int i = 0; i < x.word_count(); ++i) {
    Var e = t.matmul(out.input_words[i], s.emb);
    if (opts.embedding_noise) {
      e = t.add(e, t.leaf((*opts.embedding_noise)[i]));
    }
    out.embedded.push_back(e);
    Var feat = char_word_feature(t, s, e, hy.num_kernels);
    out.highway_out.push_back(feat);
    reprs.push_back(feat);
  }

  const auto hdim = static_cast<std::size_t>(hy.hidden);
  Var h_last{-1};
  std::vector<Var> layer_in = reprs;
  for (std::size_t l = 0; l < s.lstm.size(); ++l) {
    Var h = t.leaf(Tensor::zeros({hdim}));
    Var c = t.leaf(Tensor::zeros({hdim}));
    std::vector<Var> layer_out;
    for (Var step_in : layer_in) {
      Var c_next{-1};
      h = lstm_step(t, p.lstm[l], s.lstm[l], step_in, h, c, c_next);
      c = c_next;
      layer_out.push_back(h);
    }
    h_last = h;
    layer_in = layer_out;
  }
  if (x.word_count() == 0 || s.lstm.empty()) h_last = t.leaf(Tensor::zeros({hdim}));

  out.logits = t.affine(h_last, s.out_w, s.out_b);
  return out;
}

namespace {

Prediction prediction_from_logits(const Tensor& logits) {
  Prediction pred;
  pred.probs = Tape::softmax(logits);
  pred.label = static_cast<int>(
      std::max_element(pred.probs.begin(), pred.probs.end()) - pred.probs.begin());
  pred.confidence = pred.probs[pred.label];
  return pred;
}

}  // namespace

Prediction char_predict(const CharModelParams& p, const corpus::OneHotText& x) {
  Tape t(false);
  auto fwd = char_forward(t, p, x);
  return prediction_from_logits(t.value(fwd.logits));
}

EvalResult char_eval(const CharModelParams& p, const corpus::OneHotText& x, int gold) {
  Tape t(false);
  auto fwd = char_forward(t, p, x);
  EvalResult r;
  r.pred = prediction_from_logits(t.value(fwd.logits));
  r.loss = t.value(t.softmax_cross_entropy(fwd.logits, gold)).item();
  return r;
}

double char_loss_at(const CharModelParams& p, const corpus::OneHotText& x,
                    const std::vector<diff::Tensor>& word_mats, int gold) {
  Tape t(false);
  CharForwardOptions opts;
  opts.input_override = &word_mats;
  auto fwd = char_forward(t, p, x, opts);
  return t.value(t.softmax_cross_entropy(fwd.logits, gold)).item();
}

GradEval char_loss_grad(const CharModelParams& p, const corpus::OneHotText& x, int gold) {
  Tape t;
  auto fwd = char_forward(t, p, x);
  Var loss = t.softmax_cross_entropy(fwd.logits, gold);
  GradEval r;
  r.pred = prediction_from_logits(t.value(fwd.logits));
  r.loss = t.value(loss).item();
  t.backward(loss);
  const int m = x.max_words(), n = x.max_word_len(), V = x.alphabet_size();
  std::vector<double> g(static_cast<std::size_t>(m) * n * V, 0.0);
  for (int i = 0; i < m; ++i) {
    const Tensor wg = t.grad(fwd.input_words[i]);
    std::copy(wg.vec().begin(), wg.vec().end(),
              g.begin() + static_cast<std::size_t>(i) * n * V);
  }
  r.input_grad = Tensor({static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                         static_cast<std::size_t>(V)},
                        std::move(g));
  return r;
}

std::vector<double> word_representation(const CharModelParams& p, const std::string& word) {
  const auto& hy = p.hyper;
  std::string w = p.lowercased ? corpus::lowercased(word) : word;
  if (static_cast<int>(w.size()) > hy.max_word_len - 1) w.resize(hy.max_word_len - 1);
  corpus::OneHotText x = corpus::encode(w, p.alphabet, hy.max_word_len, 1);
  if (x.word_count() == 0) throw ContractError("word_representation: empty word");
  Tape t(false);
  CharStage s = stage_char_params(t, p);
  Var e = t.matmul(t.leaf(x.word_matrix(0)), s.emb);
  Var feat = char_word_feature(t, s, e, hy.num_kernels);
  return t.value(feat).vec();
}

// ---------------------------------------------------------------------------
// Word model
// ---------------------------------------------------------------------------

WordModelParams init_word_model(const WordHyper& hyper, const std::vector<std::string>& words,
                                std::uint64_t seed, const PretrainedEmbeddings* pretrained,
                                bool lowercased) {
  WordModelParams p;
  p.hyper = hyper;
  p.lowercased = lowercased;
  std::set<std::string> uniq(words.begin(), words.end());
  p.vocab = {"<pad>", "<unk>"};
  p.vocab.insert(p.vocab.end(), uniq.begin(), uniq.end());
  p.hyper.vocab_size = static_cast<int>(p.vocab.size());
  for (std::size_t i = 0; i < p.vocab.size(); ++i) p.word_index[p.vocab[i]] = static_cast<int>(i);

  Rng rng = substream(seed, "init_word");
  const auto vs = static_cast<std::size_t>(p.hyper.vocab_size);
  const auto d = static_cast<std::size_t>(hyper.word_dim);
  std::vector<double> emb(vs * d, 0.0);
  for (std::size_t i = 1; i < vs; ++i) {  // PAD row stays zero initially
    const std::vector<double>* row = nullptr;
    if (pretrained && i >= 2) {
      auto it = pretrained->find(p.vocab[i]);
      if (it != pretrained->end()) row = &it->second;
    }
    for (std::size_t j = 0; j < d; ++j) {
      emb[i * d + j] = row ? (j < row->size() ? (*row)[j] : 0.0) : rng.uniform(-0.25, 0.25);
    }
  }
  p.embedding = Tensor({vs, d}, std::move(emb));
  for (int w : hyper.kernel_widths) {
    p.conv_kernels.push_back(xavier({static_cast<std::size_t>(w), d,
                                     static_cast<std::size_t>(hyper.kernels_per_width)},
                                    static_cast<std::size_t>(w) * d,
                                    static_cast<std::size_t>(hyper.kernels_per_width), rng));
  }
  const auto feat = static_cast<std::size_t>(hyper.kernel_widths.size()) *
                    static_cast<std::size_t>(hyper.kernels_per_width);
  p.out_w = xavier({feat, static_cast<std::size_t>(hyper.num_classes)}, feat,
                   static_cast<std::size_t>(hyper.num_classes), rng);
  p.out_b = Tensor::zeros({static_cast<std::size_t>(hyper.num_classes)});
  return p;
}

std::vector<std::pair<std::string, diff::Tensor*>> tensor_refs(WordModelParams& p) {
  std::vector<std::pair<std::string, Tensor*>> refs;
  refs.emplace_back("embedding", &p.embedding);
  for (std::size_t i = 0; i < p.conv_kernels.size(); ++i) {
    refs.emplace_back("conv" + std::to_string(p.hyper.kernel_widths[i]), &p.conv_kernels[i]);
  }
  refs.emplace_back("out_w", &p.out_w);
  refs.emplace_back("out_b", &p.out_b);
  return refs;
}

std::vector<std::pair<std::string, const diff::Tensor*>> tensor_refs(const WordModelParams& p) {
  auto mut = tensor_refs(const_cast<WordModelParams&>(p));
  std::vector<std::pair<std::string, const Tensor*>> refs;
  refs.reserve(mut.size());
  for (auto& [n, t] : mut) refs.emplace_back(n, t);
  return refs;
}

WordExample encode_sentence(const WordModelParams& p, const std::string& text, int label) {
  WordExample ex;
  ex.label = label;
  ex.tokens = corpus::tokenize(p.lowercased ? corpus::lowercased(text) : text);
  if (ex.tokens.empty()) throw ContractError("encode_sentence: empty sentence");
  for (const auto& tok : ex.tokens) ex.ids.push_back(p.id_of(tok));
  const int min_len = *std::max_element(p.hyper.kernel_widths.begin(),
                                        p.hyper.kernel_widths.end());
  while (static_cast<int>(ex.ids.size()) < min_len) ex.ids.push_back(WordModelParams::kPadId);
  return ex;
}

WordForward word_forward(Tape& t, const WordModelParams& p, const std::vector<int>& ids,
                         const diff::Tensor* input_override) {
  if (ids.empty()) throw ContractError("word_forward: empty sentence");
  const auto len = ids.size();
  const auto vs = static_cast<std::size_t>(p.hyper.vocab_size);
  Tensor input;
  if (input_override) {
    if (input_override->shape() != std::vector<std::size_t>{len, vs}) {
      throw ShapeError("word_forward: override shape mismatch");
    }
    input = *input_override;
  } else {
    std::vector<double> onehot(len * vs, 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      const int id = ids[i];
      if (id < 0 || id >= p.hyper.vocab_size) {
        throw ContractError("word_forward: word id out of range");
      }
      onehot[i * vs + id] = 1.0;
    }
    input = Tensor({len, vs}, std::move(onehot));
  }

  WordForward out;
  Var emb = t.leaf(p.embedding);
  out.param_leaves.push_back(emb);
  std::vector<Var> kerns;
  for (const auto& k : p.conv_kernels) {
    kerns.push_back(t.leaf(k));
    out.param_leaves.push_back(kerns.back());
  }
  Var ow = t.leaf(p.out_w);
  Var ob = t.leaf(p.out_b);
  out.param_leaves.push_back(ow);
  out.param_leaves.push_back(ob);

  out.input = t.leaf(std::move(input));
  Var e = t.matmul(out.input, emb);
  std::vector<Var> pooled;
  for (Var kern : kerns) {
    pooled.push_back(t.max_over_time(t.relu(t.conv1d(e, kern))));
  }
  Var feat = t.concat(pooled);
  out.logits = t.affine(feat, ow, ob);
  return out;
}

Prediction word_predict(const WordModelParams& p, const std::vector<int>& ids) {
  Tape t(false);
  auto fwd = word_forward(t, p, ids);
  return prediction_from_logits(t.value(fwd.logits));
}

EvalResult word_eval(const WordModelParams& p, const std::vector<int>& ids, int gold) {
  Tape t(false);
  auto fwd = word_forward(t, p, ids);
  EvalResult r;
  r.pred = prediction_from_logits(t.value(fwd.logits));
  r.loss = t.value(t.softmax_cross_entropy(fwd.logits, gold)).item();
  return r;
}

double word_loss_at(const WordModelParams& p, const diff::Tensor& input, int gold) {
  Tape t(false);
  std::vector<int> ids(input.dim(0), 0);  // ids unused under override
  auto fwd = word_forward(t, p, ids, &input);
  return t.value(t.softmax_cross_entropy(fwd.logits, gold)).item();
}

WordGradEval word_loss_grad(const WordModelParams& p, const std::vector<int>& ids, int gold) {
  Tape t;
  auto fwd = word_forward(t, p, ids);
  Var loss = t.softmax_cross_entropy(fwd.logits, gold);
  WordGradEval r;
  r.pred = prediction_from_logits(t.value(fwd.logits));
  r.loss = t.value(loss).item();
  t.backward(loss);
  r.input_grad = t.grad(fwd.input);
  return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct FlatGrad {
  std::vector<double> data;
  std::vector<std::size_t> offsets;  // one per tensor, plus total at the end

  template <typename Params>
  explicit FlatGrad(const Params& p) {
    std::size_t total = 0;
    for (const auto& [name, t] : tensor_refs(p)) {
      offsets.push_back(total);
      total += t->size();
    }
    offsets.push_back(total);
    data.assign(total, 0.0);
  }

  void reset() { std::fill(data.begin(), data.end(), 0.0); }

  void accumulate(std::size_t tensor_idx, const Tensor& g) {
    const std::size_t off = offsets[tensor_idx];
    for (std::size_t i = 0; i < g.size(); ++i) data[off + i] += g[i];
  }

  void scale_and_clip(double scale, double clip_norm) {
    double sq = 0.0;
    for (double& v : data) {
      v *= scale;
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (clip_norm > 0.0 && norm > clip_norm) {
      const double s = clip_norm / norm;
      for (double& v : data) v *= s;
    }
  }

  template <typename Params>
  void apply_sgd(Params& p, double lr) const {
    std::size_t idx = 0;
    for (auto& [name, t] : tensor_refs(p)) {
      const std::size_t off = offsets[idx++];
      std::vector<double> next(t->vec());
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= lr * data[off + i];
      *t = Tensor(t->shape(), std::move(next));
    }
  }
};

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = substream(seed, "train_shuffle", static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  return order;
}

}  // namespace

CharTrainResult train_char(CharModelParams params,
                           const std::vector<corpus::LabeledExample>& train_set,
                           const std::vector<corpus::LabeledExample>& dev_set,
                           const TrainConfig& config, const BatchAugmenter& augment) {
  if (config.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (config.clip_norm <= 0.0) throw ContractError("train: clip_norm must be > 0");

  CharTrainResult result;
  FlatGrad grad(params);
  CharModelParams best = params;
  double best_acc = -1.0;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = shuffled_indices(train_set.size(), config.seed, epoch);
    double epoch_loss = 0.0;
    long epoch_count = 0;
    for (std::size_t start = 0, batch_no = 0; start < order.size();
         start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const corpus::LabeledExample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      std::vector<AdvExample> adv;
      if (augment) adv = augment(params, batch);

      grad.reset();
      try {
        for (const auto* ex : batch) {
          Tape t;
          auto fwd = char_forward(t, params, ex->x);
          Var loss = t.softmax_cross_entropy(fwd.logits, ex->label);
          const double lv = t.value(loss).item();
          if (!std::isfinite(lv)) throw NumericError("loss not finite");
          epoch_loss += lv;
          ++epoch_count;
          t.backward(loss);
          for (std::size_t pi = 0; pi < fwd.param_leaves.size(); ++pi) {
            grad.accumulate(pi, t.grad(fwd.param_leaves[pi]));
          }
        }
        for (const auto& ax : adv) {
          Tape t;
          CharForwardOptions opts;
          if (!ax.embedding_noise.empty()) opts.embedding_noise = &ax.embedding_noise;
          auto fwd = char_forward(t, params, ax.x, opts);
          Var loss = t.softmax_cross_entropy(fwd.logits, ax.label);
          if (!std::isfinite(t.value(loss).item())) throw NumericError("loss not finite");
          t.backward(loss);
          for (std::size_t pi = 0; pi < fwd.param_leaves.size(); ++pi) {
            grad.accumulate(pi, t.grad(fwd.param_leaves[pi]));
          }
        }
      } catch (const NumericError& e) {
        throw TrainError("training diverged at epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(batch_no) + ": " + e.what());
      }
      grad.scale_and_clip(1.0 / static_cast<double>(batch.size() + adv.size()),
                          config.clip_norm);
      grad.apply_sgd(params, config.learning_rate);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_count ? epoch_loss / epoch_count : 0.0;
    m.dev_acc = dev_set.empty() ? 0.0 : evaluate_char(params, dev_set).accuracy;
    result.metrics.push_back(m);

    if (dev_set.empty() || m.dev_acc > best_acc) {
      best_acc = m.dev_acc;
      best = params;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

WordTrainResult train_word(WordModelParams params, const std::vector<WordExample>& train_set,
                           const std::vector<WordExample>& dev_set, const TrainConfig& config) {
  if (config.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (config.clip_norm <= 0.0) throw ContractError("train: clip_norm must be > 0");

  WordTrainResult result;
  FlatGrad grad(params);
  WordModelParams best = params;
  double best_acc = -1.0;
  int best_epoch = 0;
  const std::size_t n_params = grad.offsets.size() - 1;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = shuffled_indices(train_set.size(), config.seed, epoch);
    double epoch_loss = 0.0;
    long epoch_count = 0;
    for (std::size_t start = 0, batch_no = 0; start < order.size();
         start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      grad.reset();
      std::size_t count = 0;
      try {
        for (std::size_t i = start; i < end; ++i, ++count) {
          const auto& ex = train_set[order[i]];
          Tape t;
          auto fwd = word_forward(t, params, ex.ids);
          Var loss = t.softmax_cross_entropy(fwd.logits, ex.label);
          const double lv = t.value(loss).item();
          if (!std::isfinite(lv)) throw NumericError("loss not finite");
          epoch_loss += lv;
          ++epoch_count;
          t.backward(loss);
          for (std::size_t pi = 0; pi < n_params; ++pi) {
            grad.accumulate(pi, t.grad(fwd.param_leaves[pi]));
          }
        }
      } catch (const NumericError& e) {
        throw TrainError("training diverged at epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(batch_no) + ": " + e.what());
      }
      grad.scale_and_clip(1.0 / static_cast<double>(count), config.clip_norm);
      grad.apply_sgd(params, config.learning_rate);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_count ? epoch_loss / epoch_count : 0.0;
    m.dev_acc = dev_set.empty() ? 0.0 : evaluate_word(params, dev_set).accuracy;
    result.metrics.push_back(m);

    if (dev_set.empty() || m.dev_acc > best_acc) {
      best_acc = m.dev_acc;
      best = params;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }
  result.params = std::move(best);
  return result;
}

Evaluation evaluate_char(const CharModelParams& p,
                         const std::vector<corpus::LabeledExample>& examples) {
  Evaluation ev;
  const int cls = p.hyper.num_classes;
  ev.confusion.assign(cls, std::vector<long>(cls, 0));
  long correct = 0;
  for (const auto& ex : examples) {
    const auto pred = char_predict(p, ex.x);
    ev.confusion[ex.label][pred.label]++;
    if (pred.label == ex.label) ++correct;
  }
  ev.accuracy = examples.empty() ? 0.0 : static_cast<double>(correct) / examples.size();
  return ev;
}

Evaluation evaluate_word(const WordModelParams& p, const std::vector<WordExample>& examples) {
  Evaluation ev;
  const int cls = p.hyper.num_classes;
  ev.confusion.assign(cls, std::vector<long>(cls, 0));
  long correct = 0;
  for (const auto& ex : examples) {
    const auto pred = word_predict(p, ex.ids);
    ev.confusion[ex.label][pred.label]++;
    if (pred.label == ex.label) ++correct;
  }
  ev.accuracy = examples.empty() ? 0.0 : static_cast<double>(correct) / examples.size();
  return ev;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "HOTFLIP1\n";
constexpr std::size_t kMagicLen = 9;

template <typename Params>
void write_checkpoint(const Params& p, const json& header_extra, const std::string& kind,
                      const std::string& path) {
  json header = header_extra;
  header["format"] = 1;
  header["kind"] = kind;
  json tensors = json::array();
  std::size_t offset = 0;
  std::string payload;
  for (const auto& [name, t] : tensor_refs(p)) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t->shape();
    entry["offset"] = offset;
    entry["count"] = t->size();
    tensors.push_back(entry);
    const auto bytes = t->size() * sizeof(double);
    const std::size_t at = payload.size();
    payload.resize(at + bytes);
    std::memcpy(payload.data() + at, t->data(), bytes);
    offset += bytes;
  }
  header["tensors"] = tensors;

  const std::string hdr = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kMagic, kMagicLen);
  const std::uint64_t hlen = hdr.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("failed writing " + path);
}

json read_checkpoint_header(std::ifstream& in, const std::string& path) {
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw ParseError(path + ": not a HOTFLIP1 checkpoint");
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1ULL << 31)) throw ParseError(path + ": corrupt header length");
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ParseError(path + ": truncated header");
  try {
    return json::parse(hdr);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": bad header json: " + e.what());
  }
}

template <typename Params>
void read_payload_into(Params& p, const json& header, std::ifstream& in,
                       const std::string& path) {
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto refs = tensor_refs(p);
  if (header.at("tensors").size() != refs.size()) {
    throw ParseError(path + ": tensor count mismatch");
  }
  std::size_t idx = 0;
  for (const auto& entry : header.at("tensors")) {
    auto& [name, tp] = refs[idx++];
    if (entry.at("name").get<std::string>() != name) {
      throw ParseError(path + ": unexpected tensor order, found " +
                       entry.at("name").get<std::string>() + " wanted " + name);
    }
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto count = entry.at("count").get<std::size_t>();
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + count * sizeof(double) > payload.size()) {
      throw ParseError(path + ": payload truncated for tensor " + name);
    }
    std::vector<double> data(count);
    std::memcpy(data.data(), payload.data() + offset, count * sizeof(double));
    *tp = Tensor(shape, std::move(data));
  }
}

}  // namespace

void save_char_model(const CharModelParams& p, const std::string& path) {
  json h;
  h["hyper"] = {{"alphabet_size", p.hyper.alphabet_size},
                {"char_dim", p.hyper.char_dim},
                {"kernel_width", p.hyper.kernel_width},
                {"num_kernels", p.hyper.num_kernels},
                {"highway_layers", p.hyper.highway_layers},
                {"hidden", p.hyper.hidden},
                {"lstm_layers", p.hyper.lstm_layers},
                {"num_classes", p.hyper.num_classes},
                {"max_words", p.hyper.max_words},
                {"max_word_len", p.hyper.max_word_len}};
  std::vector<int> alpha_bytes;
  for (char c : p.alphabet.chars()) alpha_bytes.push_back(static_cast<unsigned char>(c));
  h["alphabet"] = alpha_bytes;
  h["lowercased"] = p.lowercased;
  h["vocab"] = p.vocab_words;
  write_checkpoint(p, h, "char", path);
}

CharModelParams load_char_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const json h = read_checkpoint_header(in, path);
  if (h.at("kind") != "char") throw ParseError(path + ": not a char model checkpoint");

  CharHyper hy;
  const auto& jh = h.at("hyper");
  hy.alphabet_size = jh.at("alphabet_size");
  hy.char_dim = jh.at("char_dim");
  hy.kernel_width = jh.at("kernel_width");
  hy.num_kernels = jh.at("num_kernels");
  hy.highway_layers = jh.at("highway_layers");
  hy.hidden = jh.at("hidden");
  hy.lstm_layers = jh.at("lstm_layers");
  hy.num_classes = jh.at("num_classes");
  hy.max_words = jh.at("max_words");
  hy.max_word_len = jh.at("max_word_len");

  std::vector<char> chars;
  for (int b : h.at("alphabet").get<std::vector<int>>()) chars.push_back(static_cast<char>(b));
  corpus::Alphabet alphabet(chars);

  CharModelParams p = init_char_model(hy, alphabet, h.at("vocab").get<std::vector<std::string>>(),
                                      /*seed=*/0, h.at("lowercased").get<bool>());
  read_payload_into(p, h, in, path);
  return p;
}

void save_word_model(const WordModelParams& p, const std::string& path) {
  json h;
  h["hyper"] = {{"vocab_size", p.hyper.vocab_size},
                {"word_dim", p.hyper.word_dim},
                {"kernel_widths", p.hyper.kernel_widths},
                {"kernels_per_width", p.hyper.kernels_per_width},
                {"num_classes", p.hyper.num_classes}};
  h["vocab"] = p.vocab;
  h["lowercased"] = p.lowercased;
  write_checkpoint(p, h, "word", path);
}

WordModelParams load_word_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const json h = read_checkpoint_header(in, path);
  if (h.at("kind") != "word") throw ParseError(path + ": not a word model checkpoint");

  WordHyper hy;
  const auto& jh = h.at("hyper");
  hy.vocab_size = jh.at("vocab_size");
  hy.word_dim = jh.at("word_dim");
  hy.kernel_widths = jh.at("kernel_widths").get<std::vector<int>>();
  hy.kernels_per_width = jh.at("kernels_per_width");
  hy.num_classes = jh.at("num_classes");

  const auto vocab = h.at("vocab").get<std::vector<std::string>>();
  if (vocab.size() < 2 || vocab[0] != "<pad>" || vocab[1] != "<unk>") {
    throw ParseError(path + ": malformed vocabulary");
  }
  WordModelParams p = init_word_model(
      hy, std::vector<std::string>(vocab.begin() + 2, vocab.end()), /*seed=*/0, nullptr,
      h.at("lowercased").get<bool>());
  if (p.vocab != vocab) throw ParseError(path + ": vocabulary does not round-trip");
  read_payload_into(p, h, in, path);
  return p;
}

std::string checkpoint_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_checkpoint_header(in, path).at("kind").get<std::string>();
}

}  // namespace hotflip::models
