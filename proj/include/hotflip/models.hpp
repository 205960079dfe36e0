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

#ifndef HOTFLIP_MODELS_HPP
#define HOTFLIP_MODELS_HPP

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hotflip/corpus.hpp"
#include "hotflip/tape.hpp"

namespace hotflip::models {

// ---------------------------------------------------------------------------
// Character model: per-word one-hot x embedding -> temporal conv -> tanh ->
// max-over-time -> highway; word representations fed through an LSTM; last
// hidden state -> dense logits.
// ---------------------------------------------------------------------------

struct CharHyper {
  int alphabet_size = 0;
  int char_dim = 16;
  int kernel_width = 5;
  int num_kernels = 64;
  int highway_layers = 1;
  int hidden = 64;
  int lstm_layers = 1;
  int num_classes = 4;
  int max_words = 40;    // m
  int max_word_len = 16; // n
};

struct HighwayParams {
  diff::Tensor w_t, b_t;  // transform gate
  diff::Tensor w_h, b_h;  // candidate
};

struct LstmCellParams {
  diff::Tensor w_i, b_i, w_f, b_f, w_o, b_o, w_g, b_g;  // [(in+h) x h], [h]
};

struct CharModelParams {
  CharHyper hyper;
  corpus::Alphabet alphabet;
  std::vector<std::string> vocab_words;  // training vocabulary, sorted
  bool lowercased = true;

  diff::Tensor embedding;     // [V x d_c]; padding row trainable like any other
  diff::Tensor conv_kernels;  // [w x d_c x k]
  std::vector<HighwayParams> highway;
  std::vector<LstmCellParams> lstm;
  diff::Tensor out_w;  // [h x classes]
  diff::Tensor out_b;  // [classes]

  corpus::WordVocab vocab() const;
};

CharModelParams init_char_model(const CharHyper& hyper, const corpus::Alphabet& alphabet,
                                std::vector<std::string> vocab_words, std::uint64_t seed,
                                bool lowercased = true);

/// Named views of every parameter tensor, in a fixed order shared by the
/// optimizer and the checkpoint writer.
std::vector<std::pair<std::string, diff::Tensor*>> tensor_refs(CharModelParams& p);
std::vector<std::pair<std::string, const diff::Tensor*>> tensor_refs(const CharModelParams& p);

struct CharForwardOptions {
  /// Replace word one-hot matrices with arbitrary dense [n x V] tensors
  /// (loss landscape probes between vertices).
  const std::vector<diff::Tensor>* input_override = nullptr;
  /// Additive noise injected after the embedding lookup, one [n x d_c]
  /// tensor per real word.
  const std::vector<diff::Tensor>* embedding_noise = nullptr;
};

struct CharForward {
  diff::Var logits;
  std::vector<diff::Var> param_leaves;  // aligned with tensor_refs order
  std::vector<diff::Var> input_words;   // m leaves, [n x V]
  std::vector<diff::Var> embedded;      // word_count vars, [n x d_c]
  std::vector<diff::Var> highway_out;   // word_count vars, [k]
};

CharForward char_forward(diff::Tape& tape, const CharModelParams& p,
                         const corpus::OneHotText& x, const CharForwardOptions& opts = {});

struct Prediction {
  int label = -1;
  double confidence = 0.0;
  std::vector<double> probs;
};

struct EvalResult {
  double loss = 0.0;
  Prediction pred;
};

struct GradEval {
  double loss = 0.0;
  Prediction pred;
  diff::Tensor input_grad;  // [m x n x V], same shape as the one-hot tensor
};

Prediction char_predict(const CharModelParams& p, const corpus::OneHotText& x);
EvalResult char_eval(const CharModelParams& p, const corpus::OneHotText& x, int gold);
/// Loss at dense (not necessarily one-hot) word matrices; the probe used by
/// directional-derivative oracles.
double char_loss_at(const CharModelParams& p, const corpus::OneHotText& x,
                    const std::vector<diff::Tensor>& word_mats, int gold);
/// One forward + one backward; gradient of the loss w.r.t. the one-hot input.
GradEval char_loss_grad(const CharModelParams& p, const corpus::OneHotText& x, int gold);

/// Highway-layer output for a single word; the model's word representation.
std::vector<double> word_representation(const CharModelParams& p, const std::string& word);

// ---------------------------------------------------------------------------
// Word model: one-hot word vectors x embedding -> parallel convs (several
// widths) -> relu -> max-over-time -> concat -> dense softmax. Binary
// sentiment classifier.
// ---------------------------------------------------------------------------

struct WordHyper {
  int vocab_size = 0;  // including PAD and UNK rows
  int word_dim = 20;
  std::vector<int> kernel_widths{3, 4, 5};
  int kernels_per_width = 25;
  int num_classes = 2;
};

struct WordModelParams {
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;

  WordHyper hyper;
  std::vector<std::string> vocab;  // index order; [0]="<pad>", [1]="<unk>"
  std::unordered_map<std::string, int> word_index;
  bool lowercased = true;

  diff::Tensor embedding;  // [vocab x d_w]
  std::vector<diff::Tensor> conv_kernels;  // one [w x d_w x kpw] per width
  diff::Tensor out_w, out_b;

  int id_of(const std::string& w) const {
    auto it = word_index.find(w);
    return it == word_index.end() ? kUnkId : it->second;
  }
};

/// Pretrained embedding rows keyed by word; words not covered fall back to
/// random initialization.
using PretrainedEmbeddings = std::unordered_map<std::string, std::vector<double>>;

WordModelParams init_word_model(const WordHyper& hyper, const std::vector<std::string>& words,
                                std::uint64_t seed,
                                const PretrainedEmbeddings* pretrained = nullptr,
                                bool lowercased = true);

std::vector<std::pair<std::string, diff::Tensor*>> tensor_refs(WordModelParams& p);
std::vector<std::pair<std::string, const diff::Tensor*>> tensor_refs(const WordModelParams& p);

struct WordExample {
  std::vector<int> ids;             // padded to at least the widest kernel
  std::vector<std::string> tokens;  // unpadded
  int label = 0;
};

/// Tokenize and map to vocabulary ids; throws ContractError on empty text.
WordExample encode_sentence(const WordModelParams& p, const std::string& text, int label);

struct WordForward {
  diff::Var logits;
  std::vector<diff::Var> param_leaves;  // aligned with tensor_refs order
  diff::Var input;                      // [len x vocab] one-hot leaf
};

WordForward word_forward(diff::Tape& tape, const WordModelParams& p,
                         const std::vector<int>& ids,
                         const diff::Tensor* input_override = nullptr);

Prediction word_predict(const WordModelParams& p, const std::vector<int>& ids);
EvalResult word_eval(const WordModelParams& p, const std::vector<int>& ids, int gold);
double word_loss_at(const WordModelParams& p, const diff::Tensor& input, int gold);
struct WordGradEval {
  double loss = 0.0;
  Prediction pred;
  diff::Tensor input_grad;  // [len x vocab]
};
WordGradEval word_loss_grad(const WordModelParams& p, const std::vector<int>& ids, int gold);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 0.1;
  double clip_norm = 5.0;
  int max_epochs = 25;
  int patience = 10;
  std::uint64_t seed = 1;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_acc = 0.0;
};

/// Adversarial counterpart of a clean example. Either a modified text, or
/// the clean text plus per-word embedding noise.
struct AdvExample {
  corpus::OneHotText x;
  int label = 0;
  std::vector<diff::Tensor> embedding_noise;  // empty for textual examples
};

/// Called once per mini-batch with the current parameters; returned examples
/// are appended to the batch for this update only.
using BatchAugmenter = std::function<std::vector<AdvExample>(
    const CharModelParams&, const std::vector<const corpus::LabeledExample*>&)>;

struct CharTrainResult {
  CharModelParams params;  // best-dev checkpoint
  std::vector<EpochMetrics> metrics;
};

CharTrainResult train_char(CharModelParams params,
                           const std::vector<corpus::LabeledExample>& train_set,
                           const std::vector<corpus::LabeledExample>& dev_set,
                           const TrainConfig& config,
                           const BatchAugmenter& augment = nullptr);

struct WordTrainResult {
  WordModelParams params;
  std::vector<EpochMetrics> metrics;
};

WordTrainResult train_word(WordModelParams params, const std::vector<WordExample>& train_set,
                           const std::vector<WordExample>& dev_set, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Evaluation {
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;  // [gold][predicted]
};

Evaluation evaluate_char(const CharModelParams& p,
                         const std::vector<corpus::LabeledExample>& examples);
Evaluation evaluate_word(const WordModelParams& p, const std::vector<WordExample>& examples);

// ---------------------------------------------------------------------------
// Checkpoints: magic "HOTFLIP1\n", little-endian uint64 header length, JSON
// header (hyperparameters, alphabet/vocab, tensor names/shapes/byte offsets),
// then raw little-endian 64-bit float payload. Bit-exact round trip.
// ---------------------------------------------------------------------------

void save_char_model(const CharModelParams& p, const std::string& path);
CharModelParams load_char_model(const std::string& path);
void save_word_model(const WordModelParams& p, const std::string& path);
WordModelParams load_word_model(const std::string& path);
/// "char" or "word" without loading the payload.
std::string checkpoint_kind(const std::string& path);

}  // namespace hotflip::models

#endif  // HOTFLIP_MODELS_HPP
