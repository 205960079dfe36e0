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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "hotflip/corpus.hpp"
#include "hotflip/models.hpp"
#include "hotflip/synthdata.hpp"
#include "hotflip/util.hpp"
#include "testutil.hpp"

using namespace hotflip;
using namespace hotflip::models;
using hotflip::corpus::Alphabet;
using hotflip::corpus::LabeledExample;
using hotflip::corpus::OneHotText;
using hotflip::testutil::central_diff;
using hotflip::testutil::rel_err;

namespace {

struct TinySetup {
  Alphabet alphabet;
  CharModelParams params;
  std::vector<corpus::RawExample> corpus;
};

TinySetup make_tiny_char_model(std::uint64_t seed = 7) {
  TinySetup s;
  synth::AgNewsOptions opts;
  opts.count = 60;
  opts.seed = seed;
  opts.body_words_min = 4;
  opts.body_words_max = 7;
  opts.title_words_min = 1;
  opts.title_words_max = 2;
  auto rows = synth::make_agnews_rows(opts);
  auto csv = std::filesystem::temp_directory_path() / ("tiny_ag_" + std::to_string(seed) + ".csv");
  synth::write_agnews_csv(csv.string(), rows);
  s.corpus = corpus::load_agnews(csv.string());
  s.alphabet = corpus::build_alphabet(s.corpus);

  CharHyper hy;
  hy.alphabet_size = s.alphabet.size();
  hy.char_dim = 5;
  hy.kernel_width = 3;
  hy.num_kernels = 8;
  hy.highway_layers = 1;
  hy.hidden = 7;
  hy.lstm_layers = 1;
  hy.num_classes = 4;
  hy.max_words = 6;
  hy.max_word_len = 8;
  std::vector<std::string> vocab_words;
  for (const auto& w : corpus::build_word_vocab(s.corpus).words) vocab_words.push_back(w);
  s.params = init_char_model(hy, s.alphabet, vocab_words, seed);
  return s;
}

std::vector<diff::Tensor> word_matrices(const OneHotText& x) {
  std::vector<diff::Tensor> mats;
  for (int i = 0; i < x.max_words(); ++i) mats.push_back(x.word_matrix(i));
  return mats;
}

}  // namespace

TEST_CASE("all-padding input yields finite logits") {
  auto s = make_tiny_char_model();
  OneHotText x = corpus::encode("", s.alphabet, s.params.hyper.max_word_len,
                                s.params.hyper.max_words);
  auto pred = char_predict(s.params, x);
  for (double p : pred.probs) CHECK(std::isfinite(p));
  double sum = std::accumulate(pred.probs.begin(), pred.probs.end(), 0.0);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("forward is a pure function of params and input") {
  auto s = make_tiny_char_model();
  OneHotText x = corpus::encode(s.corpus[0].text, s.alphabet, s.params.hyper.max_word_len,
                                s.params.hyper.max_words);
  auto p1 = char_predict(s.params, x);
  auto p2 = char_predict(s.params, x);
  CHECK(p1.probs == p2.probs);
  CHECK(p1.label == p2.label);
}

TEST_CASE("uniform logits give loss ln(classes)") {
  auto s = make_tiny_char_model();
  s.params.out_w = diff::Tensor::zeros(s.params.out_w.shape());
  s.params.out_b = diff::Tensor::zeros(s.params.out_b.shape());
  OneHotText x = corpus::encode(s.corpus[0].text, s.alphabet, s.params.hyper.max_word_len,
                                s.params.hyper.max_words);
  auto ev = char_eval(s.params, x, 1);
  CHECK(ev.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("char input gradient matches finite differences and chain rule") {
  auto s = make_tiny_char_model();
  OneHotText x = corpus::encode(s.corpus[1].text, s.alphabet, s.params.hyper.max_word_len,
                                s.params.hyper.max_words);
  const int gold = s.corpus[1].label;
  auto ge = char_loss_grad(s.params, x, gold);
  REQUIRE(ge.input_grad.shape() ==
          std::vector<std::size_t>{static_cast<std::size_t>(x.max_words()),
                                   static_cast<std::size_t>(x.max_word_len()),
                                   static_cast<std::size_t>(x.alphabet_size())});

  // every entry exists and is finite, padding positions included
  for (std::size_t i = 0; i < ge.input_grad.size(); ++i) {
    CHECK(std::isfinite(ge.input_grad[i]));
  }

  // At the one-hot vertex, probe coordinates inside real words: identical
  // all-padding conv windows tie exactly, and the loss is kinked along
  // directions that perturb a tied max.
  auto mats = word_matrices(x);
  const int n = x.max_word_len(), V = x.alphabet_size();
  Rng rng(99);
  int checked = 0;
  while (checked < 25) {
    const int wi = static_cast<int>(rng.index(x.word_count()));
    const int j = static_cast<int>(rng.index(x.word_length(wi)));
    const std::size_t coord = static_cast<std::size_t>(j) * V + rng.index(V);
    auto f = [&](const std::vector<double>& v) {
      auto probe = mats;
      probe[wi] = diff::Tensor(probe[wi].shape(), v);
      return char_loss_at(s.params, x, probe, gold);
    };
    const double fd = central_diff(f, mats[wi].vec(), coord);
    const double an = ge.input_grad.at3(wi, static_cast<int>(coord) / V,
                                        static_cast<int>(coord) % V);
    if (std::abs(an) < 1e-7 && std::abs(fd) < 1e-7) continue;  // both ~0, uninformative
    CHECK(rel_err(an, fd) < 1e-3);
    ++checked;
  }

  // Off the vertex every tie is broken, so every coordinate must agree.
  {
    auto smooth = mats;
    Rng prng(7);
    for (auto& mt : smooth) {
      std::vector<double> v(mt.vec());
      for (double& e : v) e += prng.uniform(1e-3, 2e-3);
      mt = diff::Tensor(mt.shape(), std::move(v));
    }
    diff::Tape t;
    CharForwardOptions opts;
    opts.input_override = &smooth;
    auto fwd = char_forward(t, s.params, x, opts);
    auto loss = t.softmax_cross_entropy(fwd.logits, gold);
    t.backward(loss);
    Rng crng(12);
    for (int trial = 0; trial < 20; ++trial) {
      const int wi = static_cast<int>(crng.index(x.word_count()));
      const std::size_t coord = crng.index(static_cast<std::size_t>(n) * V);
      auto f = [&](const std::vector<double>& v) {
        auto probe = smooth;
        probe[wi] = diff::Tensor(probe[wi].shape(), v);
        return char_loss_at(s.params, x, probe, gold);
      };
      const double fd = central_diff(f, smooth[wi].vec(), coord);
      const diff::Tensor an_t = t.grad(fwd.input_words[wi]);
      const double an = an_t[coord];
      if (std::abs(an) < 1e-7 && std::abs(fd) < 1e-7) continue;
      CHECK(rel_err(an, fd) < 1e-3);
    }
  }

  // chain rule: grad w.r.t. one-hot rows equals (grad w.r.t. embedded) E^T
  diff::Tape t;
  auto fwd = char_forward(t, s.params, x);
  auto loss = t.softmax_cross_entropy(fwd.logits, gold);
  t.backward(loss);
  const auto& E = s.params.embedding;
  const int d = s.params.hyper.char_dim;
  for (int wi = 0; wi < x.word_count(); ++wi) {
    const diff::Tensor ge_emb = t.grad(fwd.embedded[wi]);
    const diff::Tensor gx = t.grad(fwd.input_words[wi]);
    for (int j = 0; j < n; ++j) {
      for (int v = 0; v < V; ++v) {
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += ge_emb.at2(j, c) * E.at2(v, c);
        CHECK(gx.at2(j, v) == doctest::Approx(dot).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("word model basics") {
  std::vector<std::string> words{"good", "bad", "movie", "story", "fine"};
  WordHyper hy;
  hy.word_dim = 6;
  hy.kernel_widths = {2, 3};
  hy.kernels_per_width = 4;
  auto p = init_word_model(hy, words, 3);

  SUBCASE("single-word sentence is padded and yields finite logits") {
    auto ex = encode_sentence(p, "good", 1);
    CHECK(ex.ids.size() == 3);  // padded to the widest kernel
    auto pred = word_predict(p, ex.ids);
    for (double v : pred.probs) CHECK(std::isfinite(v));
  }

  SUBCASE("empty sentence is rejected") {
    CHECK_THROWS_AS(encode_sentence(p, "  ", 0), ContractError);
  }

  SUBCASE("unknown words share the UNK row so swapping them changes nothing") {
    auto a = encode_sentence(p, "zebra movie xylophone", 0);
    auto b = encode_sentence(p, "xylophone movie zebra", 0);
    CHECK(word_predict(p, a.ids).probs == word_predict(p, b.ids).probs);
  }

  SUBCASE("input gradient matches finite differences") {
    auto ex = encode_sentence(p, "good movie bad story", 1);
    auto ge = word_loss_grad(p, ex.ids, ex.label);
    diff::Tensor input = [&] {
      const auto vs = static_cast<std::size_t>(p.hyper.vocab_size);
      std::vector<double> onehot(ex.ids.size() * vs, 0.0);
      for (std::size_t i = 0; i < ex.ids.size(); ++i) onehot[i * vs + ex.ids[i]] = 1.0;
      return diff::Tensor({ex.ids.size(), vs}, std::move(onehot));
    }();
    Rng rng(5);
    int checked = 0;
    while (checked < 20) {
      const std::size_t coord = rng.index(input.size());
      auto f = [&](const std::vector<double>& v) {
        return word_loss_at(p, diff::Tensor(input.shape(), v), ex.label);
      };
      const double fd = central_diff(f, input.vec(), coord);
      if (std::abs(ge.input_grad[coord]) < 1e-7 && std::abs(fd) < 1e-7) continue;
      CHECK(rel_err(ge.input_grad[coord], fd) < 1e-3);
      ++checked;
    }
  }
}

TEST_CASE("training learns a separable toy problem deterministically") {
  auto s = make_tiny_char_model(21);
  synth::AgNewsOptions opts;
  opts.count = 200;
  opts.seed = 55;
  opts.body_words_min = 4;
  opts.body_words_max = 6;
  opts.title_words_min = 1;
  opts.title_words_max = 2;
  opts.class_word_prob = 0.7;
  auto rows = synth::make_agnews_rows(opts);
  auto csv = std::filesystem::temp_directory_path() / "train_toy.csv";
  synth::write_agnews_csv(csv.string(), rows);
  auto raw = corpus::load_agnews(csv.string());
  // alphabet/vocab from the training corpus itself
  auto alphabet = corpus::build_alphabet(raw);
  CharHyper hy = s.params.hyper;
  hy.alphabet_size = alphabet.size();
  std::vector<std::string> vocab_words;
  for (const auto& w : corpus::build_word_vocab(raw).words) vocab_words.push_back(w);
  auto params = init_char_model(hy, alphabet, vocab_words, 11);

  auto examples = corpus::encode_examples(raw, alphabet, hy.max_word_len, hy.max_words);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.2;
  cfg.max_epochs = 5;
  cfg.seed = 13;

  auto r1 = train_char(params, examples, {}, cfg);
  const double train_acc = evaluate_char(r1.params, examples).accuracy;
  CHECK(train_acc > 0.25);  // strictly above the majority-free baseline
  CHECK(r1.metrics.size() == 5);

  // bitwise determinism
  auto r2 = train_char(params, examples, {}, cfg);
  auto refs1 = tensor_refs(r1.params);
  auto refs2 = tensor_refs(r2.params);
  for (std::size_t i = 0; i < refs1.size(); ++i) {
    CHECK(refs1[i].second->vec() == refs2[i].second->vec());
  }
}

TEST_CASE("a tiny clip threshold freezes training steps") {
  auto s = make_tiny_char_model(31);
  auto examples = corpus::encode_examples(s.corpus, s.alphabet, s.params.hyper.max_word_len,
                                          s.params.hyper.max_words);
  TrainConfig cfg;
  cfg.batch_size = 10;
  cfg.learning_rate = 1.0;
  cfg.clip_norm = 1e-9;
  cfg.max_epochs = 1;
  cfg.seed = 2;
  auto before = tensor_refs(s.params);
  std::vector<std::vector<double>> snapshot;
  for (auto& [n, t] : before) snapshot.push_back(t->vec());
  auto r = train_char(s.params, examples, {}, cfg);
  auto after = tensor_refs(r.params);
  const long num_batches = (static_cast<long>(examples.size()) + 9) / 10;
  for (std::size_t i = 0; i < after.size(); ++i) {
    for (std::size_t j = 0; j < after[i].second->size(); ++j) {
      // each batch moves parameters by at most lr * clip_norm in L2
      CHECK(std::abs((*after[i].second)[j] - snapshot[i][j]) <=
            cfg.learning_rate * cfg.clip_norm * num_batches + 1e-12);
    }
  }
}

TEST_CASE("training diverges loudly on an absurd learning rate") {
  auto s = make_tiny_char_model(41);
  auto examples = corpus::encode_examples(s.corpus, s.alphabet, s.params.hyper.max_word_len,
                                          s.params.hyper.max_words);
  TrainConfig cfg;
  cfg.batch_size = 20;
  cfg.learning_rate = 1e200;  // conv products overflow on the next forward
  cfg.clip_norm = 1e30;
  cfg.max_epochs = 3;
  cfg.seed = 3;
  CHECK_THROWS_AS(train_char(s.params, examples, {}, cfg), TrainError);
}

TEST_CASE("evaluate reports accuracy and a consistent confusion matrix") {
  auto s = make_tiny_char_model(51);
  auto examples = corpus::encode_examples(s.corpus, s.alphabet, s.params.hyper.max_word_len,
                                          s.params.hyper.max_words);
  // relabel with the model's own predictions: accuracy must be 1.0
  auto relabeled = examples;
  for (auto& ex : relabeled) ex.label = char_predict(s.params, ex.x).label;
  auto ev = evaluate_char(s.params, relabeled);
  CHECK(ev.accuracy == 1.0);

  auto ev2 = evaluate_char(s.params, examples);
  std::vector<long> per_class(4, 0);
  for (const auto& ex : examples) per_class[ex.label]++;
  for (int c = 0; c < 4; ++c) {
    const long row_sum = std::accumulate(ev2.confusion[c].begin(), ev2.confusion[c].end(), 0L);
    CHECK(row_sum == per_class[c]);
  }

  // confidences lie in (0,1] and probabilities sum to 1
  for (const auto& ex : examples) {
    auto pred = char_predict(s.params, ex.x);
    CHECK(pred.confidence > 0.0);
    CHECK(pred.confidence <= 1.0);
    CHECK(std::accumulate(pred.probs.begin(), pred.probs.end(), 0.0) ==
          doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("char checkpoint round-trips bit-exactly") {
  auto s = make_tiny_char_model(61);
  auto path = std::filesystem::temp_directory_path() / "char_ckpt.bin";
  save_char_model(s.params, path.string());
  CHECK(checkpoint_kind(path.string()) == "char");
  auto loaded = load_char_model(path.string());
  auto a = tensor_refs(s.params);
  auto b = tensor_refs(loaded);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->vec() == b[i].second->vec());  // bit-exact
  }
  CHECK(loaded.alphabet.chars() == s.params.alphabet.chars());
  CHECK(loaded.vocab_words == s.params.vocab_words);
  CHECK(loaded.hyper.num_kernels == s.params.hyper.num_kernels);

  // and the file is byte-identical when saved again
  auto path2 = std::filesystem::temp_directory_path() / "char_ckpt2.bin";
  save_char_model(loaded, path2.string());
  CHECK(util::read_file(path.string()) == util::read_file(path2.string()));
}

TEST_CASE("word checkpoint round-trips bit-exactly") {
  WordHyper hy;
  hy.word_dim = 6;
  hy.kernel_widths = {2, 3};
  hy.kernels_per_width = 4;
  auto p = init_word_model(hy, {"alpha", "beta", "gamma"}, 17);
  auto path = std::filesystem::temp_directory_path() / "word_ckpt.bin";
  save_word_model(p, path.string());
  CHECK(checkpoint_kind(path.string()) == "word");
  auto loaded = load_word_model(path.string());
  CHECK(loaded.vocab == p.vocab);
  auto a = tensor_refs(p);
  auto b = tensor_refs(loaded);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].second->vec() == b[i].second->vec());
  }
}

TEST_CASE("word_representation is the highway output of the char pipeline") {
  auto s = make_tiny_char_model(71);
  auto repr = word_representation(s.params, "summit");
  CHECK(repr.size() == static_cast<std::size_t>(s.params.hyper.num_kernels));
  // identical to the document pipeline's highway output for the same word
  OneHotText x = corpus::encode("summit", s.alphabet, s.params.hyper.max_word_len,
                                s.params.hyper.max_words);
  diff::Tape t(false);
  auto fwd = char_forward(t, s.params, x);
  CHECK(t.value(fwd.highway_out[0]).vec() == repr);
  CHECK_THROWS_AS(word_representation(s.params, "Ω"), EncodeError);
}

TEST_CASE("word model training learns sentiment toy data") {
  synth::SstOptions opts;
  opts.count = 200;
  opts.seed = 9;
  auto rows = synth::make_sst_rows(opts);
  auto tsv = std::filesystem::temp_directory_path() / "sst_toy.tsv";
  synth::write_sst_tsv(tsv.string(), rows);
  auto loaded = corpus::load_sst_binary(tsv.string());

  std::set<std::string> vocab_set;
  for (const auto& ex : loaded.examples) {
    for (const auto& t : corpus::tokenize(ex.text)) vocab_set.insert(t);
  }
  WordHyper hy;
  hy.word_dim = 8;
  hy.kernel_widths = {2, 3};
  hy.kernels_per_width = 6;
  auto p = init_word_model(hy, {vocab_set.begin(), vocab_set.end()}, 23);

  std::vector<WordExample> examples;
  for (const auto& ex : loaded.examples) {
    examples.push_back(encode_sentence(p, ex.text, ex.label));
  }
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.3;
  cfg.max_epochs = 8;
  cfg.seed = 99;
  auto r = train_word(p, examples, {}, cfg);
  CHECK(evaluate_word(r.params, examples).accuracy > 0.6);
}
