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

#ifndef HOTFLIP_SYNTHDATA_HPP
#define HOTFLIP_SYNTHDATA_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace hotflip::synth {

// Toy corpora in the supported file formats. Four news-flavored topic pools
// for the char classifier, and a two-pool sentiment corpus (with matching
// embedding / part-of-speech / stop-word resources) for the word classifier.

struct AgRow {
  int cls = 1;  // 1-4 as in the CSV format
  std::string title;
  std::string description;
};

struct AgNewsOptions {
  int count = 1000;
  std::uint64_t seed = 1;
  int title_words_min = 2;
  int title_words_max = 4;
  int body_words_min = 10;
  int body_words_max = 18;
  /// Probability a word is drawn from the class pool rather than fillers.
  double class_word_prob = 0.5;
  /// Probability a body word comes from a different class's pool instead;
  /// keeps every document genuinely ambiguous.
  double cross_class_prob = 0.0;
  /// Use pools spelled from ten letters only; keeps the alphabet small.
  bool restricted_charset = false;
};

std::vector<AgRow> make_agnews_rows(const AgNewsOptions& opts);
void write_agnews_csv(const std::string& path, const std::vector<AgRow>& rows);

struct SstRow {
  int label = 0;
  std::string sentence;
};

struct SstOptions {
  int count = 400;
  std::uint64_t seed = 1;
  int words_min = 6;
  int words_max = 12;
  /// Probability a sentiment word is drawn from the pool opposite the label.
  double contradiction_prob = 0.15;
};

std::vector<SstRow> make_sst_rows(const SstOptions& opts);
void write_sst_tsv(const std::string& path, const std::vector<SstRow>& rows);

/// Embeddings over the sentiment vocabulary with synonym clusters whose
/// intra-cluster cosine exceeds 0.8. Text format with a `<count> <dim>`
/// header line.
void write_sst_embeddings(const std::string& path, std::uint64_t seed, int dim = 20);
/// `word<TAB>tag` lexicon covering the sentiment vocabulary.
void write_sst_pos_lexicon(const std::string& path);
/// Small stop-word list matching the sentiment corpus fillers.
void write_sst_stopwords(const std::string& path);

}  // namespace hotflip::synth

#endif  // HOTFLIP_SYNTHDATA_HPP
