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

#ifndef HOTFLIP_CORPUS_HPP
#define HOTFLIP_CORPUS_HPP

#include <array>
#include <string>
#include <unordered_set>
#include <vector>

#include "hotflip/rng.hpp"
#include "hotflip/tensor.hpp"

namespace hotflip::corpus {

// Character alphabet with a reserved padding symbol at index 0. Real
// characters occupy dense indices 1..size()-1 in sorted byte order.
class Alphabet {
 public:
  static constexpr int kPad = 0;

  Alphabet() = default;
  /// chars: the real characters (duplicates ignored, order normalized).
  explicit Alphabet(const std::vector<char>& chars);

  int size() const { return static_cast<int>(chars_.size()) + 1; }
  bool contains(char c) const { return index_[static_cast<unsigned char>(c)] >= 0; }
  /// Throws EncodeError naming the character when it is not in the alphabet.
  int index_of(char c) const;
  /// Character for a real symbol index (>= 1).
  char char_at(int index) const;
  /// Real characters in index order (index 1 first).
  const std::vector<char>& chars() const { return chars_; }

 private:
  std::vector<char> chars_;
  std::array<int, 256> index_{};
};

// A document as the m x n x |V| one-hot character tensor. Stored compactly
// as symbol indices; the dense tensor view is materialized on demand. Word
// lengths are capped at n-1 so one trailing padding slot always remains.
class OneHotText {
 public:
  OneHotText() = default;
  OneHotText(std::vector<std::vector<int>> symbols, std::vector<int> lengths,
             int word_count, int alphabet_size);

  int word_count() const { return word_count_; }
  int max_words() const { return static_cast<int>(symbols_.size()); }
  int max_word_len() const {
    return symbols_.empty() ? 0 : static_cast<int>(symbols_[0].size());
  }
  int alphabet_size() const { return alphabet_size_; }
  int word_length(int i) const { return lengths_[i]; }
  int symbol(int i, int j) const { return symbols_[i][j]; }
  const std::vector<std::vector<int>>& symbols() const { return symbols_; }
  const std::vector<int>& lengths() const { return lengths_; }

  /// Non-padding characters in the document (spaces are not represented).
  long total_chars() const;

  /// One-hot matrix [n x |V|] for word i.
  diff::Tensor word_matrix(int i) const;
  /// Full dense tensor [m x n x |V|].
  diff::Tensor to_tensor() const;

  std::string word_string(int i, const Alphabet& alphabet) const;
  /// Words joined by single spaces.
  std::string decode(const Alphabet& alphabet) const;

 private:
  std::vector<std::vector<int>> symbols_;
  std::vector<int> lengths_;
  int word_count_ = 0;
  int alphabet_size_ = 0;
};

/// Loaded, not-yet-encoded example.
struct RawExample {
  std::string text;
  int label = 0;
};

/// Encoded example ready for a character model.
struct LabeledExample {
  OneHotText x;
  int label = 0;
  std::string raw;
};

/// Training-set word vocabulary; exact-match membership after the same
/// normalization used at encode time.
struct WordVocab {
  std::unordered_set<std::string> words;
  bool contains(const std::string& w) const { return words.count(w) > 0; }
  std::size_t size() const { return words.size(); }
};

struct SstLoadResult {
  std::vector<RawExample> examples;
  int skipped_lines = 0;
};

/// AG-news CSV: `"<class 1-4>","<title>","<description>"`. Text becomes
/// title + " " + description. Labels shift to 0-3.
std::vector<RawExample> load_agnews(const std::string& path, bool lowercase = true);

/// Binary-sentiment TSV: `<label>\t<sentence>` with label 0 or 1.
SstLoadResult load_sst_binary(const std::string& path, bool lowercase = true);

/// All characters appearing in the corpus, plus padding.
Alphabet build_alphabet(const std::vector<RawExample>& corpus);

/// All whitespace-delimited tokens in the corpus.
WordVocab build_word_vocab(const std::vector<RawExample>& corpus);

std::vector<std::string> tokenize(const std::string& text);
std::string lowercased(std::string s);

/// Encode text to the one-hot representation: words truncated to n-1 chars,
/// documents truncated to m words.
OneHotText encode(const std::string& text, const Alphabet& alphabet, int n, int m);

/// The text `encode` would reproduce: lowercase-free tokenization with the
/// same truncation to m words of n-1 chars.
std::string normalized_for_model(const std::string& text, int n, int m);

/// Deterministic disjoint split; dev gets floor(fraction * size) examples.
std::pair<std::vector<RawExample>, std::vector<RawExample>> dev_split(
    const std::vector<RawExample>& examples, double fraction, std::uint64_t seed);

std::vector<LabeledExample> encode_examples(const std::vector<RawExample>& raw,
                                            const Alphabet& alphabet, int n, int m);

}  // namespace hotflip::corpus

#endif  // HOTFLIP_CORPUS_HPP
