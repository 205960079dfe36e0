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

#include "hotflip/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "hotflip/errors.hpp"

namespace hotflip::corpus {

Alphabet::Alphabet(const std::vector<char>& chars) {
  index_.fill(-1);
  std::set<char> uniq(chars.begin(), chars.end());
  chars_.assign(uniq.begin(), uniq.end());
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    index_[static_cast<unsigned char>(chars_[i])] = static_cast<int>(i) + 1;
  }
}

int Alphabet::index_of(char c) const {
  const int idx = index_[static_cast<unsigned char>(c)];
  if (idx < 0) {
    throw EncodeError(std::string("character '") + c + "' (byte " +
                      std::to_string(static_cast<unsigned char>(c)) +
                      ") is not in the alphabet");
  }
  return idx;
}

char Alphabet::char_at(int index) const {
  if (index <= 0 || index >= size()) {
    throw ContractError("char_at: index " + std::to_string(index) +
                        " is padding or out of range");
  }
  return chars_[index - 1];
}

OneHotText::OneHotText(std::vector<std::vector<int>> symbols, std::vector<int> lengths,
                       int word_count, int alphabet_size)
    : symbols_(std::move(symbols)),
      lengths_(std::move(lengths)),
      word_count_(word_count),
      alphabet_size_(alphabet_size) {
  const int m = max_words();
  const int n = max_word_len();
  if (static_cast<int>(lengths_.size()) != m || word_count_ < 0 || word_count_ > m) {
    throw ContractError("OneHotText: inconsistent word bookkeeping");
  }
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(symbols_[i].size()) != n) {
      throw ContractError("OneHotText: ragged symbol grid");
    }
    const int len = lengths_[i];
    if (len < 0 || len > n - 1) {
      throw ContractError("OneHotText: word length " + std::to_string(len) +
                          " outside [0, n-1]");
    }
    if ((i < word_count_) != (len > 0)) {
      throw ContractError("OneHotText: word count disagrees with lengths");
    }
    for (int j = 0; j < n; ++j) {
      const int s = symbols_[i][j];
      if (s < 0 || s >= alphabet_size_) {
        throw ContractError("OneHotText: symbol index out of range");
      }
      if ((j < len) && s == Alphabet::kPad) {
        throw ContractError("OneHotText: padding inside a word");
      }
      if ((j >= len) && s != Alphabet::kPad) {
        throw ContractError("OneHotText: non-padding past word end");
      }
    }
  }
}

long OneHotText::total_chars() const {
  return std::accumulate(lengths_.begin(), lengths_.end(), 0L);
}

diff::Tensor OneHotText::word_matrix(int i) const {
  const int n = max_word_len();
  std::vector<double> data(static_cast<std::size_t>(n) * alphabet_size_, 0.0);
  for (int j = 0; j < n; ++j) {
    data[static_cast<std::size_t>(j) * alphabet_size_ + symbols_[i][j]] = 1.0;
  }
  return diff::Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(alphabet_size_)},
                      std::move(data));
}

diff::Tensor OneHotText::to_tensor() const {
  const int m = max_words();
  const int n = max_word_len();
  std::vector<double> data(static_cast<std::size_t>(m) * n * alphabet_size_, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      data[(static_cast<std::size_t>(i) * n + j) * alphabet_size_ + symbols_[i][j]] = 1.0;
    }
  }
  return diff::Tensor({static_cast<std::size_t>(m), static_cast<std::size_t>(n),
                       static_cast<std::size_t>(alphabet_size_)},
                      std::move(data));
}

std::string OneHotText::word_string(int i, const Alphabet& alphabet) const {
  std::string w;
  for (int j = 0; j < lengths_[i]; ++j) w += alphabet.char_at(symbols_[i][j]);
  return w;
}

std::string OneHotText::decode(const Alphabet& alphabet) const {
  std::string out;
  for (int i = 0; i < word_count_; ++i) {
    if (i > 0) out += ' ';
    out += word_string(i, alphabet);
  }
  return out;
}

std::string lowercased(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

// One CSV record; quoted fields with doubled inner quotes. Unquoted fields
// are accepted as well. Returns false at end of input.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, int& line_no) {
  fields.clear();
  std::string line;
  if (!std::getline(in, line)) return false;
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string field;
  bool in_quotes = false;
  std::size_t i = 0;
  bool done = false;
  while (!done) {
    if (i >= line.size()) {
      if (in_quotes) {
        // quoted field spans a newline
        std::string next;
        if (!std::getline(in, next)) {
          throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
        }
        ++line_no;
        if (!next.empty() && next.back() == '\r') next.pop_back();
        field += '\n';
        line += '\n' + next;  // keep indices consistent
        ++i;
        continue;
      }
      fields.push_back(field);
      done = true;
      break;
    }
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field += c;
        ++i;
      }
    } else {
      if (c == '"' && field.empty()) {
        in_quotes = true;
        ++i;
      } else if (c == ',') {
        fields.push_back(field);
        field.clear();
        ++i;
      } else {
        field += c;
        ++i;
      }
    }
  }
  return true;
}

}  // namespace

std::vector<RawExample> load_agnews(const std::string& path, bool lowercase) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<RawExample> out;
  std::vector<std::string> fields;
  int line_no = 0;
  while (read_csv_record(in, fields, line_no)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != 3) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    }
    int cls = 0;
    try {
      std::size_t pos = 0;
      cls = std::stoi(fields[0], &pos);
      if (pos != fields[0].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": bad class field '" +
                       fields[0] + "'");
    }
    if (cls < 1 || cls > 4) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": class " +
                       std::to_string(cls) + " outside 1-4");
    }
    std::string text = fields[1] + " " + fields[2];
    if (lowercase) text = lowercased(text);
    out.push_back(RawExample{std::move(text), cls - 1});
  }
  return out;
}

SstLoadResult load_sst_binary(const std::string& path, bool lowercase) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  SstLoadResult result;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++result.skipped_lines;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": missing tab separator");
    }
    const std::string label_str = line.substr(0, tab);
    if (label_str != "0" && label_str != "1") {
      throw ParseError(path + " line " + std::to_string(line_no) + ": label '" + label_str +
                       "' not in {0,1}");
    }
    std::string text = line.substr(tab + 1);
    if (lowercase) text = lowercased(text);
    result.examples.push_back(RawExample{std::move(text), label_str == "1" ? 1 : 0});
  }
  return result;
}

Alphabet build_alphabet(const std::vector<RawExample>& corpus) {
  if (corpus.empty()) throw ContractError("build_alphabet: empty corpus");
  std::set<char> chars;
  for (const auto& ex : corpus) {
    for (const auto& tok : tokenize(ex.text)) {
      for (char c : tok) chars.insert(c);
    }
  }
  return Alphabet(std::vector<char>(chars.begin(), chars.end()));
}

WordVocab build_word_vocab(const std::vector<RawExample>& corpus) {
  if (corpus.empty()) throw ContractError("build_word_vocab: empty corpus");
  WordVocab vocab;
  for (const auto& ex : corpus) {
    for (auto& tok : tokenize(ex.text)) vocab.words.insert(tok);
  }
  return vocab;
}

OneHotText encode(const std::string& text, const Alphabet& alphabet, int n, int m) {
  if (n < 2 || m < 1) throw ContractError("encode: need n >= 2 and m >= 1");
  auto tokens = tokenize(text);
  const int count = std::min<int>(static_cast<int>(tokens.size()), m);
  std::vector<std::vector<int>> symbols(m, std::vector<int>(n, Alphabet::kPad));
  std::vector<int> lengths(m, 0);
  for (int i = 0; i < count; ++i) {
    const std::string& w = tokens[i];
    const int len = std::min<int>(static_cast<int>(w.size()), n - 1);
    for (int j = 0; j < len; ++j) symbols[i][j] = alphabet.index_of(w[j]);
    lengths[i] = len;
  }
  return OneHotText(std::move(symbols), std::move(lengths), count,
                    alphabet.size());
}

std::string normalized_for_model(const std::string& text, int n, int m) {
  auto tokens = tokenize(text);
  if (static_cast<int>(tokens.size()) > m) tokens.resize(m);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    auto w = tokens[i];
    if (static_cast<int>(w.size()) > n - 1) w.resize(n - 1);
    out += w;
  }
  return out;
}

std::pair<std::vector<RawExample>, std::vector<RawExample>> dev_split(
    const std::vector<RawExample>& examples, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) {
    throw ContractError("dev_split: fraction must be in (0,1)");
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = substream(seed, "dev_split");
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.index(i)]);
  }
  const std::size_t n_dev = static_cast<std::size_t>(fraction * examples.size());
  std::vector<RawExample> dev, train;
  dev.reserve(n_dev);
  train.reserve(examples.size() - n_dev);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_dev ? dev : train).push_back(examples[order[i]]);
  }
  return {std::move(train), std::move(dev)};
}

std::vector<LabeledExample> encode_examples(const std::vector<RawExample>& raw,
                                            const Alphabet& alphabet, int n, int m) {
  std::vector<LabeledExample> out;
  out.reserve(raw.size());
  for (const auto& ex : raw) {
    out.push_back(LabeledExample{encode(ex.text, alphabet, n, m), ex.label, ex.text});
  }
  return out;
}

}  // namespace hotflip::corpus
