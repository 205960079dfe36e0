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

#include "hotflip/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hotflip/errors.hpp"
#include "hotflip/rng.hpp"
#include "hotflip/util.hpp"

namespace hotflip::synth {

namespace {

const std::vector<std::vector<std::string>> kClassPools = {
    // world
    {"government", "minister", "election", "treaty", "border", "embassy", "parliament",
     "diplomat", "protest", "regime", "summit", "ceasefire"},
    // sports
    {"coach", "season", "tournament", "striker", "goalkeeper", "playoff", "stadium",
     "referee", "champion", "inning", "marathon", "lineup"},
    // business
    {"shares", "profit", "merger", "investor", "earnings", "market", "stocks", "dividend",
     "revenue", "bankruptcy", "inflation", "trader"},
    // sci/tech
    {"software", "browser", "satellite", "processor", "laboratory", "genome", "telescope",
     "robotics", "encryption", "spacecraft", "quantum", "silicon"},
};

const std::vector<std::string> kFillers = {
    "the", "a", "of", "on", "in", "for", "with", "after", "over", "new", "report",
    "says", "today", "week", "plan", "deal", "talks", "group", "chief", "latest",
    "move", "first", "amid", "toward", "sets", "faces"};

// Pools spelled from the letters {a,e,i,l,m,n,o,r,s,t} only.
const std::vector<std::vector<std::string>> kRestrictedClassPools = {
    {"minister", "senator", "nations", "treaties", "mission"},
    {"slalom", "tennis", "roster", "arena", "trainers"},
    {"lenders", "retail", "estimates", "loans", "mortar"},
    {"terminal", "monitors", "sensors", "antenna", "lasers"},
};

const std::vector<std::string> kRestrictedFillers = {
    "a", "an", "as", "at", "in", "is", "it", "on", "or", "so", "to",
    "most", "some", "same", "least", "still", "soon", "later", "almost", "not"};

std::string sample_words(Rng& rng, int count, int cls, double class_prob,
                         double cross_prob, bool restricted) {
  const auto& pools = restricted ? kRestrictedClassPools : kClassPools;
  const auto& fillers = restricted ? kRestrictedFillers : kFillers;
  std::string out;
  for (int i = 0; i < count; ++i) {
    if (i) out += ' ';
    const double roll = rng.uniform();
    if (roll < cross_prob) {
      const int other = (cls + 1 + static_cast<int>(rng.index(3))) % 4;
      out += pools[other][rng.index(pools[other].size())];
    } else if (roll < cross_prob + class_prob) {
      out += pools[cls][rng.index(pools[cls].size())];
    } else {
      out += fillers[rng.index(fillers.size())];
    }
  }
  return out;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += '"';
  return out;
}

// Sentiment vocabulary: synonym clusters (shared tag, nearby embeddings)
// plus neutral fillers. Tags: JJ adjectives, NN nouns, VB verbs, RB adverbs.
struct WordGroup {
  std::string tag;
  int sentiment;  // +1, -1, 0
  std::vector<std::string> words;
};

const std::vector<WordGroup> kSentimentGroups = {
    {"JJ", +1, {"good", "great", "fine", "solid", "decent"}},
    {"JJ", +1, {"terrific", "wonderful", "superb", "marvelous"}},
    {"JJ", +1, {"pleasing", "charming", "delightful"}},
    {"JJ", -1, {"bad", "awful", "poor", "dreadful"}},
    {"JJ", -1, {"boring", "dull", "tedious", "bland"}},
    {"JJ", -1, {"clumsy", "shallow", "hollow"}},
    {"NN", 0, {"movie", "film", "picture", "flick"}},
    {"NN", 0, {"story", "plot", "script", "narrative"}},
    {"NN", 0, {"actor", "cast", "performer"}},
    {"NN", 0, {"scene", "moment", "sequence"}},
    {"VB", +1, {"enjoyed", "loved", "liked", "adored"}},
    {"VB", -1, {"hated", "despised", "loathed"}},
    {"VB", 0, {"watched", "seemed", "felt", "looked"}},
    {"RB", 0, {"rather", "quite", "really", "very", "mostly"}},
};

const std::vector<std::string> kSstStopwords = {
    "a", "an", "the", "and", "is", "it", "of", "to", "this", "that",
    "was", "with", "but", "its", "as", "at", "by", "be", "or", "so"};

std::vector<std::string> sentiment_vocab() {
  std::vector<std::string> vocab;
  for (const auto& g : kSentimentGroups) {
    vocab.insert(vocab.end(), g.words.begin(), g.words.end());
  }
  vocab.insert(vocab.end(), kSstStopwords.begin(), kSstStopwords.end());
  return vocab;
}

const std::vector<std::string>& group_words(int sentiment, const std::string& tag) {
  for (const auto& g : kSentimentGroups) {
    if (g.sentiment == sentiment && g.tag == tag) return g.words;
  }
  throw ContractError("no sentiment group for tag " + tag);
}

}  // namespace

std::vector<AgRow> make_agnews_rows(const AgNewsOptions& opts) {
  Rng rng = substream(opts.seed, "synth_agnews");
  std::vector<AgRow> rows;
  rows.reserve(opts.count);
  for (int i = 0; i < opts.count; ++i) {
    const int cls = static_cast<int>(rng.index(4));
    AgRow row;
    row.cls = cls + 1;
    const int t_words =
        opts.title_words_min +
        static_cast<int>(rng.index(opts.title_words_max - opts.title_words_min + 1));
    const int b_words =
        opts.body_words_min +
        static_cast<int>(rng.index(opts.body_words_max - opts.body_words_min + 1));
    row.title = sample_words(rng, t_words, cls, opts.class_word_prob, 0.0,
                             opts.restricted_charset);
    row.description = sample_words(rng, b_words, cls, opts.class_word_prob,
                                   opts.cross_class_prob, opts.restricted_charset);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_agnews_csv(const std::string& path, const std::vector<AgRow>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) {
    out << csv_quote(std::to_string(r.cls)) << ',' << csv_quote(r.title) << ','
        << csv_quote(r.description) << '\n';
  }
  util::write_file(path, out.str());
}

std::vector<SstRow> make_sst_rows(const SstOptions& opts) {
  Rng rng = substream(opts.seed, "synth_sst");
  std::vector<SstRow> rows;
  rows.reserve(opts.count);
  for (int i = 0; i < opts.count; ++i) {
    const int label = static_cast<int>(rng.index(2));
    const int sentiment = label == 1 ? +1 : -1;
    const int n_words =
        opts.words_min + static_cast<int>(rng.index(opts.words_max - opts.words_min + 1));
    std::string sentence;
    for (int w = 0; w < n_words; ++w) {
      if (w) sentence += ' ';
      const double roll = rng.uniform();
      if (roll < 0.35) {
        sentence += kSstStopwords[rng.index(kSstStopwords.size())];
      } else if (roll < 0.60) {
        const auto& nouns = group_words(0, w % 2 == 0 ? "NN" : "VB");
        sentence += nouns[rng.index(nouns.size())];
      } else {
        const int s = rng.uniform() < opts.contradiction_prob ? -sentiment : sentiment;
        const auto& pool = group_words(s, rng.uniform() < 0.8 ? "JJ" : "VB");
        sentence += pool[rng.index(pool.size())];
      }
    }
    rows.push_back(SstRow{label, std::move(sentence)});
  }
  return rows;
}

void write_sst_tsv(const std::string& path, const std::vector<SstRow>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) out << r.label << '\t' << r.sentence << '\n';
  util::write_file(path, out.str());
}

void write_sst_embeddings(const std::string& path, std::uint64_t seed, int dim) {
  Rng rng = substream(seed, "synth_embeddings");
  auto unit = [&](std::vector<double> v) {
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
  };
  auto random_unit = [&] {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return unit(std::move(v));
  };

  std::map<std::string, std::vector<double>> vectors;  // sorted for determinism
  for (const auto& g : kSentimentGroups) {
    const auto center = random_unit();
    for (const auto& w : g.words) {
      std::vector<double> v(dim);
      for (int j = 0; j < dim; ++j) v[j] = center[j] + 0.15 * rng.normal() / std::sqrt(dim);
      vectors[w] = unit(std::move(v));
    }
  }
  for (const auto& w : kSstStopwords) {
    if (!vectors.count(w)) vectors[w] = random_unit();
  }

  std::ostringstream out;
  out << vectors.size() << ' ' << dim << '\n';
  for (const auto& [w, v] : vectors) {
    out << w;
    for (double x : v) out << ' ' << util::format_double(x);
    out << '\n';
  }
  util::write_file(path, out.str());
}

void write_sst_pos_lexicon(const std::string& path) {
  std::map<std::string, std::string> tags;
  for (const auto& g : kSentimentGroups) {
    for (const auto& w : g.words) tags[w] = g.tag;
  }
  for (const auto& w : kSstStopwords) {
    if (!tags.count(w)) tags[w] = "DT";
  }
  std::ostringstream out;
  for (const auto& [w, t] : tags) out << w << '\t' << t << '\n';
  util::write_file(path, out.str());
}

void write_sst_stopwords(const std::string& path) {
  std::ostringstream out;
  for (const auto& w : kSstStopwords) out << w << '\n';
  util::write_file(path, out.str());
}

}  // namespace hotflip::synth
