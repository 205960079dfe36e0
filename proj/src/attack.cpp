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

#include "hotflip/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "hotflip/util.hpp"

namespace hotflip::attack {

using corpus::Alphabet;
using corpus::OneHotText;
using corpus::WordVocab;
using diff::Tensor;

const char* edit_kind_name(EditKind k) {
  switch (k) {
    case EditKind::kFlip: return "flip";
    case EditKind::kInsert: return "insert";
    case EditKind::kDelete: return "delete";
  }
  return "?";
}

std::vector<AtomicFlip> EditOp::decompose(const OneHotText& x) const {
  if (word < 0 || word >= x.word_count()) {
    throw ContractError("edit touches a padding-only word slot");
  }
  const int len = x.word_length(word);
  const int n = x.max_word_len();
  std::vector<AtomicFlip> flips;
  switch (kind) {
    case EditKind::kFlip: {
      if (pos < 0 || pos >= len) throw ContractError("flip position outside the word");
      const int from = x.symbol(word, pos);
      if (target_sym == from) throw ContractError("flip reproduces the current character");
      if (target_sym <= 0 || target_sym >= x.alphabet_size()) {
        throw ContractError("flip target is padding or out of range");
      }
      flips.push_back({pos, from, target_sym});
      break;
    }
    case EditKind::kInsert: {
      if (len > n - 2) throw ContractError("insert into a word at capacity");
      if (pos < 0 || pos > len) throw ContractError("insert position outside the word");
      if (target_sym <= 0 || target_sym >= x.alphabet_size()) {
        throw ContractError("insert target is padding or out of range");
      }
      // characters at pos..len-1 shift right; position len picks up the last
      for (int p = pos; p <= len; ++p) {
        const int from = p < len ? x.symbol(word, p) : Alphabet::kPad;
        const int to = p == pos ? target_sym : x.symbol(word, p - 1);
        flips.push_back({p, from, to});
      }
      break;
    }
    case EditKind::kDelete: {
      if (len < 2) throw ContractError("delete would empty the word");
      if (pos < 0 || pos >= len) throw ContractError("delete position outside the word");
      // characters at pos+1..len-1 shift left; the last position becomes padding
      for (int p = pos; p < len; ++p) {
        const int from = x.symbol(word, p);
        const int to = p < len - 1 ? x.symbol(word, p + 1) : Alphabet::kPad;
        flips.push_back({p, from, to});
      }
      break;
    }
  }
  return flips;
}

int EditOp::flip_count(const OneHotText& x) const {
  const int len = x.word_length(word);
  switch (kind) {
    case EditKind::kFlip: return 1;
    case EditKind::kInsert: return len - pos + 1;
    case EditKind::kDelete: return len - pos;
  }
  return 1;
}

std::string edited_word(const OneHotText& x, const Alphabet& alphabet, const EditOp& edit) {
  std::string w = x.word_string(edit.word, alphabet);
  switch (edit.kind) {
    case EditKind::kFlip:
      w[edit.pos] = alphabet.char_at(edit.target_sym);
      break;
    case EditKind::kInsert:
      w.insert(w.begin() + edit.pos, alphabet.char_at(edit.target_sym));
      break;
    case EditKind::kDelete:
      w.erase(w.begin() + edit.pos);
      break;
  }
  return w;
}

std::vector<EditOp> enumerate_edits(const OneHotText& x, const Alphabet& alphabet,
                                    const WordVocab& vocab, const AttackConfig& config) {
  std::vector<EditOp> edits;
  const int V = x.alphabet_size();
  const int n = x.max_word_len();
  std::string buf;
  for (int i = 0; i < x.word_count(); ++i) {
    const int len = x.word_length(i);
    const std::string word = x.word_string(i, alphabet);
    if (config.allow_flip) {
      for (int j = 0; j < len; ++j) {
        const int a = x.symbol(i, j);
        for (int b = 1; b < V; ++b) {
          if (b == a) continue;
          if (config.vocab_constraint) {
            buf = word;
            buf[j] = alphabet.char_at(b);
            if (vocab.contains(buf)) continue;
          }
          edits.push_back(EditOp{EditKind::kFlip, i, j, b});
        }
      }
    }
    if (config.allow_insert && len <= n - 2) {
      for (int j = 0; j <= len; ++j) {
        for (int b = 1; b < V; ++b) {
          if (config.vocab_constraint) {
            buf = word;
            buf.insert(buf.begin() + j, alphabet.char_at(b));
            if (vocab.contains(buf)) continue;
          }
          edits.push_back(EditOp{EditKind::kInsert, i, j, b});
        }
      }
    }
    if (config.allow_delete && len >= 2) {
      for (int j = 0; j < len; ++j) {
        if (config.vocab_constraint) {
          buf = word;
          buf.erase(buf.begin() + j);
          if (vocab.contains(buf)) continue;
        }
        edits.push_back(EditOp{EditKind::kDelete, i, j, 0});
      }
    }
  }
  return edits;
}

std::vector<ScoredEdit> score_edits(const Tensor& grad, const OneHotText& x,
                                    const std::vector<EditOp>& edits) {
  const auto expect = std::vector<std::size_t>{static_cast<std::size_t>(x.max_words()),
                                               static_cast<std::size_t>(x.max_word_len()),
                                               static_cast<std::size_t>(x.alphabet_size())};
  if (grad.shape() != expect) {
    throw ShapeError("score_edits: gradient shape does not match the input");
  }
  std::vector<ScoredEdit> scored;
  scored.reserve(edits.size());
  for (const auto& e : edits) {
    const auto flips = e.decompose(x);
    double raw = 0.0;
    for (const auto& f : flips) {
      raw += grad.at3(e.word, f.pos, f.to_sym) - grad.at3(e.word, f.pos, f.from_sym);
    }
    const int N = static_cast<int>(flips.size());
    scored.push_back(ScoredEdit{e, raw, raw / std::sqrt(2.0 * N), N});
  }
  return scored;
}

ScoredEdit best_edit(const Tensor& grad, const OneHotText& x, const Alphabet& alphabet,
                     const WordVocab& vocab, const AttackConfig& config) {
  const auto edits = enumerate_edits(x, alphabet, vocab, config);
  if (edits.empty()) throw ExhaustionError("no legal edits remain");
  const auto scored = score_edits(grad, x, edits);
  const ScoredEdit* best = &scored[0];
  for (const auto& se : scored) {
    if (se.normalized_score > best->normalized_score ||
        (se.normalized_score == best->normalized_score &&
         se.edit.sort_key() < best->edit.sort_key())) {
      best = &se;
    }
  }
  return *best;
}

OneHotText apply_edit(const OneHotText& x, const EditOp& edit) {
  const auto flips = edit.decompose(x);
  auto symbols = x.symbols();
  auto lengths = x.lengths();
  for (const auto& f : flips) {
    if (symbols[edit.word][f.pos] != f.from_sym) {
      throw ContractError("apply_edit: decomposition does not match the text");
    }
    symbols[edit.word][f.pos] = f.to_sym;
  }
  if (edit.kind == EditKind::kInsert) lengths[edit.word]++;
  if (edit.kind == EditKind::kDelete) lengths[edit.word]--;
  return OneHotText(std::move(symbols), std::move(lengths), x.word_count(),
                    x.alphabet_size());
}

Tensor edit_direction(const OneHotText& x, const EditOp& edit) {
  const int n = x.max_word_len(), V = x.alphabet_size();
  std::vector<double> v(static_cast<std::size_t>(x.max_words()) * n * V, 0.0);
  for (const auto& f : edit.decompose(x)) {
    const std::size_t base = (static_cast<std::size_t>(edit.word) * n + f.pos) * V;
    v[base + f.to_sym] += 1.0;
    v[base + f.from_sym] -= 1.0;
  }
  return Tensor({static_cast<std::size_t>(x.max_words()), static_cast<std::size_t>(n),
                 static_cast<std::size_t>(V)},
                std::move(v));
}

namespace {

struct BeamState {
  OneHotText x;
  std::vector<EditOp> edits;
  double cum_score = 0.0;
  double loss = 0.0;
  models::Prediction pred;
};

bool is_success(const models::Prediction& pred, int gold, double tau) {
  return pred.label != gold && pred.confidence >= tau;
}

AttackOutcome outcome_from_state(const BeamState& s, const models::CharModelParams& params,
                                 bool success, long fwd, long bwd, long total_chars,
                                 std::vector<double> step_losses) {
  AttackOutcome out;
  out.success = success;
  out.final_label = s.pred.label;
  out.final_confidence = s.pred.confidence;
  out.edits = s.edits;
  out.forward_passes = fwd;
  out.backward_passes = bwd;
  out.char_change_fraction =
      total_chars > 0 ? static_cast<double>(s.edits.size()) / total_chars : 0.0;
  out.step_losses = std::move(step_losses);
  out.final_text = s.x.decode(params.alphabet);
  return out;
}

int budget_steps(double fraction, long total_chars) {
  return static_cast<int>(std::ceil(fraction * static_cast<double>(total_chars)));
}

}  // namespace

AttackOutcome beam_attack(const models::CharModelParams& params,
                          const corpus::LabeledExample& example, const WordVocab& vocab,
                          const AttackConfig& config) {
  if (config.beam_width < 1) throw ContractError("beam width must be >= 1");
  const int gold = example.label;
  const double tau = config.confidence_threshold;
  long fwd = 0, bwd = 0;
  const long total_chars = example.x.total_chars();

  BeamState root;
  root.x = example.x;
  {
    auto ev = models::char_eval(params, root.x, gold);
    ++fwd;
    root.loss = ev.loss;
    root.pred = ev.pred;
  }
  if (is_success(root.pred, gold, tau)) {
    return outcome_from_state(root, params, true, fwd, bwd, total_chars, {});
  }

  const int max_steps = budget_steps(config.budget_fraction, total_chars);
  std::vector<BeamState> beam{std::move(root)};
  std::vector<double> step_losses;

  struct Candidate {
    double cum_score;
    int parent;
    ScoredEdit scored;
  };

  for (int step = 0; step < max_steps; ++step) {
    std::vector<Candidate> candidates;
    for (int bi = 0; bi < static_cast<int>(beam.size()); ++bi) {
      auto ge = models::char_loss_grad(params, beam[bi].x, gold);
      ++fwd;
      ++bwd;
      const auto edits = enumerate_edits(beam[bi].x, params.alphabet, vocab, config);
      for (auto& se : score_edits(ge.input_grad, beam[bi].x, edits)) {
        candidates.push_back({beam[bi].cum_score + se.normalized_score, bi, std::move(se)});
      }
    }
    if (candidates.empty()) break;

    const std::size_t keep = std::min<std::size_t>(config.beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.cum_score != b.cum_score) return a.cum_score > b.cum_score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.scored.edit.sort_key() < b.scored.edit.sort_key();
                      });

    std::vector<BeamState> next;
    next.reserve(keep);
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cand = candidates[c];
      BeamState s;
      s.x = apply_edit(beam[cand.parent].x, cand.scored.edit);
      s.edits = beam[cand.parent].edits;
      s.edits.push_back(cand.scored.edit);
      s.cum_score = cand.cum_score;
      auto ev = models::char_eval(params, s.x, gold);
      ++fwd;
      s.loss = ev.loss;
      s.pred = ev.pred;
      if (is_success(s.pred, gold, tau)) {
        step_losses.push_back(s.loss);
        return outcome_from_state(s, params, true, fwd, bwd, total_chars,
                                  std::move(step_losses));
      }
      next.push_back(std::move(s));
    }
    beam = std::move(next);
    step_losses.push_back(beam.front().loss);
  }

  return outcome_from_state(beam.front(), params, false, fwd, bwd, total_chars,
                            std::move(step_losses));
}

AttackOutcome greedy_attack(const models::CharModelParams& params,
                            const corpus::LabeledExample& example, const WordVocab& vocab,
                            const AttackConfig& config) {
  AttackConfig greedy = config;
  greedy.beam_width = 1;
  return beam_attack(params, example, vocab, greedy);
}

AttackOutcome keystar_attack(const models::CharModelParams& params,
                             const corpus::LabeledExample& example, const WordVocab& vocab,
                             const AttackConfig& config) {
  const int gold = example.label;
  const double tau = config.confidence_threshold;
  long fwd = 0;
  const long total_chars = example.x.total_chars();
  Rng rng = substream(config.seed, "keystar");

  BeamState cur;
  cur.x = example.x;
  {
    auto ev = models::char_eval(params, cur.x, gold);
    ++fwd;
    cur.loss = ev.loss;
    cur.pred = ev.pred;
  }
  if (is_success(cur.pred, gold, tau)) {
    return outcome_from_state(cur, params, true, fwd, 0, total_chars, {});
  }

  AttackConfig flips_only = config;
  flips_only.allow_flip = true;
  flips_only.allow_insert = false;
  flips_only.allow_delete = false;

  const int max_steps = budget_steps(config.budget_fraction, total_chars);
  std::vector<double> step_losses;
  for (int step = 0; step < max_steps; ++step) {
    const auto flips = enumerate_edits(cur.x, params.alphabet, vocab, flips_only);
    if (flips.empty()) break;
    bool have_best = false;
    BeamState best;
    EditOp best_edit_op;
    for (int q = 0; q < config.keystar_pool; ++q) {
      const EditOp& e = flips[rng.index(flips.size())];
      BeamState trial;
      trial.x = apply_edit(cur.x, e);
      auto ev = models::char_eval(params, trial.x, gold);
      ++fwd;
      trial.loss = ev.loss;
      trial.pred = ev.pred;
      if (!have_best || trial.loss > best.loss) {
        best = std::move(trial);
        best_edit_op = e;
        have_best = true;
      }
    }
    best.edits = cur.edits;
    best.edits.push_back(best_edit_op);
    cur = std::move(best);
    step_losses.push_back(cur.loss);
    if (is_success(cur.pred, gold, tau)) {
      return outcome_from_state(cur, params, true, fwd, 0, total_chars,
                                std::move(step_losses));
    }
  }
  return outcome_from_state(cur, params, false, fwd, 0, total_chars, std::move(step_losses));
}

AttackMethod attack_method_from_name(const std::string& name) {
  if (name == "beam") return AttackMethod::kBeam;
  if (name == "greedy") return AttackMethod::kGreedy;
  if (name == "keystar") return AttackMethod::kKeystar;
  throw ContractError("unknown attack method '" + name + "'");
}

const char* attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::kBeam: return "beam";
    case AttackMethod::kGreedy: return "greedy";
    case AttackMethod::kKeystar: return "keystar";
  }
  return "?";
}

DatasetAttackResult attack_dataset(const models::CharModelParams& params,
                                   const std::vector<corpus::LabeledExample>& examples,
                                   const WordVocab& vocab, const AttackConfig& config,
                                   AttackMethod method, int jobs) {
  DatasetAttackResult result;
  result.rows.resize(examples.size());

  auto attack_one = [&](std::size_t i) {
    DatasetAttackRow row;
    row.example_id = i;
    row.true_label = examples[i].label;
    const auto pred = models::char_predict(params, examples[i].x);
    row.eligible = pred.label == examples[i].label;
    if (!row.eligible) {
      row.outcome.final_label = pred.label;
      row.outcome.final_confidence = pred.confidence;
      row.outcome.final_text = examples[i].x.decode(params.alphabet);
    } else {
      AttackConfig per_example = config;
      per_example.seed = splitmix64(config.seed ^ (0x9e3779b97f4a7c15ULL + i));
      switch (method) {
        case AttackMethod::kBeam:
          row.outcome = beam_attack(params, examples[i], vocab, per_example);
          break;
        case AttackMethod::kGreedy:
          row.outcome = greedy_attack(params, examples[i], vocab, per_example);
          break;
        case AttackMethod::kKeystar:
          row.outcome = keystar_attack(params, examples[i], vocab, per_example);
          break;
      }
    }
    result.rows[i] = std::move(row);
  };

  if (jobs <= 1 || examples.size() < 2) {
    for (std::size_t i = 0; i < examples.size(); ++i) attack_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < examples.size(); i = next.fetch_add(1)) {
        attack_one(i);
      }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(jobs, static_cast<int>(examples.size()));
    pool.reserve(n_threads);
    for (int tix = 0; tix < n_threads; ++tix) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  result.summary = summarize(result.rows);
  return result;
}

AttackSummary summarize(const std::vector<DatasetAttackRow>& rows) {
  AttackSummary s;
  double char_change_sum = 0.0;
  for (const auto& row : rows) {
    if (!row.eligible) continue;
    ++s.eligible;
    if (!row.outcome.success) continue;
    ++s.successes;
    char_change_sum += row.outcome.char_change_fraction;
    for (const auto& e : row.outcome.edits) {
      switch (e.kind) {
        case EditKind::kFlip: ++s.flips; break;
        case EditKind::kInsert: ++s.inserts; break;
        case EditKind::kDelete: ++s.deletes; break;
      }
    }
  }
  s.no_eligible = s.eligible == 0;
  s.success_rate = s.eligible ? static_cast<double>(s.successes) / s.eligible : 0.0;
  s.mean_char_change = s.successes ? char_change_sum / s.successes : 0.0;
  const long total_edits = s.flips + s.inserts + s.deletes;
  if (total_edits > 0) {
    s.frac_flips = static_cast<double>(s.flips) / total_edits;
    s.frac_inserts = static_cast<double>(s.inserts) / total_edits;
    s.frac_deletes = static_cast<double>(s.deletes) / total_edits;
  }
  return s;
}

std::string attack_report_csv(const DatasetAttackResult& result) {
  std::ostringstream out;
  out << "example_id,eligible,success,true_label,final_label,final_confidence,"
         "num_edits,char_change_fraction,flips,inserts,deletes,forward_queries,"
         "backward_queries\n";
  for (const auto& row : result.rows) {
    long flips = 0, inserts = 0, deletes = 0;
    for (const auto& e : row.outcome.edits) {
      if (e.kind == EditKind::kFlip) ++flips;
      if (e.kind == EditKind::kInsert) ++inserts;
      if (e.kind == EditKind::kDelete) ++deletes;
    }
    out << row.example_id << ',' << (row.eligible ? 1 : 0) << ','
        << (row.outcome.success ? 1 : 0) << ',' << row.true_label << ','
        << row.outcome.final_label << ','
        << util::format_fixed(row.outcome.final_confidence) << ','
        << row.outcome.edits.size() << ','
        << util::format_fixed(row.outcome.char_change_fraction) << ',' << flips << ','
        << inserts << ',' << deletes << ',' << row.outcome.forward_passes << ','
        << row.outcome.backward_passes << '\n';
  }
  return out.str();
}

}  // namespace hotflip::attack
