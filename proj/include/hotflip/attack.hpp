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

#ifndef HOTFLIP_ATTACK_HPP
#define HOTFLIP_ATTACK_HPP

#include <string>
#include <tuple>
#include <vector>

#include "hotflip/corpus.hpp"
#include "hotflip/models.hpp"

namespace hotflip::attack {

enum class EditKind { kFlip = 0, kInsert = 1, kDelete = 2 };

const char* edit_kind_name(EditKind k);

/// One (position, from, to) character substitution inside a word.
struct AtomicFlip {
  int pos = 0;
  int from_sym = 0;
  int to_sym = 0;
};

// A flip, insert, or delete at a (word, position) coordinate. Insert and
// delete decompose into runs of atomic flips as characters shift right or
// left; the vacated position becomes padding on delete.
struct EditOp {
  EditKind kind = EditKind::kFlip;
  int word = 0;
  int pos = 0;
  int target_sym = 0;  // new character for flip/insert; unused for delete

  /// Atomic flips this edit applies to x. Throws ContractError when the edit
  /// is illegal for x.
  std::vector<AtomicFlip> decompose(const corpus::OneHotText& x) const;
  /// N: the number of atomic flips in the decomposition.
  int flip_count(const corpus::OneHotText& x) const;

  /// Deterministic ordering: flip < insert < delete, then word, pos, target.
  std::tuple<int, int, int, int> sort_key() const {
    return {static_cast<int>(kind), word, pos, target_sym};
  }
  bool operator==(const EditOp&) const = default;
};

struct ScoredEdit {
  EditOp edit;
  double raw_score = 0.0;         // sum of gradient differences
  double normalized_score = 0.0;  // raw / sqrt(2N)
  int flip_count = 1;
};

struct AttackConfig {
  int beam_width = 10;
  /// Budget: edits allowed = ceil(fraction x document characters).
  double budget_fraction = 0.10;
  bool allow_flip = true;
  bool allow_insert = true;
  bool allow_delete = true;
  /// tau: success requires misclassification at confidence >= tau.
  double confidence_threshold = 0.5;
  bool vocab_constraint = true;
  int keystar_pool = 20;  // loss queries per Key* step
  std::uint64_t seed = 1;
};

struct AttackOutcome {
  bool success = false;
  int final_label = -1;
  double final_confidence = 0.0;
  std::vector<EditOp> edits;
  long forward_passes = 0;
  long backward_passes = 0;
  double char_change_fraction = 0.0;
  std::vector<double> step_losses;  // loss of the leading state after each step
  std::string final_text;
};

/// All legal edits for x under the config's edit kinds and vocabulary
/// constraint. Edits touching padding-only word slots, flips reproducing the
/// current character, inserts into full words, and deletes that would empty
/// a word are excluded. An empty result is legal.
std::vector<EditOp> enumerate_edits(const corpus::OneHotText& x,
                                    const corpus::Alphabet& alphabet,
                                    const corpus::WordVocab& vocab,
                                    const AttackConfig& config);

/// First-order scores for every edit from a single gradient field:
/// flip score = dJ/dx[i,j,b] - dJ/dx[i,j,a], insert/delete add the
/// shifted-position terms; normalized by sqrt(2N).
std::vector<ScoredEdit> score_edits(const diff::Tensor& grad, const corpus::OneHotText& x,
                                    const std::vector<EditOp>& edits);

/// Argmax of the normalized score; ties broken by (kind, word, pos, target).
/// Throws ExhaustionError when no edit is legal.
ScoredEdit best_edit(const diff::Tensor& grad, const corpus::OneHotText& x,
                     const corpus::Alphabet& alphabet, const corpus::WordVocab& vocab,
                     const AttackConfig& config);

/// Apply the edit's decomposition, preserving one-hot validity and updating
/// the word length.
corpus::OneHotText apply_edit(const corpus::OneHotText& x, const EditOp& edit);

/// Dense direction tensor v for the edit: +1 at each flip target, -1 at each
/// source, accumulated over the decomposition. Same shape as x's tensor.
diff::Tensor edit_direction(const corpus::OneHotText& x, const EditOp& edit);

/// The result of applying the edit to the word's string form.
std::string edited_word(const corpus::OneHotText& x, const corpus::Alphabet& alphabet,
                        const EditOp& edit);

AttackOutcome beam_attack(const models::CharModelParams& params,
                          const corpus::LabeledExample& example,
                          const corpus::WordVocab& vocab, const AttackConfig& config);

/// beam_attack with beam width 1.
AttackOutcome greedy_attack(const models::CharModelParams& params,
                            const corpus::LabeledExample& example,
                            const corpus::WordVocab& vocab, const AttackConfig& config);

/// Black-box baseline: per step, sample keystar_pool random legal flips,
/// query the loss of each, keep the best. Forward passes only.
AttackOutcome keystar_attack(const models::CharModelParams& params,
                             const corpus::LabeledExample& example,
                             const corpus::WordVocab& vocab, const AttackConfig& config);

enum class AttackMethod { kBeam, kGreedy, kKeystar };

AttackMethod attack_method_from_name(const std::string& name);
const char* attack_method_name(AttackMethod m);

struct DatasetAttackRow {
  std::size_t example_id = 0;
  bool eligible = false;  // predicted correctly before the attack
  int true_label = 0;
  AttackOutcome outcome;  // for ineligible rows: the original wrong prediction
};

struct AttackSummary {
  long eligible = 0;
  long successes = 0;
  double success_rate = 0.0;  // over eligible examples
  bool no_eligible = false;
  double mean_char_change = 0.0;      // among successes
  long flips = 0, inserts = 0, deletes = 0;  // over edits of successful attacks
  double frac_flips = 0.0, frac_inserts = 0.0, frac_deletes = 0.0;
};

struct DatasetAttackResult {
  std::vector<DatasetAttackRow> rows;
  AttackSummary summary;
};

/// Attack every example; already-misclassified examples are skipped and not
/// counted as successes. Per-example work parallelizes across jobs threads
/// with per-example seeds, so results are independent of thread count.
DatasetAttackResult attack_dataset(const models::CharModelParams& params,
                                   const std::vector<corpus::LabeledExample>& examples,
                                   const corpus::WordVocab& vocab, const AttackConfig& config,
                                   AttackMethod method, int jobs = 1);

AttackSummary summarize(const std::vector<DatasetAttackRow>& rows);

/// One row per example: id, eligibility, success, labels, confidence, edit
/// counts, char-change fraction, query counters.
std::string attack_report_csv(const DatasetAttackResult& result);

}  // namespace hotflip::attack

#endif  // HOTFLIP_ATTACK_HPP
