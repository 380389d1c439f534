// Copyright 2026 The bwx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// MUSHRA test definitions, the append-only rating journal, per-session
// shuffling and screening/aggregation. The HTTP front end lives in
// mushra_service.h.

#ifndef BWX_MUSHRA_H_
#define BWX_MUSHRA_H_

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace bwx::mushra {

// Condition label reserved for the hidden copy of the reference.
inline constexpr const char *kHiddenReferenceCondition = "reference";

struct Stimulus {
  std::string token;      // opaque id served to raters
  std::string condition;  // server-side only; never leaves the aggregate API
  std::string path;       // WAV file
};

struct Trial {
  std::string utterance;
  Stimulus reference;  // labeled reference (same audio as the hidden one)
  std::vector<Stimulus> stimuli;
};

struct MushraTest {
  std::string test_id;
  std::string anchor_condition;
  std::vector<Trial> trials;

  // Checks token uniqueness and that every trial carries exactly one hidden
  // reference and one anchor stimulus.
  void validate() const;

  std::string to_json() const;
  static MushraTest from_json(const std::string &text);
  static MushraTest load(const std::string &path);
  void save(const std::string &path) const;

  const Stimulus *find_token(const std::string &token) const;
};

// Inputs for building a test definition: one directory per condition holding
// files named like the reference directory's.
struct PrepareOptions {
  std::string test_id = "bwx-mushra";
  uint64_t seed = 0;       // token/assignment randomness; 0 = derive from clock
  double min_ms = 0.0;     // utterance duration filter
  double max_ms = 0.0;     // 0 = no upper bound
  size_t limit = 0;        // 0 = keep all; otherwise random subset
};

MushraTest prepare_test(const std::string &ref_dir,
                        const std::vector<std::pair<std::string, std::string>> &conditions,
                        const std::string &anchor_label, const PrepareOptions &options);

struct TrialRating {
  std::string session_id;
  int trial_index = 0;                // position in the session's order
  std::string utterance;
  std::map<std::string, int> scores;  // token -> 0..100
  int64_t timestamp_ms = 0;
};

// Newline-delimited JSON journal, replayed at startup.
class RatingStore {
 public:
  explicit RatingStore(std::string journal_path);

  void append(const TrialRating &rating);
  const std::vector<TrialRating> &records() const { return records_; }
  bool has(const std::string &session_id, int trial_index) const;

 private:
  std::string path_;
  std::vector<TrialRating> records_;
};

struct ConditionStat {
  std::string condition;
  double mean = 0.0;
  int count = 0;
  double ci95_halfwidth = 0.0;  // 1.96 * s / sqrt(n), sample std dev
};

struct ScreeningRule {
  bool enabled = false;          // the paper used untrained raters, unscreened
  double reference_threshold = 90.0;
  double max_violation_fraction = 0.15;
};

struct AggregateResult {
  std::vector<ConditionStat> conditions;  // ordered by descending mean
  std::vector<std::string> flagged_raters;
  bool screening_enabled = false;
};

AggregateResult aggregate(const MushraTest &test, const std::vector<TrialRating> &ratings,
                          const ScreeningRule &rule);

std::string aggregate_to_json(const AggregateResult &result);

// Deterministic per-session orders derived from the session id alone.
std::vector<int> session_trial_order(const std::string &session_id, int num_trials);
std::vector<int> session_stimulus_order(const std::string &session_id, int trial_index,
                                        int num_stimuli);

std::string random_token(std::mt19937_64 &rng);

}  // namespace bwx::mushra

#endif  // BWX_MUSHRA_H_
