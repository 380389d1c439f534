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

#include "mushra.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "audio_io.h"
#include "error.h"

namespace bwx::mushra {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

uint64_t fnv1a(const std::string &s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Fisher-Yates with our own index draws so the order is stable across
// standard-library implementations.
std::vector<int> shuffled_indices(int n, uint64_t seed) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

json stimulus_to_json(const Stimulus &s) {
  return json{{"token", s.token}, {"condition", s.condition}, {"path", s.path}};
}

Stimulus stimulus_from_json(const json &j) {
  Stimulus s;
  s.token = j.at("token").get<std::string>();
  s.condition = j.at("condition").get<std::string>();
  s.path = j.at("path").get<std::string>();
  return s;
}

}  // namespace

std::string random_token(std::mt19937_64 &rng) {
  static const char digits[] = "0123456789abcdef";
  std::string t(16, '0');
  for (char &c : t) c = digits[rng() % 16];
  return t;
}

void MushraTest::validate() const {
  if (trials.empty()) raise(ErrorCode::kInvalidArgument, "mushra test has no trials");
  if (anchor_condition.empty())
    raise(ErrorCode::kInvalidArgument, "mushra test has no anchor condition");
  std::set<std::string> tokens;
  for (const Trial &t : trials) {
    if (!tokens.insert(t.reference.token).second)
      raise(ErrorCode::kInvalidArgument, "duplicate token " + t.reference.token);
    int hidden = 0, anchors = 0;
    for (const Stimulus &s : t.stimuli) {
      if (!tokens.insert(s.token).second)
        raise(ErrorCode::kInvalidArgument, "duplicate token " + s.token);
      if (s.condition == kHiddenReferenceCondition) ++hidden;
      if (s.condition == anchor_condition) ++anchors;
    }
    if (hidden != 1)
      raise(ErrorCode::kInvalidArgument,
            "trial " + t.utterance + " needs exactly one hidden reference, has " +
                std::to_string(hidden));
    if (anchors != 1)
      raise(ErrorCode::kInvalidArgument,
            "trial " + t.utterance + " needs exactly one anchor, has " +
                std::to_string(anchors));
  }
}

std::string MushraTest::to_json() const {
  json j;
  j["test_id"] = test_id;
  j["anchor_condition"] = anchor_condition;
  j["trials"] = json::array();
  for (const Trial &t : trials) {
    json jt;
    jt["utterance"] = t.utterance;
    jt["reference"] = stimulus_to_json(t.reference);
    jt["stimuli"] = json::array();
    for (const Stimulus &s : t.stimuli) jt["stimuli"].push_back(stimulus_to_json(s));
    j["trials"].push_back(std::move(jt));
  }
  return j.dump(2);
}

MushraTest MushraTest::from_json(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception &e) {
    raise(ErrorCode::kFormat, std::string("bad test definition JSON: ") + e.what());
  }
  MushraTest t;
  try {
    t.test_id = j.at("test_id").get<std::string>();
    t.anchor_condition = j.at("anchor_condition").get<std::string>();
    for (const auto &jt : j.at("trials")) {
      Trial trial;
      trial.utterance = jt.at("utterance").get<std::string>();
      trial.reference = stimulus_from_json(jt.at("reference"));
      for (const auto &js : jt.at("stimuli")) trial.stimuli.push_back(stimulus_from_json(js));
      t.trials.push_back(std::move(trial));
    }
  } catch (const Error &) {
    throw;
  } catch (const std::exception &e) {
    raise(ErrorCode::kFormat, std::string("test definition missing field: ") + e.what());
  }
  t.validate();
  return t;
}

MushraTest MushraTest::load(const std::string &path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::kIo, "cannot open test definition: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json(text);
}

void MushraTest::save(const std::string &path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) raise(ErrorCode::kIo, "cannot open test definition for writing: " + path);
  f << to_json() << '\n';
  if (!f) raise(ErrorCode::kIo, "short write: " + path);
}

const Stimulus *MushraTest::find_token(const std::string &token) const {
  for (const Trial &t : trials) {
    if (t.reference.token == token) return &t.reference;
    for (const Stimulus &s : t.stimuli)
      if (s.token == token) return &s;
  }
  return nullptr;
}

MushraTest prepare_test(const std::string &ref_dir,
                        const std::vector<std::pair<std::string, std::string>> &conditions,
                        const std::string &anchor_label, const PrepareOptions &options) {
  std::set<std::string> labels;
  for (const auto &[label, dir] : conditions) {
    if (label == kHiddenReferenceCondition)
      raise(ErrorCode::kInvalidArgument,
            std::string("condition label '") + kHiddenReferenceCondition + "' is reserved");
    if (!labels.insert(label).second)
      raise(ErrorCode::kInvalidArgument, "duplicate condition label: " + label);
  }
  bool anchor_known = anchor_label == kHiddenReferenceCondition;
  for (const auto &[label, dir] : conditions) anchor_known = anchor_known || label == anchor_label;
  if (!anchor_known)
    raise(ErrorCode::kInvalidArgument, "anchor label not among conditions: " + anchor_label);

  std::vector<std::string> names;
  for (const auto &entry : fs::directory_iterator(ref_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".wav") continue;
    names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) raise(ErrorCode::kInvalidArgument, "no .wav files in " + ref_dir);

  uint64_t seed = options.seed;
  if (seed == 0)
    seed = static_cast<uint64_t>(
        std::chrono::steady_clock::now().time_since_epoch().count());
  std::mt19937_64 rng(seed);

  // duration filter, then optional random subset
  std::vector<std::string> kept;
  for (const std::string &name : names) {
    const auto buf = audio::read_wav((fs::path(ref_dir) / name).string());
    const double ms = buf.duration_ms();
    if (options.min_ms > 0 && ms < options.min_ms) continue;
    if (options.max_ms > 0 && ms > options.max_ms) continue;
    kept.push_back(name);
  }
  if (kept.empty())
    raise(ErrorCode::kInvalidArgument, "duration filter removed every utterance");
  if (options.limit > 0 && kept.size() > options.limit) {
    const auto order = shuffled_indices(static_cast<int>(kept.size()), rng());
    std::vector<std::string> subset;
    for (size_t i = 0; i < options.limit; ++i) subset.push_back(kept[order[i]]);
    std::sort(subset.begin(), subset.end());
    kept = std::move(subset);
  }

  MushraTest test;
  test.test_id = options.test_id;
  test.anchor_condition = anchor_label;
  for (const std::string &name : kept) {
    Trial trial;
    trial.utterance = name;
    const std::string ref_path = (fs::path(ref_dir) / name).string();
    trial.reference = Stimulus{random_token(rng), kHiddenReferenceCondition, ref_path};
    // hidden copy of the reference among the blind stimuli
    trial.stimuli.push_back(Stimulus{random_token(rng), kHiddenReferenceCondition, ref_path});
    for (const auto &[label, dir] : conditions) {
      const fs::path p = fs::path(dir) / name;
      if (!fs::exists(p))
        raise(ErrorCode::kIo, "condition '" + label + "' is missing utterance " + name);
      trial.stimuli.push_back(Stimulus{random_token(rng), label, p.string()});
    }
    // shuffle the stored stimulus order too, so the file leaks nothing
    const auto order = shuffled_indices(static_cast<int>(trial.stimuli.size()), rng());
    std::vector<Stimulus> shuffled;
    for (int i : order) shuffled.push_back(trial.stimuli[i]);
    trial.stimuli = std::move(shuffled);
    test.trials.push_back(std::move(trial));
  }
  test.validate();
  return test;
}

RatingStore::RatingStore(std::string journal_path) : path_(std::move(journal_path)) {
  std::ifstream f(path_);
  if (!f) return;  // fresh journal
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TrialRating r;
      r.session_id = j.at("session").get<std::string>();
      r.trial_index = j.at("trial").get<int>();
      r.utterance = j.at("utterance").get<std::string>();
      r.timestamp_ms = j.at("timestamp_ms").get<int64_t>();
      for (const auto &[token, score] : j.at("scores").items())
        r.scores[token] = score.get<int>();
      records_.push_back(std::move(r));
    } catch (const std::exception &e) {
      raise(ErrorCode::kFormat, "journal line " + std::to_string(lineno) +
                                    " unreadable: " + e.what());
    }
  }
}

void RatingStore::append(const TrialRating &rating) {
  json j;
  j["session"] = rating.session_id;
  j["trial"] = rating.trial_index;
  j["utterance"] = rating.utterance;
  j["timestamp_ms"] = rating.timestamp_ms;
  j["scores"] = json::object();
  for (const auto &[token, score] : rating.scores) j["scores"][token] = score;

  std::ofstream f(path_, std::ios::app);
  if (!f) raise(ErrorCode::kIo, "cannot append to journal: " + path_);
  f << j.dump() << '\n';
  f.flush();
  if (!f) raise(ErrorCode::kIo, "short write to journal: " + path_);
  records_.push_back(rating);
}

bool RatingStore::has(const std::string &session_id, int trial_index) const {
  for (const auto &r : records_)
    if (r.session_id == session_id && r.trial_index == trial_index) return true;
  return false;
}

std::vector<int> session_trial_order(const std::string &session_id, int num_trials) {
  return shuffled_indices(num_trials, fnv1a(session_id + "/trials"));
}

std::vector<int> session_stimulus_order(const std::string &session_id, int trial_index,
                                        int num_stimuli) {
  return shuffled_indices(num_stimuli,
                          fnv1a(session_id + "/trial/" + std::to_string(trial_index)));
}

AggregateResult aggregate(const MushraTest &test, const std::vector<TrialRating> &ratings,
                          const ScreeningRule &rule) {
  AggregateResult result;
  result.screening_enabled = rule.enabled;

  // token -> condition over the whole test
  std::map<std::string, std::string> condition_of;
  for (const Trial &t : test.trials)
    for (const Stimulus &s : t.stimuli) condition_of[s.token] = s.condition;

  // screening: a rater (session) is flagged when they under-rate the hidden
  // reference on more than the allowed fraction of their trials
  std::set<std::string> flagged;
  if (rule.enabled) {
    std::map<std::string, std::pair<int, int>> per_rater;  // violations, trials
    for (const TrialRating &r : ratings) {
      int hidden_score = -1;
      for (const auto &[token, score] : r.scores) {
        auto it = condition_of.find(token);
        if (it != condition_of.end() && it->second == kHiddenReferenceCondition)
          hidden_score = score;
      }
      if (hidden_score < 0) continue;
      auto &[violations, total] = per_rater[r.session_id];
      ++total;
      if (hidden_score < rule.reference_threshold) ++violations;
    }
    for (const auto &[rater, counts] : per_rater) {
      const auto &[violations, total] = counts;
      if (total > 0 &&
          static_cast<double>(violations) / total > rule.max_violation_fraction)
        flagged.insert(rater);
    }
  }
  result.flagged_raters.assign(flagged.begin(), flagged.end());

  std::map<std::string, std::vector<double>> scores_by_condition;
  for (const TrialRating &r : ratings) {
    if (flagged.count(r.session_id)) continue;
    for (const auto &[token, score] : r.scores) {
      auto it = condition_of.find(token);
      if (it == condition_of.end()) continue;
      scores_by_condition[it->second].push_back(static_cast<double>(score));
    }
  }

  for (const auto &[condition, scores] : scores_by_condition) {
    ConditionStat stat;
    stat.condition = condition;
    stat.count = static_cast<int>(scores.size());
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    stat.mean = mean;
    if (scores.size() > 1) {
      double ss = 0.0;
      for (double s : scores) ss += (s - mean) * (s - mean);
      const double sd = std::sqrt(ss / static_cast<double>(scores.size() - 1));
      stat.ci95_halfwidth = 1.96 * sd / std::sqrt(static_cast<double>(scores.size()));
    }
    result.conditions.push_back(std::move(stat));
  }
  std::stable_sort(result.conditions.begin(), result.conditions.end(),
                   [](const ConditionStat &a, const ConditionStat &b) {
                     if (a.mean != b.mean) return a.mean > b.mean;
                     return a.condition < b.condition;
                   });
  return result;
}

std::string aggregate_to_json(const AggregateResult &result) {
  json j;
  j["screening_enabled"] = result.screening_enabled;
  j["flagged_raters"] = result.flagged_raters;
  j["conditions"] = json::array();
  for (const auto &c : result.conditions) {
    j["conditions"].push_back(json{{"condition", c.condition},
                                   {"mean", c.mean},
                                   {"count", c.count},
                                   {"ci95_halfwidth", c.ci95_halfwidth}});
  }
  return j.dump(2);
}

}  // namespace bwx::mushra
