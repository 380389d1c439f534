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

#include "trainer.h"

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

namespace bwx::train {
namespace {

namespace fs = std::filesystem;

uint64_t mix_seed(uint64_t seed, int64_t step) {
  // splitmix64 over (seed, step) for a stateless per-step stream
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(step + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<CorpusEntry> read_manifest(const std::string &path) {
  std::ifstream f(path);
  if (!f) raise(ErrorCode::kIo, "cannot open manifest: " + path);
  std::vector<CorpusEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos)
      raise(ErrorCode::kFormat, "manifest line " + std::to_string(lineno) +
                                    " missing tab separator: " + path);
    CorpusEntry e;
    e.path = line.substr(0, tab);
    try {
      e.duration_ms = std::stod(line.substr(tab + 1));
    } catch (const std::exception &) {
      raise(ErrorCode::kFormat,
            "manifest line " + std::to_string(lineno) + " has bad duration: " + path);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::vector<CorpusEntry> &entries, const std::string &path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) raise(ErrorCode::kIo, "cannot open manifest for writing: " + path);
  for (const auto &e : entries) f << e.path << '\t' << e.duration_ms << '\n';
  if (!f) raise(ErrorCode::kIo, "short write to manifest: " + path);
}

std::pair<AudioBuffer, AudioBuffer> make_pair(const AudioBuffer &utterance,
                                              const dsp::DegradationSpec &spec,
                                              const dsp::MelConfig &mel_config) {
  const int hi_rate = utterance.sample_rate_hz;
  const int lo_rate = spec.target_rate_hz;
  if (hi_rate % lo_rate != 0)
    raise(ErrorCode::kInvalidArgument, "make_pair: rates must divide evenly");
  const int ratio = hi_rate / lo_rate;
  const int lo_hop = mel_config.hop_samples();
  const int hi_hop = lo_hop * ratio;

  AudioBuffer hi = utterance;
  hi.samples.resize(hi.samples.size() / hi_hop * hi_hop);
  if (hi.samples.empty())
    raise(ErrorCode::kInvalidArgument, "make_pair: utterance shorter than one hop");

  AudioBuffer lo = dsp::degrade(hi, spec);
  // trim both to a common duration in whole hops (codecs may pad slightly)
  const int64_t hops =
      std::min<int64_t>(static_cast<int64_t>(hi.samples.size()) / hi_hop,
                        static_cast<int64_t>(lo.samples.size()) / lo_hop);
  hi.samples.resize(hops * hi_hop);
  lo.samples.resize(hops * lo_hop);
  return {std::move(hi), std::move(lo)};
}

TrainingExample sample_crop(const AudioBuffer &hi, const AudioBuffer &lo,
                            const dsp::MelConfig &mel_config, double crop_ms,
                            std::mt19937_64 &rng) {
  const int ratio = hi.sample_rate_hz / lo.sample_rate_hz;
  const int lo_hop = mel_config.hop_samples();
  const int hi_hop = lo_hop * ratio;
  const int64_t lo_crop =
      static_cast<int64_t>(std::llround(crop_ms * lo.sample_rate_hz / 1000.0));
  if (lo_crop % lo_hop != 0)
    raise(ErrorCode::kInvalidArgument, "sample_crop: crop must be a whole number of hops");
  const int64_t crop_hops = lo_crop / lo_hop;
  const int64_t total_hops = static_cast<int64_t>(lo.samples.size()) / lo_hop;
  if (total_hops < crop_hops)
    raise(ErrorCode::kInvalidArgument, "sample_crop: pair shorter than one crop");

  const int64_t max_start = total_hops - crop_hops;
  const int64_t start_hop = static_cast<int64_t>(rng() % static_cast<uint64_t>(max_start + 1));

  TrainingExample ex;
  ex.cond_audio.sample_rate_hz = lo.sample_rate_hz;
  ex.cond_audio.samples.assign(lo.samples.begin() + start_hop * lo_hop,
                               lo.samples.begin() + (start_hop + crop_hops) * lo_hop);
  ex.target.sample_rate_hz = hi.sample_rate_hz;
  ex.target.samples.assign(hi.samples.begin() + start_hop * hi_hop,
                           hi.samples.begin() + (start_hop + crop_hops) * hi_hop);
  ex.mel = dsp::log_mel(ex.cond_audio, mel_config);
  return ex;
}

Trainer::Trainer(WaveNetModel &model, const dsp::MelConfig &mel_config,
                 const dsp::DegradationSpec &degradation, TrainSettings settings)
    : model_(model),
      mel_config_(mel_config),
      degradation_(degradation),
      settings_(std::move(settings)) {
  settings_.adam.validate();
  if (settings_.batch_size < 1)
    raise(ErrorCode::kInvalidArgument, "trainer: batch_size must be >= 1");
  if (settings_.crop_ms <= mel_config_.window_ms)
    raise(ErrorCode::kInvalidArgument, "trainer: crop must exceed the analysis window");
  if (settings_.prefetch_width < 1)
    raise(ErrorCode::kInvalidArgument, "trainer: prefetch width must be >= 1");
}

void Trainer::load_corpus(const std::string &manifest_path) {
  const auto entries = read_manifest(manifest_path);
  if (entries.empty()) raise(ErrorCode::kInvalidArgument, "trainer: empty corpus");
  for (const auto &e : entries) {
    try {
      add_utterance(audio::read_wav(e.path));
    } catch (const Error &err) {
      raise(err.code(), "corpus utterance " + e.path + ": " + err.what());
    }
  }
}

void Trainer::add_utterance(const AudioBuffer &utterance) {
  pairs_.push_back(make_pair(utterance, degradation_, mel_config_));
}

std::vector<TrainingExample> Trainer::batch_for_step(int64_t step) const {
  if (pairs_.empty()) raise(ErrorCode::kState, "trainer: corpus is empty");
  std::mt19937_64 rng(mix_seed(settings_.seed, step));
  std::vector<TrainingExample> batch;
  batch.reserve(settings_.batch_size);
  for (int64_t i = 0; i < settings_.batch_size; ++i) {
    const size_t utt = static_cast<size_t>(rng() % pairs_.size());
    batch.push_back(
        sample_crop(pairs_[utt].first, pairs_[utt].second, mel_config_, settings_.crop_ms, rng));
  }
  return batch;
}

double Trainer::accumulate_example_gradients(const TrainingExample &ex, double weight) {
  tensor::TapeT<float> tape;
  const int nll = wavenet::build_nll(tape, ex.target.samples, ex.mel, model_);
  const int weighted = tape.scale(nll, weight);
  tape.backward(weighted);
  return static_cast<double>(tape.value(nll).data[0]);
}

StepRecord Trainer::step_with_batch(int64_t step, const std::vector<TrainingExample> &batch) {
  const auto t0 = std::chrono::steady_clock::now();
  const double weight = 1.0 / static_cast<double>(batch.size());

  double loss = 0.0;
  for (const auto &ex : batch) loss += weight * accumulate_example_gradients(ex, weight);

  auto params = model_.parameter_list();
  double sq = 0.0;
  for (auto *p : params) {
    p->ensure_grad();
    for (float gv : p->grad.data) sq += static_cast<double>(gv) * static_cast<double>(gv);
  }
  const double grad_norm = std::sqrt(sq);
  if (std::isfinite(loss)) {
    if (settings_.clip_norm > 0 && grad_norm > settings_.clip_norm) {
      const float scale = static_cast<float>(settings_.clip_norm / grad_norm);
      for (auto *p : params)
        for (float &gv : p->grad.data) gv *= scale;
    }
    tensor::adam_step(params, settings_.adam, step);
  }

  StepRecord rec;
  rec.step = step;
  rec.loss_nats = loss;
  rec.grad_norm = grad_norm;
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return rec;
}

StepRecord Trainer::train_step(int64_t step) {
  return step_with_batch(step, batch_for_step(step));
}

void Trainer::run(const std::string &out_dir, int64_t start_step,
                  const StepCallback &callback) {
  if (pairs_.empty()) raise(ErrorCode::kState, "trainer: corpus is empty");
  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "train_log.jsonl", std::ios::app);
  if (!log) raise(ErrorCode::kIo, "cannot open training log in " + out_dir);

  auto checkpoint = [&](int64_t step) {
    const std::string base = (fs::path(out_dir) / ("ckpt_step" + std::to_string(step))).string();
    wavenet::save_checkpoint(model_, base + ".bwxc");
    wavenet::save_optimizer_state(model_, step, base + ".opt");
  };

  // Crop preparation can run ahead of the optimizer; the schedule is
  // stateless in (seed, step), so any width gives identical batches.
  std::deque<std::pair<int64_t, std::future<std::vector<TrainingExample>>>> pipeline;
  int64_t next_to_submit = start_step + 1;
  auto submit = [&] {
    while (static_cast<int64_t>(pipeline.size()) < settings_.prefetch_width &&
           next_to_submit <= settings_.steps) {
      const int64_t s = next_to_submit++;
      auto policy = settings_.prefetch_width > 1 ? std::launch::async : std::launch::deferred;
      pipeline.emplace_back(s, std::async(policy, [this, s] { return batch_for_step(s); }));
    }
  };

  for (submit(); !pipeline.empty(); submit()) {
    const int64_t step = pipeline.front().first;
    const auto batch = pipeline.front().second.get();
    pipeline.pop_front();

    const StepRecord rec = step_with_batch(step, batch);
    if (!std::isfinite(rec.loss_nats)) {
      log.flush();
      raise(ErrorCode::kState,
            "training aborted at step " + std::to_string(step) +
                ": non-finite loss; last checkpoint retained in " + out_dir);
    }

    nlohmann::json j;
    j["step"] = rec.step;
    j["loss_nats"] = rec.loss_nats;
    j["wall_ms"] = rec.wall_ms;
    j["grad_norm"] = rec.grad_norm;
    log << j.dump() << '\n';
    log.flush();
    if (callback) callback(rec);

    if (settings_.checkpoint_every > 0 && step % settings_.checkpoint_every == 0)
      checkpoint(step);
  }
  if (settings_.steps > start_step &&
      (settings_.checkpoint_every <= 0 || settings_.steps % settings_.checkpoint_every != 0))
    checkpoint(settings_.steps);
}

}  // namespace bwx::train
