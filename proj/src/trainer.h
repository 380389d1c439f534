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
// Dataset assembly (degraded/original pairs), hop-aligned random cropping,
// teacher-forced Adam training, checkpointing and telemetry.

#ifndef BWX_TRAINER_H_
#define BWX_TRAINER_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsp.h"
#include "sampler.h"
#include "wavenet.h"

namespace bwx::train {

using audio::AudioBuffer;
using wavenet::WaveNetModel;

struct TrainSettings {
  int64_t batch_size = 4;
  int64_t steps = 500;
  int64_t checkpoint_every = 100;
  tensor::AdamConfig adam;
  double crop_ms = 350.0;
  uint64_t seed = 0;
  double clip_norm = 100.0;  // global-norm NaN guard
  int prefetch_width = 1;    // crop preparation pipeline width
};

// One aligned crop: 24 kHz target, 8 kHz conditioning audio and its log-mel.
struct TrainingExample {
  AudioBuffer target;      // crop_ms at the output rate
  AudioBuffer cond_audio;  // aligned segment at the conditioning rate
  dsp::MelSpectrogram mel;
};

struct StepRecord {
  int64_t step = 0;
  double loss_nats = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

using StepCallback = std::function<void(const StepRecord &)>;

// Manifest rows are "path<TAB>duration_ms".
struct CorpusEntry {
  std::string path;
  double duration_ms = 0.0;
};
std::vector<CorpusEntry> read_manifest(const std::string &path);
void write_manifest(const std::vector<CorpusEntry> &entries, const std::string &path);

// Trims the source to a whole number of conditioning hops, degrades it, and
// returns (hi, lo) with lengths in the exact rate ratio.
std::pair<AudioBuffer, AudioBuffer> make_pair(const AudioBuffer &utterance,
                                              const dsp::DegradationSpec &spec,
                                              const dsp::MelConfig &mel_config);

// Uniformly draws a hop-aligned crop of crop_ms. The rng is any 64-bit
// uniform generator; draw order is fixed so seeded runs reproduce.
TrainingExample sample_crop(const AudioBuffer &hi, const AudioBuffer &lo,
                            const dsp::MelConfig &mel_config, double crop_ms,
                            std::mt19937_64 &rng);

class Trainer {
 public:
  Trainer(WaveNetModel &model, const dsp::MelConfig &mel_config,
          const dsp::DegradationSpec &degradation, TrainSettings settings);

  // Loads and degrades every utterance in the manifest up front.
  void load_corpus(const std::string &manifest_path);
  void add_utterance(const AudioBuffer &utterance);  // corpus without files

  // Runs steps [start_step+1, settings.steps], appending to the JSONL log at
  // <out_dir>/train_log.jsonl and writing ckpt_step<N>.bwxc checkpoints plus
  // .opt optimizer sidecars at the configured cadence. Aborts on non-finite
  // loss, leaving the last written checkpoint in place.
  void run(const std::string &out_dir, int64_t start_step, const StepCallback &callback);

  // One optimizer step over the batch scheduled for `step` (1-based).
  // Exposed for tests; returns the record that run() would log.
  StepRecord train_step(int64_t step);
  StepRecord step_with_batch(int64_t step, const std::vector<TrainingExample> &batch);

  const std::vector<std::pair<AudioBuffer, AudioBuffer>> &pairs() const { return pairs_; }

  // The deterministic per-step crop schedule: (utterance, example) pairs are
  // derived from (seed, step) only, so resumed runs see the same stream.
  std::vector<TrainingExample> batch_for_step(int64_t step) const;

 private:
  double accumulate_example_gradients(const TrainingExample &ex, double weight);

  WaveNetModel &model_;
  dsp::MelConfig mel_config_;
  dsp::DegradationSpec degradation_;
  TrainSettings settings_;
  std::vector<std::pair<AudioBuffer, AudioBuffer>> pairs_;
};

}  // namespace bwx::train

#endif  // BWX_TRAINER_H_
