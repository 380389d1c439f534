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
// Fast autoregressive generation. Each causal conv layer keeps a ring buffer
// of its last (filter-1)*dilation+1 input vectors, so one emitted sample
// costs O(layers * channels * filter) instead of re-running the receptive
// field.

#ifndef BWX_SAMPLER_H_
#define BWX_SAMPLER_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "wavenet.h"

namespace bwx::sampler {

using wavenet::WaveNetModel;

// Mixture parameters for a single timestep: [logits | means | log_scales].
struct StepParams {
  std::vector<float> values;  // 3 * mixture_components
};

// Per-layer ring of past input vectors. Value-copyable; two copies evolve
// independently.
struct LayerRing {
  std::vector<float> buf;  // capacity * channels
  int64_t capacity = 0;    // (filter-1)*dilation + 1
  int64_t channels = 0;
  int64_t cursor = 0;      // next write slot

  void push(const float *vec);
  // Pointer to the vector written `back` pushes ago (0 = most recent).
  const float *at(int64_t back) const;
};

class GenerationState {
 public:
  explicit GenerationState(const WaveNetModel &model);

  // Runs one autoregressive step. prev_sample is the previously emitted
  // sample (0.0 before the first step); cond_vec is this step's conditioning
  // vector of residual_channels entries.
  StepParams step(float prev_sample, std::span<const float> cond_vec);

  int64_t emitted_count() const { return emitted_; }

  const WaveNetModel &model() const { return *model_; }

 private:
  const WaveNetModel *model_;  // shared read-only snapshot
  LayerRing input_ring_;       // past raw samples for the input conv
  std::vector<LayerRing> layer_rings_;
  int64_t emitted_ = 0;
  // scratch, kept to avoid per-step allocation
  std::vector<float> x_, f_, g_, z_, skip_, h1_, h2_;
};

// Draws a sample value from one timestep of mixture parameters. The
// component is a categorical draw over softmax(logits); temperature scales
// only the logistic noise. temperature == 0 degenerates to the mean of the
// highest-weight component.
double sample_from_mol(std::span<const float> step_params, int components,
                       std::mt19937_64 &rng, double temperature);

// Full utterance: conditioning from the mel, then frames * samples_per_frame
// autoregressive steps. Deterministic given the seed.
audio::AudioBuffer synthesize(const WaveNetModel &model, const dsp::MelSpectrogram &mel,
                              uint64_t seed, double temperature);

}  // namespace bwx::sampler

#endif  // BWX_SAMPLER_H_
