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

#ifndef BWX_CONFIG_H_
#define BWX_CONFIG_H_

#include <string>

#include "dsp.h"
#include "trainer.h"
#include "wavenet.h"

namespace bwx::config {

// Declarative pipeline configuration: sections [dsp], [wavenet], [trainer],
// [sampler], [evalkit] with key = value lines and '#' comments. Unknown
// sections or keys are rejected; serialize() emits the canonical form, which
// parse() maps back to the same config.
struct PipelineConfig {
  dsp::MelConfig mel;
  int degrade_target_rate_hz = 8000;
  std::string codec_command;  // empty = band-limit only

  wavenet::WaveNetConfig model;
  train::TrainSettings trainer;

  double sampler_temperature = 1.0;
  uint64_t sampler_seed = 0;

  double eval_snr_low_hz = 0.0;
  double eval_snr_high_hz = 4000.0;
  int eval_spectrogram_fft = 512;

  static PipelineConfig desk();   // the defaults above
  static PipelineConfig paper();  // paper-scale model and batch size

  dsp::DegradationSpec degradation() const {
    dsp::DegradationSpec spec;
    spec.target_rate_hz = degrade_target_rate_hz;
    spec.external_codec_command = codec_command;
    spec.mode = codec_command.empty() ? dsp::DegradationMode::kBandLimitOnly
                                      : dsp::DegradationMode::kExternalCodec;
    return spec;
  }
};

PipelineConfig parse(const std::string &text);
PipelineConfig load(const std::string &path);
std::string serialize(const PipelineConfig &config);

}  // namespace bwx::config

#endif  // BWX_CONFIG_H_
