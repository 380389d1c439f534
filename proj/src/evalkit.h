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

#ifndef BWX_EVALKIT_H_
#define BWX_EVALKIT_H_

#include <map>
#include <string>
#include <vector>

#include "dsp.h"

namespace bwx::eval {

using audio::AudioBuffer;

struct EvalReport {
  std::string utterance;
  std::string condition;
  double lsd_db = 0.0;
  double snr_low_band_db = 0.0;
  double duration_ms = 0.0;
};

// Log-spectral distance in dB between two equal-rate signals (lengths are
// trimmed to the shorter one). 50 ms / 12.5 ms STFT over whole frames only,
// power floored at 1e-10.
double lsd(const AudioBuffer &reference, const AudioBuffer &test);

// Band-limited SNR: both signals are brick-wall filtered to [f_lo, f_hi]
// and compared; the result is capped at +120 dB.
double snr_band(const AudioBuffer &reference, const AudioBuffer &test, double f_lo_hz,
                double f_hi_hz);

// Grayscale P5 spectrogram, frequency upward from the bottom row, 80 dB
// dynamic range. The analysis window equals fft_size samples.
void render_spectrogram(const AudioBuffer &buf, const std::string &pgm_path,
                        int fft_size = 512);

// One report row per condition, resampled to the reference rate when needed,
// ordered by ascending LSD.
std::vector<EvalReport> compare_conditions(
    const AudioBuffer &reference, const std::map<std::string, AudioBuffer> &conditions,
    const std::string &utterance_label);

// CSV with header "utterance,condition,lsd_db,snr_low_db,duration_ms".
void write_report_csv(const std::vector<EvalReport> &rows, const std::string &path);

}  // namespace bwx::eval

#endif  // BWX_EVALKIT_H_
