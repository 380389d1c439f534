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

#ifndef BWX_DSP_H_
#define BWX_DSP_H_

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "audio_io.h"

namespace bwx::dsp {

using audio::AudioBuffer;

// ---------------------------------------------------------------- features

struct MelConfig {
  int sample_rate_hz = 8000;
  double window_ms = 50.0;
  double hop_ms = 12.5;
  int fft_size = 512;
  int num_bins = 80;
  double fmin_hz = 125.0;
  double fmax_hz = 0.0;  // 0 means Nyquist of sample_rate_hz
  double energy_floor = 1e-10;

  int window_samples() const;
  int hop_samples() const;
  double effective_fmax() const { return fmax_hz > 0 ? fmax_hz : sample_rate_hz / 2.0; }
};

struct MelSpectrogram {
  int64_t num_frames = 0;
  int num_bins = 0;
  std::vector<double> log_energies;  // row-major [num_frames x num_bins]
  double frame_rate_hz = 0.0;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;
  int source_sample_rate_hz = 0;

  double at(int64_t frame, int bin) const { return log_energies[frame * num_bins + bin]; }
};

struct PowerSpectrogram {
  int64_t num_frames = 0;
  int num_bins = 0;  // fft/2 + 1
  std::vector<double> power;  // row-major [num_frames x num_bins]
};

// HTK mel scale.
double hz_to_mel(double f);
double mel_to_hz(double m);

// Periodic Hann window, w[n] = 0.5 (1 - cos(2 pi n / N)). length >= 2.
std::vector<double> hann_window(int length);

// In-place radix-2 complex FFT; size must be a power of two.
void fft(std::vector<std::complex<double>> &a, bool inverse);

// Short-time power spectrum. Frame t covers samples [t*hop, t*hop + win) with
// the tail zero-padded; the frame count is ceil(len / hop).
PowerSpectrogram stft_power(const AudioBuffer &buf, double window_ms,
                            double hop_ms, int fft_size);

// Triangular mel filters with centers equally spaced on the mel scale.
// Returns a row-major [num_bins x (fft_size/2+1)] matrix. Raises if any
// filter ends up with no nonzero weight (degenerate band edges).
std::vector<double> mel_filterbank(int num_bins, int fft_size, int sample_rate_hz,
                                   double fmin_hz, double fmax_hz);

// Natural log of (filterbank x power spectrum), floored before the log.
MelSpectrogram log_mel(const AudioBuffer &buf, const MelConfig &config);

// ---------------------------------------------------------------- resample

// Polyphase windowed-sinc (Kaiser) sample-rate converter. Output length is
// round(input_length * target / source); the filter is zero-phase, so output
// sample j sits at input time j * source / target.
AudioBuffer resample(const AudioBuffer &buf, int target_rate_hz);

// ---------------------------------------------------------------- degrade

enum class DegradationMode { kBandLimitOnly, kExternalCodec };

struct DegradationSpec {
  int target_rate_hz = 8000;
  // Command template with {in} and {out} placeholders, run via /bin/sh.
  std::string external_codec_command;
  DegradationMode mode = DegradationMode::kBandLimitOnly;
};

// Band-limits (and optionally round-trips through an external codec command)
// a higher-rate buffer down to spec.target_rate_hz.
AudioBuffer degrade(const AudioBuffer &buf, const DegradationSpec &spec);

}  // namespace bwx::dsp

#endif  // BWX_DSP_H_
