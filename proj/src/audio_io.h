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

#ifndef BWX_AUDIO_IO_H_
#define BWX_AUDIO_IO_H_

#include <cstdint>
#include <string>
#include <vector>

namespace bwx::audio {

// Mono waveform with unit-interval samples. All pipeline code passes these
// around by value; functions never mutate their inputs.
struct AudioBuffer {
  std::vector<double> samples;  // each in [-1, 1]
  int sample_rate_hz = 0;

  double duration_ms() const {
    return sample_rate_hz > 0
               ? 1000.0 * static_cast<double>(samples.size()) / sample_rate_hz
               : 0.0;
  }
};

// Integer <-> float sample mapping. The scale is asymmetric (1/32768) so that
// -32768 maps exactly to -1.0 and the int16 -> double -> int16 round trip is
// lossless.
double int16_to_unit(int16_t v);
int16_t unit_to_int16(double s);  // round half away from zero, then clamp

// Reads a mono 16-bit PCM RIFF/WAVE file. Rejects anything else: wrong
// format code, bit depth or channel count, and truncated chunks all raise
// distinct Format errors.
AudioBuffer read_wav(const std::string &path);

// Writes a canonical 44-byte-header mono PCM16 WAV file.
void write_wav(const AudioBuffer &buf, const std::string &path);

}  // namespace bwx::audio

#endif  // BWX_AUDIO_IO_H_
