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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "dsp.h"
#include "error.h"
#include "test_support.h"

using namespace bwx;
using audio::AudioBuffer;

namespace fs = std::filesystem;

namespace {

// Amplitude of a known sinusoid in a buffer, by projection.
double tone_amplitude(const AudioBuffer &buf, double freq_hz, int64_t skip) {
  const int64_t n = static_cast<int64_t>(buf.samples.size()) - 2 * skip;
  REQUIRE(n > 100);
  double a = 0.0, b = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i + skip) / buf.sample_rate_hz;
    a += buf.samples[i + skip] * std::sin(2 * std::numbers::pi * freq_hz * t);
    b += buf.samples[i + skip] * std::cos(2 * std::numbers::pi * freq_hz * t);
  }
  return 2.0 * std::hypot(a, b) / static_cast<double>(n);
}

double rms(const std::vector<double> &x, int64_t skip = 0) {
  double acc = 0.0;
  int64_t n = 0;
  for (size_t i = skip; i + skip < x.size(); ++i, ++n) acc += x[i] * x[i];
  return std::sqrt(acc / std::max<int64_t>(n, 1));
}

}  // namespace

TEST_CASE("hann window closed-form points") {
  const auto w4 = dsp::hann_window(4);
  REQUIRE(w4.size() == 4);
  CHECK(w4[0] == doctest::Approx(0.0));
  CHECK(w4[1] == doctest::Approx(0.5));
  CHECK(w4[2] == doctest::Approx(1.0));
  CHECK(w4[3] == doctest::Approx(0.5));

  const auto w2 = dsp::hann_window(2);
  CHECK(w2[0] == doctest::Approx(0.0));
  CHECK(w2[1] == doctest::Approx(1.0));

  const auto w400 = dsp::hann_window(400);
  CHECK(w400[200] == doctest::Approx(1.0));

  CHECK_THROWS_AS(dsp::hann_window(1), Error);
}

TEST_CASE("mel scale formula") {
  CHECK(dsp::hz_to_mel(0.0) == 0.0);
  CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK(dsp::hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-4));
  // inverse
  for (double f : {125.0, 700.0, 3999.0})
    CHECK(dsp::mel_to_hz(dsp::hz_to_mel(f)) == doctest::Approx(f).epsilon(1e-10));
}

TEST_CASE("stft frame geometry at the pipeline rates") {
  // 50 ms / 12.5 ms at 8 kHz: 400-sample window, 100-sample hop, 80 Hz frames
  auto buf = testing::speechlike(2800, 8000, 3);
  const auto spec = dsp::stft_power(buf, 50.0, 12.5, 512);
  CHECK(spec.num_frames == 28);  // ceil(2800 / 100)
  CHECK(spec.num_bins == 257);

  // all-zero input -> all-zero power
  AudioBuffer zero;
  zero.sample_rate_hz = 8000;
  zero.samples.assign(1000, 0.0);
  const auto zspec = dsp::stft_power(zero, 50.0, 12.5, 512);
  for (double p : zspec.power) CHECK(p == 0.0);

  // window longer than fft is rejected
  CHECK_THROWS_AS(dsp::stft_power(buf, 50.0, 12.5, 256), Error);
}

TEST_CASE("stft of DC equals the window transform") {
  // window == fft size, so the periodic Hann transform is exact: all energy
  // in bins 0 and 1, nothing from bin 3 up
  AudioBuffer dc;
  dc.sample_rate_hz = 8000;
  dc.samples.assign(512, 1.0);
  const auto spec = dsp::stft_power(dc, 512.0 * 1000.0 / 8000.0, 32.0, 512);
  REQUIRE(spec.num_bins == 257);
  const double peak = spec.power[0];
  CHECK(peak > 0);
  for (int k = 3; k < 257; ++k) CHECK(spec.power[k] <= 1e-18 * peak);
}

TEST_CASE("parseval sanity on white noise") {
  std::mt19937_64 rng(11);
  AudioBuffer noise;
  noise.sample_rate_hz = 8000;
  noise.samples.resize(8000);
  double power = 0.0;
  for (auto &s : noise.samples) {
    s = 2.0 * testing::uniform01(rng) - 1.0;
    power += s * s;
  }
  power /= static_cast<double>(noise.samples.size());

  const int fft = 512;
  const double window_ms = 1000.0 * 400 / 8000;
  const auto spec = dsp::stft_power(noise, window_ms, 12.5, fft);
  const auto window = dsp::hann_window(400);
  double wsum = 0.0;
  for (double w : window) wsum += w * w;

  // full-spectrum total: interior bins count twice for a real signal
  double total = 0.0;
  for (int64_t t = 0; t < spec.num_frames; ++t) {
    for (int k = 0; k < spec.num_bins; ++k) {
      const double p = spec.power[t * spec.num_bins + k];
      total += (k == 0 || k == fft / 2) ? p : 2.0 * p;
    }
  }
  // Parseval for the length-N DFT: sum_k |X_k|^2 = N * sum_n |w_n x_n|^2
  const double expected =
      static_cast<double>(fft) * wsum * power * static_cast<double>(spec.num_frames);
  CHECK(total == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("mel filterbank shape and coverage") {
  const auto fb = dsp::mel_filterbank(80, 512, 8000, 125.0, 4000.0);
  REQUIRE(fb.size() == 80u * 257u);
  for (double v : fb) CHECK(v >= 0.0);
  // every row has weight
  for (int m = 0; m < 80; ++m) {
    double row = 0.0;
    for (int k = 0; k < 257; ++k) row += fb[m * 257 + k];
    CHECK(row > 0.0);
  }
  // every FFT bin strictly inside (fmin, fmax) feeds at least one filter
  for (int k = 0; k < 257; ++k) {
    const double f = k * 8000.0 / 512.0;
    if (f <= 125.0 || f >= 4000.0) continue;
    double col = 0.0;
    for (int m = 0; m < 80; ++m) col += fb[m * 257 + k];
    CHECK(col > 0.0);
  }
  // degenerate edges are reported: far more bins than the FFT can separate
  CHECK_THROWS_AS(dsp::mel_filterbank(200, 64, 8000, 125.0, 4000.0), Error);
}

TEST_CASE("log_mel of the standard 350 ms crop is 28 x 80") {
  const auto lo = testing::speechlike(2800, 8000, 5);
  dsp::MelConfig cfg;
  const auto mel = dsp::log_mel(lo, cfg);
  CHECK(mel.num_frames == 28);
  CHECK(mel.num_bins == 80);
  CHECK(mel.frame_rate_hz == doctest::Approx(80.0));

  // silence sits exactly at the floor
  AudioBuffer silence;
  silence.sample_rate_hz = 8000;
  silence.samples.assign(2800, 0.0);
  const auto smel = dsp::log_mel(silence, cfg);
  for (double v : smel.log_energies) CHECK(v == doctest::Approx(std::log(1e-10)));

  // scaling energy by 4 shifts above-floor entries by log 4
  AudioBuffer doubled = lo;
  for (auto &s : doubled.samples) s *= 2.0;
  const auto dmel = dsp::log_mel(doubled, cfg);
  for (size_t i = 0; i < mel.log_energies.size(); ++i) {
    if (mel.log_energies[i] > std::log(1e-10) + 0.1 &&
        dmel.log_energies[i] > std::log(1e-10) + 0.1)
      CHECK(dmel.log_energies[i] - mel.log_energies[i] ==
            doctest::Approx(std::log(4.0)).epsilon(1e-6));
  }
}

TEST_CASE("log_mel zero-append behavior") {
  dsp::MelConfig cfg;
  const auto base = testing::speechlike(2750, 8000, 9);

  // appending zeros below the next hop boundary changes nothing
  AudioBuffer padded = base;
  padded.samples.resize(2799, 0.0);
  const auto m1 = dsp::log_mel(base, cfg);
  const auto m2 = dsp::log_mel(padded, cfg);
  REQUIRE(m1.num_frames == m2.num_frames);
  for (size_t i = 0; i < m1.log_energies.size(); ++i)
    CHECK(m1.log_energies[i] == m2.log_energies[i]);

  // crossing the boundary only appends frames; existing rows are untouched
  AudioBuffer crossed = base;
  crossed.samples.resize(2850, 0.0);
  const auto m3 = dsp::log_mel(crossed, cfg);
  REQUIRE(m3.num_frames == m1.num_frames + 1);
  for (size_t i = 0; i < m1.log_energies.size(); ++i)
    CHECK(m3.log_energies[i] == m1.log_energies[i]);
}

TEST_CASE("resampler meets the passband and stopband contract") {
  // 1 kHz tone survives 24 -> 8 kHz within 0.1 dB
  {
    const auto in = testing::sine(24000, 24000, 1000.0);
    const auto out = dsp::resample(in, 8000);
    CHECK(out.sample_rate_hz == 8000);
    CHECK(static_cast<int64_t>(out.samples.size()) == 8000);
    const double amp = tone_amplitude(out, 1000.0, 300);
    CHECK(std::abs(20.0 * std::log10(amp)) < 0.1);
  }
  // passband edge: 0.9 * Nyquist stays within 0.1 dB too
  {
    const auto in = testing::sine(24000, 24000, 3600.0);
    const auto out = dsp::resample(in, 8000);
    const double amp = tone_amplitude(out, 3600.0, 300);
    CHECK(std::abs(20.0 * std::log10(amp)) < 0.1);
  }
  // 5 kHz is attenuated by more than 60 dB
  {
    const auto in = testing::sine(24000, 24000, 5000.0);
    const auto out = dsp::resample(in, 8000);
    const double in_rms = rms(in.samples);
    const double out_rms = rms(out.samples, 300);
    CHECK(20.0 * std::log10(out_rms / in_rms) < -60.0);
  }
  // zeros map to zeros with the scaled length
  {
    AudioBuffer z;
    z.sample_rate_hz = 24000;
    z.samples.assign(7001, 0.0);
    const auto out = dsp::resample(z, 8000);
    CHECK(static_cast<int64_t>(out.samples.size()) ==
          static_cast<int64_t>(std::llround(7001.0 / 3.0)));
    for (double s : out.samples) CHECK(s == 0.0);
  }
  CHECK_THROWS_AS(dsp::resample(testing::sine(100, 8000, 100.0), 0), Error);
}

TEST_CASE("resampler is linear") {
  const auto x = testing::speechlike(9600, 24000, 21);
  AudioBuffer scaled = x;
  for (auto &s : scaled.samples) s *= 0.37;
  const auto y1 = dsp::resample(x, 8000);
  const auto y2 = dsp::resample(scaled, 8000);
  REQUIRE(y1.samples.size() == y2.samples.size());
  for (size_t i = 0; i < y1.samples.size(); ++i)
    CHECK(y2.samples[i] == doctest::Approx(0.37 * y1.samples[i]).epsilon(1e-9));
}

TEST_CASE("upsampling suppresses images") {
  const auto in = testing::sine(16000, 8000, 3000.0, 0.9);
  const auto out = dsp::resample(in, 24000);
  CHECK(static_cast<int64_t>(out.samples.size()) == 48000);
  CHECK(tone_amplitude(out, 3000.0, 2000) == doctest::Approx(0.9).epsilon(0.01));
  CHECK(tone_amplitude(out, 5000.0, 2000) < 0.9 * 1e-3);   // 8k - 3k image
  CHECK(tone_amplitude(out, 11000.0, 2000) < 0.9 * 1e-3);  // 8k + 3k image
}

TEST_CASE("degrade band-limit mode") {
  const auto hi = testing::speechlike(24000, 24000, 13);
  dsp::DegradationSpec spec;
  spec.target_rate_hz = 8000;
  const auto lo = dsp::degrade(hi, spec);
  CHECK(lo.sample_rate_hz == 8000);
  CHECK(std::llabs(static_cast<int64_t>(lo.samples.size()) - 8000) <= 1);
  for (double s : lo.samples) CHECK(std::abs(s) <= 1.0);

  CHECK_THROWS_AS(dsp::degrade(lo, spec), Error);  // source must exceed target
}

TEST_CASE("degrade external codec runs the command template") {
  const std::string dir = testing::temp_dir("codec");
  // stand-in codec: band-limit round trip via a shell copy
  const std::string script = (fs::path(dir) / "codec.sh").string();
  {
    std::ofstream f(script);
    f << "#!/bin/sh\ncp \"$1\" \"$2\"\n";
  }
  fs::permissions(script, fs::perms::owner_all);

  const auto hi = testing::speechlike(24000, 24000, 17);
  dsp::DegradationSpec spec;
  spec.target_rate_hz = 8000;
  spec.mode = dsp::DegradationMode::kExternalCodec;
  spec.external_codec_command = script + " {in} {out}";
  const auto lo = dsp::degrade(hi, spec);
  CHECK(lo.sample_rate_hz == 8000);
  CHECK(std::llabs(static_cast<int64_t>(lo.samples.size()) - 8000) <= 160);

  // failing command surfaces its diagnostics
  spec.external_codec_command = "sh -c 'echo boom >&2; exit 3'";
  try {
    dsp::degrade(hi, spec);
    CHECK(false);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kCodec);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }

  // wrong-rate output is rejected
  const std::string bad = (fs::path(dir) / "bad.sh").string();
  {
    std::ofstream f(bad);
    // writes a 16 kHz wav over the output
    f << "#!/bin/sh\n";
    f << "python3 -c 'import struct,sys;sr=16000;n=100;d=struct.pack(\"<\"+\"h\"*n,*([0]*n));"
         "h=b\"RIFF\"+struct.pack(\"<I\",36+len(d))+b\"WAVEfmt \"+struct.pack(\"<IHHIIHH\",16,1,1,sr,sr*2,2,16)+"
         "b\"data\"+struct.pack(\"<I\",len(d));open(sys.argv[1],\"wb\").write(h+d)' \"$2\"\n";
  }
  fs::permissions(bad, fs::perms::owner_all);
  spec.external_codec_command = bad + " {in} {out}";
  try {
    dsp::degrade(hi, spec);
    CHECK(false);
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::kCodec);
    CHECK(std::string(e.what()).find("rate") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("degraded audio keeps no energy above the band limit") {
  const auto hi = testing::speechlike(48000, 24000, 23);
  dsp::DegradationSpec spec;
  spec.target_rate_hz = 8000;
  const auto lo = dsp::degrade(hi, spec);
  const auto back = dsp::resample(lo, 24000);

  // energy above 4.2 kHz must be far below the total
  const int fft = 4096;
  const auto spec_pow = dsp::stft_power(back, 1000.0 * fft / 24000.0, 50.0, fft);
  double total = 0.0, high = 0.0;
  const double hz_per_bin = 24000.0 / fft;
  for (int64_t t = 0; t < spec_pow.num_frames; ++t) {
    for (int k = 0; k < spec_pow.num_bins; ++k) {
      const double p = spec_pow.power[t * spec_pow.num_bins + k];
      total += p;
      if (k * hz_per_bin > 4200.0) high += p;
    }
  }
  CHECK(high < total * 1e-5);  // >= 50 dB down
}
