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

#include "evalkit.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>

#include "error.h"

namespace bwx::eval {
namespace {

constexpr double kPowerFloor = 1e-10;
constexpr double kSnrCapDb = 120.0;
constexpr double kWindowMs = 50.0;
constexpr double kHopMs = 12.5;

// Whole frames only: frame t covers [t*hop, t*hop + win), no tail padding.
// Appending less than one hop of silence to both signals then leaves the
// distance untouched for hop-aligned inputs.
int64_t full_frames(int64_t len, int64_t win, int64_t hop) {
  if (len < win) return 0;
  return (len - win) / hop + 1;
}

std::vector<double> frame_power(const std::vector<double> &x, int64_t start, int64_t win,
                                int fft_size, const std::vector<double> &window) {
  std::vector<std::complex<double>> work(fft_size, {0.0, 0.0});
  for (int64_t i = 0; i < win; ++i) work[i] = x[start + i] * window[i];
  dsp::fft(work, false);
  std::vector<double> p(fft_size / 2 + 1);
  for (size_t k = 0; k < p.size(); ++k) p[k] = std::norm(work[k]);
  return p;
}

int next_pow2(int64_t n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

double lsd(const AudioBuffer &reference, const AudioBuffer &test) {
  if (reference.sample_rate_hz != test.sample_rate_hz)
    raise(ErrorCode::kInvalidArgument, "lsd: sample rates differ");
  const int sr = reference.sample_rate_hz;
  const int64_t len =
      std::min<int64_t>(reference.samples.size(), test.samples.size());
  const int64_t win = std::llround(kWindowMs * sr / 1000.0);
  const int64_t hop = std::llround(kHopMs * sr / 1000.0);
  const int fft_size = next_pow2(win);
  const auto window = dsp::hann_window(static_cast<int>(win));

  const int64_t frames = full_frames(len, win, hop);
  if (frames == 0) raise(ErrorCode::kInvalidArgument, "lsd: signals shorter than one window");

  double frame_acc = 0.0;
  for (int64_t t = 0; t < frames; ++t) {
    const auto pr = frame_power(reference.samples, t * hop, win, fft_size, window);
    const auto pt = frame_power(test.samples, t * hop, win, fft_size, window);
    double bin_acc = 0.0;
    for (size_t k = 0; k < pr.size(); ++k) {
      const double d = 10.0 * std::log10(pr[k] + kPowerFloor) -
                       10.0 * std::log10(pt[k] + kPowerFloor);
      bin_acc += d * d;
    }
    frame_acc += bin_acc / static_cast<double>(pr.size());
  }
  return std::sqrt(frame_acc / static_cast<double>(frames));
}

double snr_band(const AudioBuffer &reference, const AudioBuffer &test, double f_lo_hz,
                double f_hi_hz) {
  if (reference.sample_rate_hz != test.sample_rate_hz)
    raise(ErrorCode::kInvalidArgument, "snr_band: sample rates differ");
  const int sr = reference.sample_rate_hz;
  if (!(f_lo_hz < f_hi_hz) || f_hi_hz > sr / 2.0 + 1e-9)
    raise(ErrorCode::kInvalidArgument, "snr_band: need f_lo < f_hi <= Nyquist");

  const int64_t len =
      std::min<int64_t>(reference.samples.size(), test.samples.size());
  if (len == 0) raise(ErrorCode::kInvalidArgument, "snr_band: empty signals");
  const int n = next_pow2(len);

  auto band_pass = [&](const std::vector<double> &x) {
    std::vector<std::complex<double>> spec(n, {0.0, 0.0});
    for (int64_t i = 0; i < len; ++i) spec[i] = x[i];
    dsp::fft(spec, false);
    const double hz_per_bin = static_cast<double>(sr) / n;
    for (int k = 0; k <= n / 2; ++k) {
      const double f = k * hz_per_bin;
      if (f < f_lo_hz || f > f_hi_hz) {
        spec[k] = 0.0;
        if (k > 0 && k < n / 2) spec[n - k] = 0.0;
      }
    }
    dsp::fft(spec, true);
    std::vector<double> y(len);
    for (int64_t i = 0; i < len; ++i) y[i] = spec[i].real();
    return y;
  };

  const auto ref_b = band_pass(reference.samples);
  const auto test_b = band_pass(test.samples);
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < len; ++i) {
    num += ref_b[i] * ref_b[i];
    const double e = ref_b[i] - test_b[i];
    den += e * e;
  }
  if (den <= 0.0) return kSnrCapDb;
  if (num <= 0.0) return -kSnrCapDb;
  return std::min(10.0 * std::log10(num / den), kSnrCapDb);
}

void render_spectrogram(const AudioBuffer &buf, const std::string &pgm_path,
                        int fft_size) {
  if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0)
    raise(ErrorCode::kInvalidArgument, "render_spectrogram: fft_size must be a power of two");
  const int sr = buf.sample_rate_hz;
  const double window_ms = 1000.0 * fft_size / sr;
  const double hop_ms = window_ms / 2.0;
  const auto spec = dsp::stft_power(buf, window_ms, hop_ms, fft_size);

  double peak = 0.0;
  for (double p : spec.power) peak = std::max(peak, p);
  const double top_db = 10.0 * std::log10(std::max(peak, kPowerFloor));
  const double range_db = 80.0;

  const int64_t width = spec.num_frames;
  const int64_t height = spec.num_bins;
  std::string img;
  img.reserve(static_cast<size_t>(width * height) + 64);
  img += "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  // low frequencies at the bottom: row 0 is the highest bin
  for (int64_t row = 0; row < height; ++row) {
    const int64_t bin = height - 1 - row;
    for (int64_t t = 0; t < width; ++t) {
      const double p = spec.power[t * spec.num_bins + bin];
      const double db = 10.0 * std::log10(std::max(p, kPowerFloor));
      double v = (db - (top_db - range_db)) / range_db;
      v = std::clamp(v, 0.0, 1.0);
      img.push_back(static_cast<char>(std::lround(v * 255.0)));
    }
  }
  std::ofstream f(pgm_path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorCode::kIo, "cannot open spectrogram for writing: " + pgm_path);
  f.write(img.data(), static_cast<std::streamsize>(img.size()));
  if (!f) raise(ErrorCode::kIo, "short write: " + pgm_path);
}

std::vector<EvalReport> compare_conditions(
    const AudioBuffer &reference, const std::map<std::string, AudioBuffer> &conditions,
    const std::string &utterance_label) {
  std::vector<EvalReport> rows;
  for (const auto &[label, buf] : conditions) {
    AudioBuffer at_rate = buf.sample_rate_hz == reference.sample_rate_hz
                              ? buf
                              : dsp::resample(buf, reference.sample_rate_hz);
    EvalReport r;
    r.utterance = utterance_label;
    r.condition = label;
    r.lsd_db = lsd(reference, at_rate);
    r.snr_low_band_db = snr_band(reference, at_rate, 0.0,
                                 std::min(4000.0, reference.sample_rate_hz / 2.0));
    r.duration_ms = at_rate.duration_ms();
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const EvalReport &a, const EvalReport &b) {
                     if (a.lsd_db != b.lsd_db) return a.lsd_db < b.lsd_db;
                     return a.condition < b.condition;
                   });
  return rows;
}

void write_report_csv(const std::vector<EvalReport> &rows, const std::string &path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) raise(ErrorCode::kIo, "cannot open report for writing: " + path);
  f << "utterance,condition,lsd_db,snr_low_db,duration_ms\n";
  for (const auto &r : rows) {
    f << r.utterance << ',' << r.condition << ',' << r.lsd_db << ','
      << r.snr_low_band_db << ',' << r.duration_ms << '\n';
  }
  if (!f) raise(ErrorCode::kIo, "short write: " + path);
}

}  // namespace bwx::eval
