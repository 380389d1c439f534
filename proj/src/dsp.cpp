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

#include "dsp.h"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>

#include "error.h"

namespace bwx::dsp {
namespace {

constexpr double kPi = std::numbers::pi;

// Kaiser-windowed sinc prototype. 128 taps per polyphase branch with the
// transition band straddling the output Nyquist gives < 0.001 dB error below
// 0.9 * Nyquist and > 80 dB attenuation from 1.2 * Nyquist up.
constexpr int kTapsPerPhase = 128;
constexpr double kKaiserBeta = 9.0;
constexpr double kCutoffScale = 1.0375;
constexpr int kMaxRatio = 512;

double bessel_i0(double x) {
  // power series; converges quickly for the argument range used here
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

int bit_reverse(int x, int log2n) {
  int r = 0;
  for (int i = 0; i < log2n; ++i) {
    r = (r << 1) | (x & 1);
    x >>= 1;
  }
  return r;
}

std::string format_command(const std::string &tmpl, const std::string &in,
                           const std::string &out) {
  std::string cmd = tmpl;
  auto replace_all = [&cmd](const std::string &key, const std::string &value) {
    size_t pos = 0;
    while ((pos = cmd.find(key, pos)) != std::string::npos) {
      cmd.replace(pos, key.size(), value);
      pos += value.size();
    }
  };
  replace_all("{in}", in);
  replace_all("{out}", out);
  return cmd;
}

}  // namespace

int MelConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * sample_rate_hz / 1000.0));
}

int MelConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }

double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

std::vector<double> hann_window(int length) {
  if (length < 2) raise(ErrorCode::kInvalidArgument, "hann_window: length must be >= 2");
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n)
    w[n] = 0.5 * (1.0 - std::cos(2.0 * kPi * n / length));
  return w;
}

void fft(std::vector<std::complex<double>> &a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    raise(ErrorCode::kInvalidArgument, "fft: size must be a power of two");
  int log2n = 0;
  while ((size_t{1} << log2n) < n) ++log2n;

  for (size_t i = 0; i < n; ++i) {
    size_t j = static_cast<size_t>(bit_reverse(static_cast<int>(i), log2n));
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto &x : a) x /= static_cast<double>(n);
  }
}

PowerSpectrogram stft_power(const AudioBuffer &buf, double window_ms,
                            double hop_ms, int fft_size) {
  if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0)
    raise(ErrorCode::kInvalidArgument, "stft: fft_size must be a power of two");
  const int sr = buf.sample_rate_hz;
  const int win = static_cast<int>(std::lround(window_ms * sr / 1000.0));
  const int hop = static_cast<int>(std::lround(hop_ms * sr / 1000.0));
  if (hop <= 0) raise(ErrorCode::kInvalidArgument, "stft: hop must be positive");
  if (win > fft_size)
    raise(ErrorCode::kInvalidArgument, "stft: window (" + std::to_string(win) +
                                           " samples) longer than fft_size " +
                                           std::to_string(fft_size));

  const auto window = hann_window(win);
  const int64_t len = static_cast<int64_t>(buf.samples.size());
  const int64_t frames = (len + hop - 1) / hop;  // ceil(len / hop)

  PowerSpectrogram out;
  out.num_frames = frames;
  out.num_bins = fft_size / 2 + 1;
  out.power.assign(static_cast<size_t>(frames) * out.num_bins, 0.0);

  std::vector<std::complex<double>> work(fft_size);
  for (int64_t t = 0; t < frames; ++t) {
    const int64_t start = t * hop;
    std::fill(work.begin(), work.end(), std::complex<double>(0.0, 0.0));
    const int64_t avail = std::min<int64_t>(win, len - start);
    for (int64_t i = 0; i < avail; ++i)
      work[i] = buf.samples[start + i] * window[i];
    fft(work, false);
    double *row = out.power.data() + t * out.num_bins;
    for (int k = 0; k < out.num_bins; ++k) row[k] = std::norm(work[k]);
  }
  return out;
}

std::vector<double> mel_filterbank(int num_bins, int fft_size, int sample_rate_hz,
                                   double fmin_hz, double fmax_hz) {
  if (num_bins < 1) raise(ErrorCode::kInvalidArgument, "mel_filterbank: num_bins < 1");
  if (!(fmin_hz < fmax_hz) || fmax_hz > sample_rate_hz / 2.0 + 1e-9)
    raise(ErrorCode::kInvalidArgument,
          "mel_filterbank: need fmin < fmax <= sample_rate/2");

  const int n_fft_bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(fmin_hz);
  const double mel_hi = hz_to_mel(fmax_hz);

  std::vector<double> edges(num_bins + 2);
  for (int i = 0; i < num_bins + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (num_bins + 1));

  std::vector<double> fb(static_cast<size_t>(num_bins) * n_fft_bins, 0.0);
  const double hz_per_bin = static_cast<double>(sample_rate_hz) / fft_size;
  for (int m = 0; m < num_bins; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (int k = 0; k < n_fft_bins; ++k) {
      const double f = k * hz_per_bin;
      double w = 0.0;
      if (f > lo && f < center)
        w = (f - lo) / (center - lo);
      else if (f >= center && f < hi)
        w = (hi - f) / (hi - center);
      if (w > 0.0) {
        fb[static_cast<size_t>(m) * n_fft_bins + k] = w;
        any = true;
      }
    }
    if (!any)
      raise(ErrorCode::kInvalidArgument,
            "mel_filterbank: degenerate band edges, filter " + std::to_string(m) +
                " covers no FFT bin (centers " + std::to_string(lo) + "/" +
                std::to_string(center) + "/" + std::to_string(hi) + " Hz)");
  }
  return fb;
}

MelSpectrogram log_mel(const AudioBuffer &buf, const MelConfig &config) {
  if (buf.sample_rate_hz != config.sample_rate_hz)
    raise(ErrorCode::kInvalidArgument,
          "log_mel: buffer rate " + std::to_string(buf.sample_rate_hz) +
              " does not match config rate " + std::to_string(config.sample_rate_hz));

  const double fmax = config.effective_fmax();
  const auto spec = stft_power(buf, config.window_ms, config.hop_ms, config.fft_size);
  const auto fb = mel_filterbank(config.num_bins, config.fft_size,
                                 config.sample_rate_hz, config.fmin_hz, fmax);

  MelSpectrogram mel;
  mel.num_frames = spec.num_frames;
  mel.num_bins = config.num_bins;
  mel.frame_rate_hz = 1000.0 / config.hop_ms;
  mel.fmin_hz = config.fmin_hz;
  mel.fmax_hz = fmax;
  mel.source_sample_rate_hz = config.sample_rate_hz;
  mel.log_energies.resize(static_cast<size_t>(spec.num_frames) * config.num_bins);

  for (int64_t t = 0; t < spec.num_frames; ++t) {
    const double *row = spec.power.data() + t * spec.num_bins;
    for (int m = 0; m < config.num_bins; ++m) {
      const double *w = fb.data() + static_cast<size_t>(m) * spec.num_bins;
      double e = 0.0;
      for (int k = 0; k < spec.num_bins; ++k) e += w[k] * row[k];
      mel.log_energies[t * config.num_bins + m] =
          std::log(std::max(e, config.energy_floor));
    }
  }
  return mel;
}

AudioBuffer resample(const AudioBuffer &buf, int target_rate_hz) {
  if (target_rate_hz <= 0 || buf.sample_rate_hz <= 0)
    raise(ErrorCode::kInvalidArgument, "resample: rates must be positive");
  if (target_rate_hz == buf.sample_rate_hz) return buf;

  const int src = buf.sample_rate_hz;
  const int g = std::gcd(src, target_rate_hz);
  const int64_t up = target_rate_hz / g;    // L
  const int64_t down = src / g;             // M
  if (up > kMaxRatio || down > kMaxRatio)
    raise(ErrorCode::kInvalidArgument,
          "resample: rate ratio " + std::to_string(src) + "->" +
              std::to_string(target_rate_hz) + " is not a small rational");

  // Prototype lowpass at the upsampled rate src*L; odd length, zero phase.
  const int64_t total_taps = kTapsPerPhase * up + 1;
  const int64_t center = (total_taps - 1) / 2;
  const double fc =
      kCutoffScale * (std::min(src, target_rate_hz) / 2.0) / (static_cast<double>(src) * up);
  std::vector<double> h(total_taps);
  const double denom = bessel_i0(kKaiserBeta);
  for (int64_t i = 0; i < total_taps; ++i) {
    const double x = static_cast<double>(i - center);
    const double r = 2.0 * x / static_cast<double>(total_taps - 1);  // in [-1, 1]
    const double kaiser = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
    h[i] = 2.0 * fc * sinc(2.0 * fc * x) * kaiser * static_cast<double>(up);
  }

  const int64_t in_len = static_cast<int64_t>(buf.samples.size());
  const int64_t out_len =
      static_cast<int64_t>(std::llround(static_cast<double>(in_len) * target_rate_hz / src));

  AudioBuffer out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.assign(out_len, 0.0);
  for (int64_t j = 0; j < out_len; ++j) {
    const int64_t p = j * down;  // position on the upsampled grid
    // y[j] = sum_n x[n] h[center + p - n*up]
    int64_t n_lo = (p + center - (total_taps - 1) + up - 1) / up;  // ceil
    int64_t n_hi = (p + center) / up;                              // floor
    n_lo = std::max<int64_t>(n_lo, 0);
    n_hi = std::min<int64_t>(n_hi, in_len - 1);
    double acc = 0.0;
    for (int64_t nn = n_lo; nn <= n_hi; ++nn)
      acc += buf.samples[nn] * h[center + p - nn * up];
    out.samples[j] = acc;
  }
  return out;
}

AudioBuffer degrade(const AudioBuffer &buf, const DegradationSpec &spec) {
  if (spec.target_rate_hz <= 0)
    raise(ErrorCode::kInvalidArgument, "degrade: target rate must be positive");
  if (buf.sample_rate_hz <= spec.target_rate_hz)
    raise(ErrorCode::kInvalidArgument, "degrade: source rate must exceed target");

  AudioBuffer limited = resample(buf, spec.target_rate_hz);
  for (double &s : limited.samples) s = std::clamp(s, -1.0, 1.0);
  if (spec.mode == DegradationMode::kBandLimitOnly) return limited;

  if (spec.external_codec_command.empty())
    raise(ErrorCode::kInvalidArgument, "degrade: external codec mode needs a command");

  namespace fs = std::filesystem;
  static std::atomic<uint64_t> counter{0};
  std::random_device rd;
  const uint64_t tag =
      (static_cast<uint64_t>(rd()) << 20) ^ counter.fetch_add(1);
  const fs::path dir = fs::temp_directory_path();
  const fs::path in_path = dir / ("bwx_codec_in_" + std::to_string(tag) + ".wav");
  const fs::path out_path = dir / ("bwx_codec_out_" + std::to_string(tag) + ".wav");

  audio::write_wav(limited, in_path.string());
  const std::string cmd =
      format_command(spec.external_codec_command, in_path.string(), out_path.string()) +
      " 2>&1";

  std::string diagnostics;
  FILE *pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    fs::remove(in_path);
    raise(ErrorCode::kCodec, "degrade: failed to launch codec command");
  }
  std::array<char, 512> chunk{};
  while (size_t got = fread(chunk.data(), 1, chunk.size(), pipe))
    diagnostics.append(chunk.data(), got);
  const int status = pclose(pipe);
  if (diagnostics.size() > 2000) diagnostics.resize(2000);

  auto cleanup = [&] {
    std::error_code ec;
    fs::remove(in_path, ec);
    fs::remove(out_path, ec);
  };

  if (status != 0) {
    cleanup();
    raise(ErrorCode::kCodec, "degrade: codec command exited with status " +
                                 std::to_string(status) + "; output: " + diagnostics);
  }

  AudioBuffer coded;
  try {
    coded = audio::read_wav(out_path.string());
  } catch (const Error &e) {
    cleanup();
    raise(ErrorCode::kCodec,
          std::string("degrade: codec output unreadable: ") + e.what());
  }
  cleanup();

  if (coded.sample_rate_hz != spec.target_rate_hz)
    raise(ErrorCode::kCodec, "degrade: codec produced rate " +
                                 std::to_string(coded.sample_rate_hz) + ", expected " +
                                 std::to_string(spec.target_rate_hz));
  const int64_t want = static_cast<int64_t>(limited.samples.size());
  const int64_t got = static_cast<int64_t>(coded.samples.size());
  const int64_t frame = spec.target_rate_hz / 50;  // one 20 ms codec frame of slack
  if (std::llabs(got - want) > std::max<int64_t>(frame, 1))
    raise(ErrorCode::kCodec, "degrade: codec output length " + std::to_string(got) +
                                 " too far from expected " + std::to_string(want));
  return coded;
}

}  // namespace bwx::dsp
