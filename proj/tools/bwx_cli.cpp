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
// Command-line front end for the bwx shared library. Exit codes: 0 success,
// 1 data/processing errors, 2 usage errors.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bwx.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct AudioDeleter {
  void operator()(bwx_audio *a) const { bwx_audio_free(a); }
};
struct MelDeleter {
  void operator()(bwx_mel *m) const { bwx_mel_free(m); }
};
struct ModelDeleter {
  void operator()(bwx_model *m) const { bwx_model_free(m); }
};
struct ConfigDeleter {
  void operator()(bwx_config *c) const { bwx_config_free(c); }
};

using AudioPtr = std::unique_ptr<bwx_audio, AudioDeleter>;
using MelPtr = std::unique_ptr<bwx_mel, MelDeleter>;
using ModelPtr = std::unique_ptr<bwx_model, ModelDeleter>;
using ConfigPtr = std::unique_ptr<bwx_config, ConfigDeleter>;

[[noreturn]] void fail(const std::string &what, int code = kExitData) {
  std::cerr << "error: " << what;
  const char *detail = bwx_last_error();
  if (detail && detail[0] != '\0') std::cerr << ": " << detail;
  std::cerr << "\n";
  std::exit(code);
}

ConfigPtr load_config(const std::string &path, bool paper_scale) {
  bwx_config *cfg = nullptr;
  if (!path.empty()) {
    if (bwx_config_load(path.c_str(), &cfg) != BWX_OK) fail("cannot load config " + path);
  } else if (paper_scale) {
    if (bwx_config_paper(&cfg) != BWX_OK) fail("cannot build paper config");
  } else {
    if (bwx_config_default(&cfg) != BWX_OK) fail("cannot build default config");
  }
  return ConfigPtr(cfg);
}

std::vector<std::string> wav_names(const std::string &dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) fail("not a directory: " + dir);
  for (const auto &entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

// label=dir pairs from repeated --cond flags
void split_conditions(const std::vector<std::string> &specs,
                      std::vector<std::string> &labels, std::vector<std::string> &dirs) {
  for (const auto &s : specs) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= s.size())
      fail("condition must be label=dir, got '" + s + "'", kExitUsage);
    labels.push_back(s.substr(0, eq));
    dirs.push_back(s.substr(eq + 1));
  }
}

int cmd_degrade(const std::string &in_dir, const std::string &out_dir,
                const std::string &mode, const std::string &codec_cmd_in, int target_rate) {
  std::string codec_cmd;
  if (mode == "codec" || mode == "external_codec") {
    if (codec_cmd_in.empty())
      fail("--mode codec requires --codec-cmd", kExitUsage);
    codec_cmd = codec_cmd_in;
  } else if (mode != "band_limit" && mode != "band_limit_only" && !mode.empty()) {
    fail("unknown --mode '" + mode + "' (band_limit or codec)", kExitUsage);
  }
  const auto names = wav_names(in_dir);
  if (names.empty()) fail("no .wav files in " + in_dir);
  fs::create_directories(out_dir);

  std::ofstream manifest(fs::path(out_dir) / "manifest.tsv", std::ios::trunc);
  if (!manifest) fail("cannot write manifest in " + out_dir);

  size_t failures = 0;
  for (const auto &name : names) {
    const std::string in_path = (fs::path(in_dir) / name).string();
    const std::string out_path = (fs::path(out_dir) / name).string();
    bwx_audio *in = nullptr;
    if (bwx_audio_read_wav(in_path.c_str(), &in) != BWX_OK) {
      std::cerr << "skip " << in_path << ": " << bwx_last_error() << "\n";
      ++failures;
      continue;
    }
    AudioPtr in_guard(in);
    bwx_audio *out = nullptr;
    if (bwx_audio_degrade(in, target_rate, codec_cmd.empty() ? nullptr : codec_cmd.c_str(),
                          &out) != BWX_OK) {
      std::cerr << "skip " << in_path << ": " << bwx_last_error() << "\n";
      ++failures;
      continue;
    }
    AudioPtr out_guard(out);
    if (bwx_audio_write_wav(out, out_path.c_str()) != BWX_OK) {
      std::cerr << "skip " << out_path << ": " << bwx_last_error() << "\n";
      ++failures;
      continue;
    }
    const double ms = 1000.0 * static_cast<double>(bwx_audio_num_samples(out)) /
                      bwx_audio_sample_rate(out);
    manifest << out_path << '\t' << ms << '\n';
  }
  std::cout << (names.size() - failures) << " of " << names.size() << " files degraded to "
            << out_dir << "\n";
  return failures == 0 ? kExitOk : kExitData;
}

int cmd_make_manifest(const std::string &dir, const std::string &out, double min_ms,
                      double max_ms) {
  const auto names = wav_names(dir);
  std::ofstream f(out, std::ios::trunc);
  if (!f) fail("cannot write " + out);
  size_t kept = 0;
  for (const auto &name : names) {
    const std::string path = (fs::path(dir) / name).string();
    bwx_audio *a = nullptr;
    if (bwx_audio_read_wav(path.c_str(), &a) != BWX_OK) fail("cannot read " + path);
    AudioPtr guard(a);
    const double ms =
        1000.0 * static_cast<double>(bwx_audio_num_samples(a)) / bwx_audio_sample_rate(a);
    if (min_ms > 0 && ms < min_ms) continue;
    if (max_ms > 0 && ms > max_ms) continue;
    f << path << '\t' << ms << '\n';
    ++kept;
  }
  std::cout << "manifest with " << kept << " utterances written to " << out << "\n";
  return kExitOk;
}

int cmd_train(const std::string &config_path, bool paper_scale, const std::string &corpus,
              const std::string &out_dir, const std::string &resume, uint64_t seed,
              bool quiet) {
  ConfigPtr cfg = load_config(config_path, paper_scale);
  bwx_model *model = nullptr;
  if (bwx_model_create(cfg.get(), seed, &model) != BWX_OK) fail("cannot create model");
  ModelPtr model_guard(model);

  auto callback = [](int64_t step, double loss, double grad_norm, double wall_ms,
                     void *user) {
    if (*static_cast<bool *>(user)) return;
    std::printf("step %6lld  loss %8.4f nats  grad %9.3f  %7.1f ms\n",
                static_cast<long long>(step), loss, grad_norm, wall_ms);
    std::fflush(stdout);
  };
  bool quiet_flag = quiet;
  if (bwx_train_run(model, corpus.c_str(), cfg.get(), out_dir.c_str(),
                    resume.empty() ? nullptr : resume.c_str(), callback,
                    &quiet_flag) != BWX_OK)
    fail("training failed");
  std::cout << "checkpoints and train_log.jsonl written to " << out_dir << "\n";
  return kExitOk;
}

int cmd_synthesize(const std::string &checkpoint, const std::string &in_wav,
                   const std::string &out_wav, uint64_t seed, double temperature,
                   const std::string &config_path) {
  bwx_model *model = nullptr;
  if (bwx_model_load(checkpoint.c_str(), &model) != BWX_OK)
    fail("cannot load checkpoint " + checkpoint, kExitUsage);
  ModelPtr model_guard(model);

  bwx_audio *in = nullptr;
  if (bwx_audio_read_wav(in_wav.c_str(), &in) != BWX_OK) fail("cannot read " + in_wav);
  AudioPtr in_guard(in);

  ConfigPtr cfg = load_config(config_path, false);

  // conditioning audio must sit at the degraded rate (output rate / 3 in the
  // stock pipeline); resample anything else
  AudioPtr at_rate;
  const bwx_audio *cond_audio = in;
  const int want_rate = bwx_config_degrade_rate(cfg.get());
  if (bwx_audio_sample_rate(in) != want_rate) {
    bwx_audio *r = nullptr;
    if (bwx_audio_resample(in, want_rate, &r) != BWX_OK) fail("cannot resample input");
    at_rate.reset(r);
    cond_audio = r;
  }

  bwx_mel *mel = nullptr;
  if (bwx_mel_compute(cond_audio, cfg.get(), &mel) != BWX_OK) fail("cannot compute log-mel");
  MelPtr mel_guard(mel);

  bwx_audio *out = nullptr;
  if (bwx_synthesize(model, mel, seed, temperature, &out) != BWX_OK) fail("synthesis failed");
  AudioPtr out_guard(out);
  if (bwx_audio_write_wav(out, out_wav.c_str()) != BWX_OK) fail("cannot write " + out_wav);
  std::cout << out_wav << ": " << bwx_audio_num_samples(out) << " samples @ "
            << bwx_audio_sample_rate(out) << " Hz\n";
  return kExitOk;
}

int cmd_evaluate(const std::string &ref_dir, const std::vector<std::string> &cond_specs,
                 const std::string &report, const std::string &spectrogram_dir) {
  std::vector<std::string> labels, dirs;
  split_conditions(cond_specs, labels, dirs);
  std::vector<const char *> label_ptrs, dir_ptrs;
  for (const auto &l : labels) label_ptrs.push_back(l.c_str());
  for (const auto &d : dirs) dir_ptrs.push_back(d.c_str());
  if (bwx_evaluate_dirs(ref_dir.c_str(), label_ptrs.data(), dir_ptrs.data(), labels.size(),
                        report.c_str(),
                        spectrogram_dir.empty() ? nullptr : spectrogram_dir.c_str()) != BWX_OK)
    fail("evaluation failed");
  std::cout << "report written to " << report << "\n";
  return kExitOk;
}

int cmd_mushra_prepare(const std::string &ref_dir, const std::vector<std::string> &cond_specs,
                       const std::string &anchor, const std::string &test_id,
                       const std::string &out, uint64_t seed, double min_ms, double max_ms,
                       size_t limit) {
  std::vector<std::string> labels, dirs;
  split_conditions(cond_specs, labels, dirs);
  std::vector<const char *> label_ptrs, dir_ptrs;
  for (const auto &l : labels) label_ptrs.push_back(l.c_str());
  for (const auto &d : dirs) dir_ptrs.push_back(d.c_str());
  if (bwx_mushra_prepare(ref_dir.c_str(), label_ptrs.data(), dir_ptrs.data(), labels.size(),
                         anchor.c_str(), test_id.c_str(), seed, min_ms, max_ms, limit,
                         out.c_str()) != BWX_OK)
    fail("mushra-prepare failed");
  std::cout << "test definition written to " << out << "\n";
  return kExitOk;
}

int cmd_mushra_serve(const std::string &testdef, const std::string &journal,
                     const std::string &ui_dir, const std::string &host, int port,
                     bool screening) {
  std::cout << "serving MUSHRA test from " << testdef << " on http://" << host << ":" << port
            << "\n";
  if (bwx_mushra_serve(testdef.c_str(), journal.c_str(),
                       ui_dir.empty() ? nullptr : ui_dir.c_str(), host.c_str(), port,
                       screening ? 1 : 0) != BWX_OK)
    fail("mushra service failed");
  return kExitOk;
}

int cmd_mushra_aggregate(const std::string &testdef, const std::string &journal,
                         bool screening, const std::string &out) {
  char *json = nullptr;
  if (bwx_mushra_aggregate(testdef.c_str(), journal.c_str(), screening ? 1 : 0, &json) !=
      BWX_OK)
    fail("aggregation failed");
  if (out.empty()) {
    std::cout << json << "\n";
  } else {
    std::ofstream f(out, std::ios::trunc);
    f << json << "\n";
    if (!f) {
      bwx_string_free(json);
      fail("cannot write " + out);
    }
    std::cout << "aggregate written to " << out << "\n";
  }
  bwx_string_free(json);
  return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"bwx - speech bandwidth extension toolkit"};
  app.require_subcommand(1);

  // degrade
  std::string in_dir, out_dir, degrade_mode = "band_limit", degrade_codec;
  int target_rate = 8000;
  auto *degrade = app.add_subcommand("degrade", "Band-limit (and optionally codec-degrade) a corpus");
  degrade->add_option("--in", in_dir, "directory of source WAVs")->required();
  degrade->add_option("--out", out_dir, "output directory")->required();
  degrade->add_option("--mode", degrade_mode, "band_limit (default) or codec");
  degrade->add_option("--codec-cmd", degrade_codec,
                      "external codec command with {in}/{out} placeholders");
  degrade->add_option("--rate", target_rate, "target sample rate (default 8000)");

  // manifest
  std::string man_dir, man_out;
  double man_min_ms = 0, man_max_ms = 0;
  auto *manifest = app.add_subcommand("manifest", "Write a path<TAB>duration_ms manifest");
  manifest->add_option("--dir", man_dir, "directory of WAVs")->required();
  manifest->add_option("--out", man_out, "manifest path")->required();
  manifest->add_option("--min-ms", man_min_ms, "minimum duration filter");
  manifest->add_option("--max-ms", man_max_ms, "maximum duration filter");

  // train
  std::string train_config, train_corpus, train_out, train_resume;
  uint64_t train_seed = 0;
  bool train_paper = false, train_quiet = false;
  auto *train = app.add_subcommand("train", "Train a model from a corpus manifest");
  train->add_option("--config", train_config, "pipeline config file");
  train->add_flag("--paper-scale", train_paper, "use the paper-scale defaults");
  train->add_option("--corpus", train_corpus, "manifest of 24 kHz originals")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  train->add_option("--seed", train_seed, "model init seed");
  train->add_flag("--quiet", train_quiet, "suppress per-step output");

  // synthesize
  std::string syn_ckpt, syn_in, syn_out, syn_config;
  uint64_t syn_seed = 0;
  double syn_temp = 1.0;
  auto *synth = app.add_subcommand("synthesize", "Bandwidth-extend an 8 kHz WAV");
  synth->add_option("--checkpoint", syn_ckpt, "BWXC checkpoint")->required();
  synth->add_option("--in", syn_in, "8 kHz input WAV")->required();
  synth->add_option("--out", syn_out, "24 kHz output WAV")->required();
  synth->add_option("--seed", syn_seed, "sampling seed");
  synth->add_option("--temperature", syn_temp, "sampling temperature (default 1.0)");
  synth->add_option("--config", syn_config, "pipeline config for feature extraction");

  // evaluate
  std::string eval_ref, eval_report, eval_spectrograms;
  std::vector<std::string> eval_conds;
  auto *evaluate = app.add_subcommand("evaluate", "Objective comparison of conditions");
  evaluate->add_option("--ref-dir", eval_ref, "reference WAV directory")->required();
  evaluate->add_option("--cond", eval_conds, "condition as label=dir (repeatable)")
      ->required()
      ->expected(-1);
  evaluate->add_option("--out", eval_report, "report CSV path")->required();
  evaluate->add_option("--spectrograms", eval_spectrograms, "directory for PGM images");

  // mushra-prepare
  std::string mp_ref, mp_anchor, mp_test_id = "bwx-mushra", mp_out;
  std::vector<std::string> mp_conds;
  uint64_t mp_seed = 0;
  double mp_min_ms = 0, mp_max_ms = 0;
  size_t mp_limit = 0;
  auto *mprep = app.add_subcommand("mushra-prepare", "Build a blinded MUSHRA test definition");
  mprep->add_option("--ref-dir", mp_ref, "reference WAV directory")->required();
  mprep->add_option("--cond", mp_conds, "condition as label=dir (repeatable)")
      ->required()
      ->expected(-1);
  mprep->add_option("--anchor", mp_anchor, "label of the low-quality anchor")->required();
  mprep->add_option("--test-id", mp_test_id, "test identifier");
  mprep->add_option("--out", mp_out, "test definition JSON path")->required();
  mprep->add_option("--seed", mp_seed, "token randomness seed (0 = clock)");
  mprep->add_option("--min-ms", mp_min_ms, "minimum utterance duration");
  mprep->add_option("--max-ms", mp_max_ms, "maximum utterance duration");
  mprep->add_option("--limit", mp_limit, "random utterance subset size (0 = all)");

  // mushra-serve
  std::string ms_testdef, ms_journal, ms_ui, ms_host = "127.0.0.1";
  int ms_port = 8080;
  bool ms_screening = false;
  auto *mserve = app.add_subcommand("mushra-serve", "Run the rating service");
  mserve->add_option("--testdef", ms_testdef, "test definition JSON")->required();
  mserve->add_option("--journal", ms_journal, "append-only rating journal")->required();
  mserve->add_option("--ui-dir", ms_ui, "static rater UI directory");
  mserve->add_option("--host", ms_host, "bind host (default 127.0.0.1)");
  mserve->add_option("--port", ms_port, "bind port (default 8080)");
  mserve->add_flag("--screening", ms_screening, "enable hidden-reference screening");

  // mushra-aggregate
  std::string ma_testdef, ma_journal, ma_out;
  bool ma_screening = false;
  auto *magg = app.add_subcommand("mushra-aggregate", "Aggregate a rating journal");
  magg->add_option("--testdef", ma_testdef, "test definition JSON")->required();
  magg->add_option("--journal", ma_journal, "rating journal")->required();
  magg->add_flag("--screening", ma_screening, "enable hidden-reference screening");
  magg->add_option("--out", ma_out, "output JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);  // --help exits 0
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (degrade->parsed())
      return cmd_degrade(in_dir, out_dir, degrade_mode, degrade_codec, target_rate);
    if (manifest->parsed()) return cmd_make_manifest(man_dir, man_out, man_min_ms, man_max_ms);
    if (train->parsed())
      return cmd_train(train_config, train_paper, train_corpus, train_out, train_resume,
                       train_seed, train_quiet);
    if (synth->parsed())
      return cmd_synthesize(syn_ckpt, syn_in, syn_out, syn_seed, syn_temp, syn_config);
    if (evaluate->parsed())
      return cmd_evaluate(eval_ref, eval_conds, eval_report, eval_spectrograms);
    if (mprep->parsed())
      return cmd_mushra_prepare(mp_ref, mp_conds, mp_anchor, mp_test_id, mp_out, mp_seed,
                                mp_min_ms, mp_max_ms, mp_limit);
    if (mserve->parsed())
      return cmd_mushra_serve(ms_testdef, ms_journal, ms_ui, ms_host, ms_port, ms_screening);
    if (magg->parsed())
      return cmd_mushra_aggregate(ma_testdef, ma_journal, ma_screening, ma_out);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
