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
// Writes synthetic speech-shaped WAV fixtures for the CLI end-to-end test:
//   make_fixtures <dir> <count> <milliseconds> <sample_rate>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "audio_io.h"
#include "test_support.h"

int main(int argc, char **argv) {
  if (argc != 5) {
    std::cerr << "usage: make_fixtures <dir> <count> <milliseconds> <sample_rate>\n";
    return 2;
  }
  const std::string dir = argv[1];
  const int count = std::atoi(argv[2]);
  const double ms = std::atof(argv[3]);
  const int rate = std::atoi(argv[4]);
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    const int64_t n = static_cast<int64_t>(ms * rate / 1000.0);
    const auto buf = bwx::testing::speechlike(n, rate, 1000 + i);
    bwx::audio::write_wav(buf, dir + "/u" + std::to_string(i) + ".wav");
  }
  return 0;
}
