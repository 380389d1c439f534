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
// HTTP JSON API for running a MUSHRA listening test:
//   POST /api/session                      {"test_id": ...}
//   GET  /api/session/{sid}/trial/{i}
//   POST /api/session/{sid}/trial/{i}/scores
//   GET  /api/test/{tid}/aggregate[?screening=1]
//   GET  /audio/{token}
// plus a static mount for the rater UI. Responses outside the aggregate
// endpoint never carry condition labels.

#ifndef BWX_MUSHRA_SERVICE_H_
#define BWX_MUSHRA_SERVICE_H_

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "mushra.h"

namespace httplib {
class Server;
}

namespace bwx::mushra {

struct ServiceOptions {
  std::string ui_dir;  // optional static mount for the rater page
  ScreeningRule screening;
};

class Service {
 public:
  Service(MushraTest test, std::string journal_path, ServiceOptions options);
  ~Service();

  // Blocks serving requests until stop() is called from another thread.
  void serve(const std::string &host, int port);
  // Binds to an ephemeral port and returns it; serving continues on a
  // background thread inside httplib.
  int bind_any_port(const std::string &host);
  void listen_after_bind_async();
  void stop();
  void wait_until_ready() const;

 private:
  void install_routes();

  MushraTest test_;
  ServiceOptions options_;
  mutable std::mutex mutex_;  // guards store_ and sessions_
  RatingStore store_;
  std::map<std::string, bool> sessions_;  // session id -> exists
  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<std::thread> listener_;
  std::atomic<bool> stopped_{false};
};

}  // namespace bwx::mushra

#endif  // BWX_MUSHRA_SERVICE_H_
