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

#include "mushra_service.h"

#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "error.h"

namespace bwx::mushra {
namespace {

using nlohmann::json;

void reply_json(httplib::Response &res, int status, const json &j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

void reply_error(httplib::Response &res, int status, const std::string &message) {
  reply_json(res, status, json{{"error", message}});
}

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Service::Service(MushraTest test, std::string journal_path, ServiceOptions options)
    : test_(std::move(test)),
      options_(std::move(options)),
      store_(std::move(journal_path)),
      server_(std::make_unique<httplib::Server>()) {
  test_.validate();
  install_routes();
}

Service::~Service() {
  stop();
  if (listener_ && listener_->joinable()) listener_->join();
}

void Service::install_routes() {
  httplib::Server &s = *server_;

  s.Post("/api/session", [this](const httplib::Request &req, httplib::Response &res) {
    json body;
    try {
      body = json::parse(req.body.empty() ? "{}" : req.body);
    } catch (const std::exception &) {
      return reply_error(res, 400, "request body is not JSON");
    }
    const std::string test_id = body.value("test_id", "");
    if (test_id != test_.test_id)
      return reply_error(res, 404, "unknown test id: " + test_id);
    std::mt19937_64 rng(static_cast<uint64_t>(now_ms()) ^
                        std::random_device{}());
    std::string sid;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      do {
        sid = random_token(rng);
      } while (sessions_.count(sid));
      sessions_[sid] = true;
    }
    reply_json(res, 200,
               json{{"session_id", sid},
                    {"num_trials", static_cast<int>(test_.trials.size())}});
  });

  s.Get(R"(/api/session/([0-9a-f]+)/trial/(\d+))",
        [this](const httplib::Request &req, httplib::Response &res) {
          const std::string sid = req.matches[1];
          const int index = std::stoi(req.matches[2]);
          {
            std::lock_guard<std::mutex> lock(mutex_);
            if (!sessions_.count(sid)) return reply_error(res, 404, "unknown session");
          }
          const int total = static_cast<int>(test_.trials.size());
          if (index >= total)
            return reply_json(res, 200, json{{"complete", true}, {"total", total}});
          if (index < 0) return reply_error(res, 400, "bad trial index");

          const auto order = session_trial_order(sid, total);
          const Trial &trial = test_.trials[order[index]];
          const auto stim_order =
              session_stimulus_order(sid, index, static_cast<int>(trial.stimuli.size()));
          json stimuli = json::array();
          for (int i : stim_order) stimuli.push_back(trial.stimuli[i].token);
          reply_json(res, 200, json{{"index", index},
                                    {"total", total},
                                    {"utterance", trial.utterance},
                                    {"reference_token", trial.reference.token},
                                    {"stimuli", stimuli}});
        });

  s.Post(R"(/api/session/([0-9a-f]+)/trial/(\d+)/scores)",
         [this](const httplib::Request &req, httplib::Response &res) {
           const std::string sid = req.matches[1];
           const int index = std::stoi(req.matches[2]);
           {
             std::lock_guard<std::mutex> lock(mutex_);
             if (!sessions_.count(sid)) return reply_error(res, 404, "unknown session");
           }
           const int total = static_cast<int>(test_.trials.size());
           if (index < 0 || index >= total)
             return reply_error(res, 400, "bad trial index");
           json body;
           try {
             body = json::parse(req.body);
           } catch (const std::exception &) {
             return reply_error(res, 400, "request body is not JSON");
           }
           if (!body.contains("scores") || !body["scores"].is_object())
             return reply_error(res, 400, "missing scores object");

           const auto order = session_trial_order(sid, total);
           const Trial &trial = test_.trials[order[index]];

           TrialRating rating;
           rating.session_id = sid;
           rating.trial_index = index;
           rating.utterance = trial.utterance;
           rating.timestamp_ms = now_ms();
           for (const auto &[token, score] : body["scores"].items()) {
             if (!score.is_number_integer())
               return reply_error(res, 400, "score for " + token + " must be an integer");
             const int v = score.get<int>();
             if (v < 0 || v > 100)
               return reply_error(res, 400, "score for " + token + " out of range [0,100]");
             rating.scores[token] = v;
           }
           for (const Stimulus &s2 : trial.stimuli) {
             if (!rating.scores.count(s2.token))
               return reply_error(res, 400, "missing score for stimulus " + s2.token);
           }
           for (const auto &[token, v] : rating.scores) {
             bool known = false;
             for (const Stimulus &s2 : trial.stimuli) known = known || s2.token == token;
             if (!known) return reply_error(res, 400, "unknown stimulus token " + token);
           }

           std::lock_guard<std::mutex> lock(mutex_);
           if (store_.has(sid, index))
             return reply_error(res, 409, "trial already submitted");
           store_.append(rating);
           reply_json(res, 200, json{{"accepted", true}});
         });

  s.Get(R"(/api/test/([^/]+)/aggregate)",
        [this](const httplib::Request &req, httplib::Response &res) {
          const std::string tid = req.matches[1];
          if (tid != test_.test_id) return reply_error(res, 404, "unknown test id");
          ScreeningRule rule = options_.screening;
          if (req.has_param("screening"))
            rule.enabled = req.get_param_value("screening") == "1";
          AggregateResult agg;
          {
            std::lock_guard<std::mutex> lock(mutex_);
            agg = aggregate(test_, store_.records(), rule);
          }
          res.status = 200;
          res.set_content(aggregate_to_json(agg), "application/json");
        });

  s.Get(R"(/audio/([0-9a-f]+))", [this](const httplib::Request &req, httplib::Response &res) {
    const std::string token = req.matches[1];
    const Stimulus *stim = test_.find_token(token);
    if (!stim) return reply_error(res, 404, "unknown token");
    std::ifstream f(stim->path, std::ios::binary);
    if (!f) return reply_error(res, 500, "stimulus file unreadable");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    res.status = 200;
    res.set_content(bytes, "audio/wav");
  });

  if (!options_.ui_dir.empty()) {
    if (!s.set_mount_point("/", options_.ui_dir))
      raise(ErrorCode::kInvalidArgument, "cannot mount UI dir: " + options_.ui_dir);
  }
}

void Service::serve(const std::string &host, int port) {
  if (!server_->listen(host, port))
    raise(ErrorCode::kIo, "mushra service failed to listen on " + host + ":" +
                              std::to_string(port));
}

int Service::bind_any_port(const std::string &host) {
  const int port = server_->bind_to_any_port(host);
  if (port <= 0) raise(ErrorCode::kIo, "mushra service failed to bind " + host);
  return port;
}

void Service::listen_after_bind_async() {
  listener_ = std::make_unique<std::thread>([this] { server_->listen_after_bind(); });
}

void Service::stop() {
  if (server_ && !stopped_.exchange(true)) server_->stop();
}

void Service::wait_until_ready() const {
  while (!server_->is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
}

}  // namespace bwx::mushra
