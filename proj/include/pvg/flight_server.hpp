// Copyright (c) 2026 The pvgen Authors. All Rights Reserved.
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

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

#include "pvg/service.hpp"

namespace pvg {

// HTTP/JSON front end for a SessionManager:
//   GET    /health
//   GET    /config                  control bounds, image size, gallery size
//   POST   /sessions                create (raw image body or JSON)
//   POST   /sessions/{id}/step      one step (deltas or {"autopilot": true})
//   GET    /sessions/{id}/frame     current frame as PNG
//   DELETE /sessions/{id}           close
//   GET    /sessions/{id}/stream    WebSocket; binary messages are an 8-byte
//                                   little-endian step index followed by PNG
// Every error body is {"code": ..., "message": ...}.
class FlightServer {
 public:
  FlightServer(SessionManager& sessions, std::string address, uint16_t port);
  ~FlightServer();

  // Binds and starts accepting on a background thread; port 0 picks a free port.
  void start();
  void stop();
  uint16_t port() const { return port_; }

  // Blocks until stop() is called from another thread or a signal handler.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  uint16_t port_ = 0;
};

}  // namespace pvg
