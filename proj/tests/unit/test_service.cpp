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

#include "pvg_doctest.hpp"

#include <chrono>
#include <set>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "pvg/flight_server.hpp"
#include "pvg/image_io.hpp"
#include "pvg/service.hpp"
#include "test_util.hpp"

using namespace pvg;

namespace {

constexpr int kSize = 32;

std::shared_ptr<const RefinerState> small_model() {
  static const auto model = std::make_shared<const RefinerState>(
      RefinerState::Create(RefinerConfig::ForImageSize(kSize, 8, 16), 3));
  return model;
}

std::vector<RGBDImage> gallery(int size = kSize) {
  std::vector<RGBDImage> out;
  for (auto& it : synthetic_collection(3, size, 8)) out.push_back(it.image);
  return out;
}

template <typename F>
ServiceError capture(F&& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e;
  }
  FAIL("expected a ServiceError");
  return ServiceError(0, "", "");
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("controls parse and enforce bounds") {
  const auto c = Control::FromJson({{"forward", 0.1}, {"yaw", -4.0}});
  CHECK(c.forward == doctest::Approx(0.1));
  CHECK(c.yaw_deg == doctest::Approx(-4.0));
  CHECK_FALSE(c.autopilot);
  ControlBounds b;
  CHECK_NOTHROW(c.check(b));

  const auto yaw = capture([&] { Control::FromJson({{"yaw", 15.0}}).check(b); });
  CHECK(yaw.status() == 422);
  CHECK(contains(yaw.what(), "yaw"));
  CHECK(contains(yaw.what(), "10"));
  const auto fwd = capture([&] { Control::FromJson({{"forward", -0.5}}).check(b); });
  CHECK(contains(fwd.what(), "forward"));
  CHECK(contains(fwd.what(), "0.2"));

  const auto unknown = capture([] { Control::FromJson({{"roll", 1.0}}); });
  CHECK(unknown.status() == 400);
  CHECK(contains(unknown.what(), "roll"));
  CHECK(capture([] { Control::FromJson({{"yaw", "left"}}); }).status() == 400);
  CHECK(capture([] { Control::FromJson(nlohmann::json::array()); }).status() == 400);
}

TEST_CASE("session lifecycle") {
  SessionManager sm(small_model(), ServiceConfig{}, gallery());
  const auto created = sm.create_from_gallery(0, 1);
  CHECK(created.step_index == 0);
  CHECK(decode_image(created.png).size(1) == kSize);
  CHECK(sm.session_count() == 1);

  Control ap;
  ap.autopilot = true;
  StepResult last;
  for (int i = 0; i < 50; ++i) last = sm.step(created.id, ap);
  CHECK(last.step_index == 50);
  int64_t step = -1;
  const auto png = sm.frame_png(created.id, &step);
  CHECK(step == 50);
  CHECK(png == last.png);

  sm.close(created.id);
  CHECK(sm.session_count() == 0);
  CHECK(capture([&] { sm.close(created.id); }).status() == 404);
  CHECK(capture([&] { sm.step(created.id, ap); }).status() == 404);
  CHECK(capture([&] { sm.frame_png("nope"); }).status() == 404);
  CHECK(capture([&] { sm.create_from_gallery(7); }).status() == 404);
}

TEST_CASE("auto-pilot pose matches the auto-pilot law") {
  ServiceConfig cfg;
  SessionManager sm(small_model(), cfg, gallery());
  const auto start = gallery()[1];
  const auto id = sm.create(start, 5).id;
  ViewGenerator reference(small_model(), start, cfg.generation, 5);
  Control ap;
  ap.autopilot = true;
  for (int i = 0; i < 3; ++i) {
    const auto expected =
        autopilot_step(reference.current(), sky_mask(reference.current(), cfg.generation.sky), cfg.generation.autopilot)
            .front();
    CHECK(test::pose_gap(sm.autopilot_pose(id), expected) < 1e-12);
    const auto r = sm.step(id, ap);
    CHECK(test::pose_gap(r.relative, expected) < 1e-12);
    reference.step(expected, Provenance::kAutopilot);
    CHECK(test::pose_gap(r.pose, reference.cumulative_pose()) < 1e-12);
  }
}

TEST_CASE("uploads") {
  SessionManager sm(small_model(), ServiceConfig{}, {});
  const std::vector<uint8_t> junk = {0x89, 'P', 'N', 'G', 1, 2, 3, 4, 5};
  const auto e = capture([&] { sm.create_from_image(junk); });
  CHECK(e.status() == 400);
  CHECK(contains(e.what(), "decode"));
  CHECK(capture([&] { sm.create_from_image({}); }).status() == 400);

  // Any size is centre-cropped and resized to the model resolution.
  const auto big = gallery(48).front();
  const auto created = sm.create_from_image(encode_png(big.rgb));
  CHECK(decode_image(created.png).size(2) == kSize);

  std::set<std::string> ids;
  for (int i = 0; i < 20; ++i) ids.insert(sm.create_from_image(encode_png(big.rgb)).id);
  CHECK(ids.size() == 20);
  CHECK_FALSE(ids.count(created.id));
}

TEST_CASE("session limit") {
  ServiceConfig cfg;
  cfg.max_sessions = 2;
  SessionManager sm(small_model(), cfg, gallery());
  sm.create_from_gallery(0);
  const auto b = sm.create_from_gallery(1);
  CHECK(capture([&] { sm.create_from_gallery(2); }).status() == 429);
  sm.close(b.id);
  CHECK_NOTHROW(sm.create_from_gallery(2));
}

TEST_CASE("sessions are isolated") {
  const auto start = gallery()[2];
  Control a;
  a.forward = 0.1;
  a.yaw_deg = 4;
  Control ap;
  ap.autopilot = true;

  SessionManager alone(small_model(), ServiceConfig{}, {});
  const auto ref = alone.create(start, 42).id;
  std::vector<std::vector<uint8_t>> reference;
  for (int i = 0; i < 6; ++i) reference.push_back(alone.step(ref, a).png);

  SessionManager shared(small_model(), ServiceConfig{}, {});
  const auto x = shared.create(start, 42).id;
  const auto y = shared.create(gallery()[0], 7).id;
  std::vector<std::vector<uint8_t>> interleaved;
  std::thread other([&] {
    for (int i = 0; i < 6; ++i) shared.step(y, ap);
  });
  for (int i = 0; i < 6; ++i) {
    interleaved.push_back(shared.step(x, a).png);
    shared.step(y, ap);
  }
  other.join();
  CHECK(interleaved == reference);
}

TEST_CASE("step latency at 64x64") {
  auto model = std::make_shared<const RefinerState>(RefinerState::Create(RefinerConfig::ForImageSize(64), 1));
  SessionManager sm(model, ServiceConfig{}, gallery(64));
  const auto id = sm.create_from_gallery(0).id;
  Control ap;
  ap.autopilot = true;
  sm.step(id, ap);
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kSteps = 10;
  for (int i = 0; i < kSteps; ++i) sm.step(id, ap);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / kSteps;
  MESSAGE("mean step latency " << ms << " ms");
  CHECK(ms <= 500.0);
}

TEST_CASE("subscribers see every step and the close") {
  SessionManager sm(small_model(), ServiceConfig{}, gallery());
  const auto id = sm.create_from_gallery(0).id;
  std::vector<int64_t> seen;
  sm.subscribe(id, [&](int64_t step, const std::vector<uint8_t>&) { seen.push_back(step); });
  Control c;
  c.forward = 0.05;
  sm.step(id, c);
  sm.step(id, c);
  sm.close(id);
  CHECK(seen == std::vector<int64_t>{0, 1, 2, -1});
}

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

struct Reply {
  unsigned status;
  std::string body;
  std::string step_header;
};

Reply request(uint16_t port, http::verb verb, const std::string& target, const std::string& body = "",
              const std::string& type = "application/json") {
  boost::asio::io_context ioc;
  tcp::socket socket(ioc);
  socket.connect(tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "localhost");
  if (!body.empty()) req.set(http::field::content_type, type);
  req.body() = body;
  req.prepare_payload();
  http::write(socket, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(socket, buffer, res);
  boost::system::error_code ec;
  socket.shutdown(tcp::socket::shutdown_both, ec);
  return {res.result_int(), res.body(), std::string(res["X-Step-Index"])};
}

uint64_t step_tag(const std::string& msg) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(msg[i]);
  return v;
}

}  // namespace

TEST_CASE("http and websocket front end") {
  SessionManager sm(small_model(), ServiceConfig{}, gallery());
  FlightServer server(sm, "127.0.0.1", 0);
  server.start();
  const auto port = server.port();
  REQUIRE(port != 0);

  CHECK(request(port, http::verb::get, "/health").status == 200);
  const auto config = nlohmann::json::parse(request(port, http::verb::get, "/config").body);
  CHECK(config["image_size"] == kSize);
  CHECK(config["bounds"]["yaw"] == 10.0);

  const auto png = encode_png(gallery()[0].rgb);
  const auto created = request(port, http::verb::post, "/sessions", std::string(png.begin(), png.end()), "image/png");
  REQUIRE(created.status == 201);
  const std::string id = nlohmann::json::parse(created.body)["id"];

  const auto bad = request(port, http::verb::post, "/sessions", "not an image", "image/png");
  CHECK(bad.status == 400);
  const auto err = nlohmann::json::parse(bad.body);
  CHECK(err.contains("code"));
  CHECK(contains(err["message"], "decode"));

  const auto by_index = request(port, http::verb::post, "/sessions", R"({"dataset_index": 1, "seed": 3})");
  CHECK(by_index.status == 201);

  // Stream: first message is the current frame, then one per step.
  boost::asio::io_context ioc;
  websocket::stream<tcp::socket> ws(ioc);
  ws.next_layer().connect(tcp::endpoint(boost::asio::ip::make_address("127.0.0.1"), port));
  ws.handshake("localhost", "/sessions/" + id + "/stream");
  beast::flat_buffer buffer;
  ws.read(buffer);
  CHECK(ws.got_binary());
  std::string msg = beast::buffers_to_string(buffer.data());
  CHECK(step_tag(msg) == 0);
  CHECK(msg.substr(9, 3) == "PNG");

  const auto stepped = request(port, http::verb::post, "/sessions/" + id + "/step", R"({"forward": 0.1, "yaw": 3})");
  REQUIRE(stepped.status == 200);
  CHECK(nlohmann::json::parse(stepped.body)["step"] == 1);
  buffer.clear();
  ws.read(buffer);
  msg = beast::buffers_to_string(buffer.data());
  CHECK(step_tag(msg) == 1);

  const auto frame = request(port, http::verb::get, "/sessions/" + id + "/frame");
  CHECK(frame.status == 200);
  CHECK(frame.step_header == "1");
  CHECK(decode_image(std::vector<uint8_t>(frame.body.begin(), frame.body.end())).size(1) == kSize);

  const auto oob = request(port, http::verb::post, "/sessions/" + id + "/step", R"({"pitch": 30})");
  CHECK(oob.status == 422);
  CHECK(contains(nlohmann::json::parse(oob.body)["message"], "pitch"));

  CHECK(request(port, http::verb::delete_, "/sessions/" + id).status == 200);
  CHECK(request(port, http::verb::delete_, "/sessions/" + id).status == 404);
  CHECK(request(port, http::verb::post, "/sessions/" + id + "/step", "{}").status == 404);
  CHECK(request(port, http::verb::get, "/nowhere").status == 404);

  // Closing the session ends the stream.
  buffer.clear();
  boost::system::error_code ec;
  ws.read(buffer, ec);
  CHECK(ec == websocket::error::closed);

  server.stop();
}
