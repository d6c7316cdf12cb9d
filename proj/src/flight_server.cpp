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

#include "pvg/flight_server.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/core/detail/base64.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "pvg/geometry.hpp"

namespace pvg {
namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

std::string base64_encode(const std::vector<uint8_t>& bytes) {
  std::string out(beast::detail::base64::encoded_size(bytes.size()), '\0');
  out.resize(beast::detail::base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<uint8_t> base64_decode(const std::string& text, const char* field) {
  std::vector<uint8_t> out(beast::detail::base64::decoded_size(text.size()));
  const auto [written, read] = beast::detail::base64::decode(out.data(), text.data(), text.size());
  if (read != text.size()) {
    throw ServiceError(400, "decode_error", std::string("could not decode base64 field '") + field + "'");
  }
  out.resize(written);
  return out;
}

nlohmann::json pose_json(const CameraPose& p) {
  const Eigen::Matrix4d m = p.matrix();
  std::vector<double> flat;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
  return flat;
}

Response json_response(const Request& req, http::status status, const nlohmann::json& body) {
  Response res{status, req.version()};
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

nlohmann::json parse_json(const std::string& body) {
  if (body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, "bad_request", std::string("malformed JSON body: ") + e.what());
  }
}

std::optional<uint64_t> optional_seed(const nlohmann::json& j) {
  if (!j.contains("seed")) return std::nullopt;
  if (!j["seed"].is_number_unsigned()) throw ServiceError(400, "bad_request", "'seed' must be a non-negative integer");
  return j["seed"].get<uint64_t>();
}

// Queue feeding one WebSocket writer thread.
struct StreamQueue {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::pair<int64_t, std::vector<uint8_t>>> items;
  bool done = false;
};

}  // namespace

struct FlightServer::Impl {
  SessionManager& sessions;
  std::string address;
  asio::io_context ioc;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  std::mutex conn_mutex;
  std::condition_variable conn_cv;
  std::set<tcp::socket::native_handle_type> open_sockets;
  std::set<std::shared_ptr<StreamQueue>> streams;
  int active = 0;
  std::mutex wait_mutex;
  std::condition_variable wait_cv;

  Impl(SessionManager& s, std::string a) : sessions(s), address(std::move(a)) {}

  void accept_loop() {
    while (!stopping) {
      auto socket = std::make_unique<tcp::socket>(ioc);
      boost::system::error_code ec;
      acceptor->accept(*socket, ec);
      if (stopping) break;
      if (ec) continue;
      const auto fd = socket->native_handle();
      std::lock_guard lock(conn_mutex);
      open_sockets.insert(fd);
      ++active;
      // The socket must be gone before finished() lets stop() tear down ioc.
      std::thread([this, fd, s = std::move(socket)]() mutable {
        serve(*s);
        s.reset();
        finished(fd);
      }).detach();
    }
  }

  void finished(tcp::socket::native_handle_type fd) {
    std::lock_guard lock(conn_mutex);
    open_sockets.erase(fd);
    --active;
    conn_cv.notify_all();
  }

  void serve(tcp::socket& socket) {
    beast::flat_buffer buffer;
    boost::system::error_code ec;
    try {
      for (;;) {
        Request req;
        http::read(socket, buffer, req, ec);
        if (ec) break;
        if (websocket::is_upgrade(req)) {
          stream(std::move(socket), std::move(req));
          return;
        }
        Response res = handle(req);
        http::write(socket, res, ec);
        if (ec || !res.keep_alive()) break;
      }
    } catch (const std::exception&) {
    }
    socket.shutdown(tcp::socket::shutdown_both, ec);
  }

  void stream(tcp::socket socket, Request req) {
    static const std::regex route("^/sessions/([^/]+)/stream$");
    std::smatch m;
    const std::string target(req.target());
    websocket::stream<tcp::socket> ws(std::move(socket));
    boost::system::error_code ec;
    if (!std::regex_match(target, m, route)) {
      Response res = json_response(req, http::status::not_found,
                                   ServiceError(404, "not_found", "no stream at " + target).to_json());
      http::write(ws.next_layer(), res, ec);
      return;
    }
    const std::string id = m[1];
    auto queue = std::make_shared<StreamQueue>();
    uint64_t token = 0;
    try {
      token = sessions.subscribe(id, [queue](int64_t step, const std::vector<uint8_t>& png) {
        std::lock_guard lock(queue->mutex);
        if (step < 0) {
          queue->done = true;
        } else {
          queue->items.emplace_back(step, png);
        }
        queue->cv.notify_all();
      });
    } catch (const ServiceError& e) {
      Response res = json_response(req, static_cast<http::status>(e.status()), e.to_json());
      http::write(ws.next_layer(), res, ec);
      return;
    }
    {
      std::lock_guard lock(conn_mutex);
      streams.insert(queue);
    }
    ws.accept(req, ec);
    ws.binary(true);
    while (!ec) {
      std::unique_lock lock(queue->mutex);
      queue->cv.wait(lock, [&] { return queue->done || !queue->items.empty() || stopping; });
      if (queue->items.empty()) break;
      auto [step, png] = std::move(queue->items.front());
      queue->items.pop_front();
      lock.unlock();
      std::vector<uint8_t> message(8 + png.size());
      for (int i = 0; i < 8; ++i) message[i] = static_cast<uint8_t>(static_cast<uint64_t>(step) >> (8 * i));
      std::copy(png.begin(), png.end(), message.begin() + 8);
      ws.write(asio::buffer(message), ec);
    }
    sessions.unsubscribe(id, token);
    if (!ec) ws.close(websocket::close_code::normal, ec);
    std::lock_guard lock(conn_mutex);
    streams.erase(queue);
  }

  Response handle(const Request& req) {
    try {
      return route(req);
    } catch (const ServiceError& e) {
      return json_response(req, static_cast<http::status>(e.status()), e.to_json());
    } catch (const std::exception& e) {
      return json_response(req, http::status::internal_server_error,
                           ServiceError(500, "internal", e.what()).to_json());
    }
  }

  Response route(const Request& req) {
    static const std::regex session_route("^/sessions/([^/]+)(/step|/frame)?$");
    std::string target(req.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    const auto method = req.method();

    if (target == "/health" && method == http::verb::get) {
      return json_response(req, http::status::ok, {{"status", "ok"}});
    }
    if (target == "/config" && method == http::verb::get) {
      return json_response(req, http::status::ok,
                           {{"bounds", sessions.config().bounds.to_json()},
                            {"image_size", sessions.image_size()},
                            {"gallery_size", sessions.gallery_size()}});
    }
    if (target == "/sessions" && method == http::verb::post) return create(req);

    std::smatch m;
    if (std::regex_match(target, m, session_route)) {
      const std::string id = m[1];
      const std::string tail = m[2];
      if (tail == "/step" && method == http::verb::post) {
        const auto control = Control::FromJson(parse_json(req.body()));
        const auto r = sessions.step(id, control);
        return json_response(req, http::status::ok,
                             {{"id", id},
                              {"step", r.step_index},
                              {"relative", pose_json(r.relative)},
                              {"pose", pose_json(r.pose)},
                              {"frame", base64_encode(r.png)}});
      }
      if (tail == "/frame" && method == http::verb::get) {
        int64_t step = 0;
        const auto png = sessions.frame_png(id, &step);
        Response res{http::status::ok, req.version()};
        res.set(http::field::content_type, "image/png");
        res.set(http::field::access_control_allow_origin, "*");
        res.set("X-Step-Index", std::to_string(step));
        res.keep_alive(req.keep_alive());
        res.body().assign(png.begin(), png.end());
        res.prepare_payload();
        return res;
      }
      if (tail.empty() && method == http::verb::delete_) {
        sessions.close(id);
        return json_response(req, http::status::ok, {{"id", id}, {"closed", true}});
      }
    }
    throw ServiceError(404, "not_found", std::string(req.method_string()) + " " + target + " is not a route");
  }

  Response create(const Request& req) {
    const std::string type(req[http::field::content_type]);
    CreatedSession created;
    if (type.rfind("application/json", 0) == 0) {
      const auto body = parse_json(req.body());
      if (!body.is_object()) throw ServiceError(400, "bad_request", "body must be a JSON object");
      const auto seed = optional_seed(body);
      if (body.contains("dataset_index")) {
        if (!body["dataset_index"].is_number_integer()) {
          throw ServiceError(400, "bad_request", "'dataset_index' must be an integer");
        }
        created = sessions.create_from_gallery(body["dataset_index"].get<int64_t>(), seed);
      } else if (body.contains("image") && body["image"].is_string()) {
        const auto image = base64_decode(body["image"].get<std::string>(), "image");
        if (body.contains("disparity")) {
          if (!body["disparity"].is_string()) throw ServiceError(400, "bad_request", "'disparity' must be base64");
          const auto disp = base64_decode(body["disparity"].get<std::string>(), "disparity");
          created = sessions.create_from_image(image, &disp, seed);
        } else {
          created = sessions.create_from_image(image, nullptr, seed);
        }
      } else {
        throw ServiceError(400, "bad_request", "expected 'image' (base64) or 'dataset_index'");
      }
    } else {
      const std::vector<uint8_t> bytes(req.body().begin(), req.body().end());
      created = sessions.create_from_image(bytes);
    }
    return json_response(req, http::status::created,
                         {{"id", created.id},
                          {"step", created.step_index},
                          {"image_size", sessions.image_size()},
                          {"frame", base64_encode(created.png)}});
  }
};

FlightServer::FlightServer(SessionManager& sessions, std::string address, uint16_t port)
    : impl_(std::make_unique<Impl>(sessions, std::move(address))), port_(port) {}

FlightServer::~FlightServer() { stop(); }

void FlightServer::start() {
  const auto endpoint = tcp::endpoint(asio::ip::make_address(impl_->address), port_);
  impl_->acceptor = std::make_unique<tcp::acceptor>(impl_->ioc);
  impl_->acceptor->open(endpoint.protocol());
  impl_->acceptor->set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor->bind(endpoint);
  impl_->acceptor->listen();
  port_ = impl_->acceptor->local_endpoint().port();
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
}

void FlightServer::stop() {
  if (!impl_ || !impl_->acceptor || impl_->stopping.exchange(true)) return;
  // Wake the blocking accept with a throwaway connection.
  {
    boost::system::error_code ec;
    tcp::socket poke(impl_->ioc);
    poke.connect(tcp::endpoint(asio::ip::make_address(impl_->address == "0.0.0.0" ? "127.0.0.1" : impl_->address), port_),
                 ec);
  }
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  boost::system::error_code ec;
  impl_->acceptor->close(ec);
  std::unique_lock lock(impl_->conn_mutex);
  for (const auto fd : impl_->open_sockets) ::shutdown(fd, SHUT_RDWR);
  for (const auto& q : impl_->streams) {
    std::lock_guard ql(q->mutex);
    q->cv.notify_all();
  }
  impl_->conn_cv.wait(lock, [this] { return impl_->active == 0; });
  impl_->wait_cv.notify_all();
}

void FlightServer::wait() {
  std::unique_lock lock(impl_->wait_mutex);
  impl_->wait_cv.wait(lock, [this] { return impl_->stopping.load(); });
}

}  // namespace pvg
