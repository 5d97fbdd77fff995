// Copyright 2026 The Flexible Handover Authors
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

#include "handover/bridge_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <map>
#include <memory>

namespace handover {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Server;

class Client : public std::enable_shared_from_this<Client> {
 public:
  Client(tcp::socket socket, Server& server, int id)
      : ws_(std::move(socket)), server_(server), id_(id) {}

  void start(std::string hello);
  void send(std::string frame);
  void close();
  int id() const { return id_; }

 private:
  void read();
  void write();

  websocket::stream<tcp::socket> ws_;
  Server& server_;
  int id_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  bool open_ = false;
  bool closing_ = false;
};

class Server {
 public:
  Server(asio::io_context& io, BridgeSession& session, const ServeOptions& options)
      : session_(session),
        options_(options),
        acceptor_(io, tcp::endpoint(asio::ip::address_v4::loopback(), options.port)),
        timer_(io) {}

  void start() {
    if (options_.on_listening) options_.on_listening(acceptor_.local_endpoint().port());
    accept();
    const Json hello = Json::parse(session_.hello());
    period_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / hello["control_rate"].get<double>()));
    next_ = std::chrono::steady_clock::now() + period_;
    schedule();
  }

  void inbound(int client, std::string frame) { session_.enqueue(client, std::move(frame)); }
  void drop(int client) { clients_.erase(client); }

 private:
  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto client = std::make_shared<Client>(std::move(socket), *this, next_id_++);
      clients_[client->id()] = client;
      client->start(session_.hello());
      accept();
    });
  }

  void schedule() {
    timer_.expires_at(next_);
    timer_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      next_ += period_;
      for (const Outbound& o : session_.tick()) {
        if (o.client < 0) {
          for (auto& [id, c] : clients_) c->send(o.frame);
        } else if (auto it = clients_.find(o.client); it != clients_.end()) {
          it->second->send(o.frame);
        }
      }
      const bool done = (options_.max_ticks >= 0 && session_.ticks() >= options_.max_ticks) ||
                        (options_.stop != nullptr && options_.stop->load());
      if (done) {
        shutdown();
        return;
      }
      schedule();
    });
  }

  void shutdown() {
    beast::error_code ignored;
    acceptor_.close(ignored);
    for (auto& [id, c] : clients_) c->close();
    clients_.clear();
  }

  BridgeSession& session_;
  const ServeOptions& options_;
  tcp::acceptor acceptor_;
  asio::steady_timer timer_;
  std::chrono::steady_clock::duration period_{};
  std::chrono::steady_clock::time_point next_;
  std::map<int, std::shared_ptr<Client>> clients_;
  int next_id_ = 0;
};

void Client::start(std::string hello) {
  auto self = shared_from_this();
  ws_.async_accept([self, hello = std::move(hello)](beast::error_code ec) {
    if (ec) {
      self->server_.drop(self->id_);
      return;
    }
    self->open_ = true;
    self->ws_.text(true);
    self->send(hello);
    self->read();
  });
}

void Client::read() {
  auto self = shared_from_this();
  ws_.async_read(buffer_, [self](beast::error_code ec, std::size_t) {
    if (ec) {
      self->open_ = false;
      self->server_.drop(self->id_);
      return;
    }
    self->server_.inbound(self->id_, beast::buffers_to_string(self->buffer_.data()));
    self->buffer_.consume(self->buffer_.size());
    self->read();
  });
}

void Client::send(std::string frame) {
  if (!open_ || closing_) return;
  outbox_.push_back(std::move(frame));
  if (outbox_.size() == 1) write();
}

void Client::write() {
  auto self = shared_from_this();
  ws_.async_write(asio::buffer(outbox_.front()), [self](beast::error_code ec, std::size_t) {
    if (ec) {
      self->open_ = false;
      return;
    }
    self->outbox_.pop_front();
    if (!self->outbox_.empty()) {
      self->write();
    } else if (self->closing_) {
      self->closing_ = false;
      self->close();
    }
  });
}

// A close frame is itself a write, so it waits for the outbox to drain.
void Client::close() {
  if (!open_) return;
  if (!outbox_.empty()) {
    closing_ = true;
    return;
  }
  open_ = false;
  auto self = shared_from_this();
  ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
}

}  // namespace

void serve_session(BridgeSession& session, const ServeOptions& options) {
  asio::io_context io(1);
  Server server(io, session, options);
  server.start();
  io.run();
}

}  // namespace handover
