#pragma once

// WebSocket endpoint for the performer UI. Streams frame/overlay messages
// (lossy under backpressure) and status snapshots (lossless); accepts control
// messages and answers each with an ack or error reply.

#include <deque>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "sofa/error.hpp"
#include "sofa/session.hpp"

namespace sofa {

class UiServer final : public UiEndpoint {
public:
  using ControlHandler = std::function<std::string(const std::string& text)>;
  using StatusProvider = std::function<std::string()>;

  /// Frames queued per client beyond which new frames are dropped.
  static constexpr std::size_t kMaxPendingFrames = 2;

  /// Binds to 127.0.0.1:port (0 picks a free port) and starts serving.
  UiServer(unsigned short port, ControlHandler on_control, StatusProvider status,
           const std::string& address = "127.0.0.1")
      : on_control_(std::move(on_control)), status_(std::move(status)), acceptor_(ioc_) {
    namespace net = boost::asio;
    boost::system::error_code ec;
    const net::ip::tcp::endpoint ep(net::ip::make_address(address, ec), port);
    if (ec) throw BindError("session", "bad bind address " + address);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw BindError("session", "cannot listen on port " + std::to_string(port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  ~UiServer() override { stop(); }

  UiServer(const UiServer&) = delete;
  UiServer& operator=(const UiServer&) = delete;

  unsigned short port() const { return port_; }

  void broadcast_frame(std::string text) override { post_broadcast(std::move(text), true); }
  void broadcast_status(std::string text) override { post_broadcast(std::move(text), false); }

  void stop() {
    if (stopped_.exchange(true)) return;
    boost::asio::post(ioc_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      for (const auto& c : clients_) c->close();
      clients_.clear();
    });
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
  }

private:
  using tcp = boost::asio::ip::tcp;

  class Client : public std::enable_shared_from_this<Client> {
  public:
    Client(tcp::socket socket, UiServer& server) : ws_(std::move(socket)), server_(server) {}

    void start() {
      ws_.text(true);
      ws_.async_accept([self = shared_from_this()](boost::beast::error_code ec) {
        if (ec) return;
        self->server_.clients_.insert(self);
        self->send(self->server_.status_(), false);
        self->do_read();
      });
    }

    void send(std::string text, bool lossy) {
      if (lossy) {
        std::size_t pending = 0;
        for (const auto& m : queue_) pending += m.lossy;
        if (pending >= kMaxPendingFrames) return;
      }
      queue_.push_back({std::move(text), lossy});
      if (!writing_) do_write();
    }

    void close() {
      boost::beast::error_code ec;
      boost::beast::get_lowest_layer(ws_).close(ec);
    }

  private:
    struct Outgoing {
      std::string text;
      bool lossy;
    };

    void do_read() {
      ws_.async_read(buffer_, [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
        if (ec) {
          self->server_.clients_.erase(self);
          return;
        }
        const std::string text = boost::beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        self->send(self->server_.on_control_(text), false);
        self->do_read();
      });
    }

    void do_write() {
      writing_ = true;
      ws_.async_write(boost::asio::buffer(queue_.front().text),
                      [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
                        self->queue_.pop_front();
                        if (ec) {
                          self->writing_ = false;
                          self->server_.clients_.erase(self);
                          return;
                        }
                        if (self->queue_.empty()) self->writing_ = false;
                        else self->do_write();
                      });
    }

    boost::beast::websocket::stream<tcp::socket> ws_;
    UiServer& server_;
    boost::beast::flat_buffer buffer_;
    std::deque<Outgoing> queue_;
    bool writing_ = false;
  };

  void do_accept() {
    acceptor_.async_accept([this](boost::beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Client>(std::move(socket), *this)->start();
      do_accept();
    });
  }

  void post_broadcast(std::string text, bool lossy) {
    boost::asio::post(ioc_, [this, text = std::move(text), lossy] {
      for (const auto& c : clients_) c->send(text, lossy);
    });
  }

  ControlHandler on_control_;
  StatusProvider status_;
  boost::asio::io_context ioc_;
  tcp::acceptor acceptor_;
  std::thread thread_;
  unsigned short port_ = 0;
  std::atomic<bool> stopped_{false};
  std::set<std::shared_ptr<Client>> clients_;  // io thread only
};

}  // namespace sofa
