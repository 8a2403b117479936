#pragma once

#include <functional>
#include <memory>
#include <string>

#include "wukong/wukong.h"

namespace httplib {
class Server;
}

namespace wukong::service {

/// HTTP front end over an open engine. Every route calls exactly one C API
/// function and relays its JSON and status.
class HttpService {
 public:
  explicit HttpService(wk_engine* engine);
  ~HttpService();

  /// Binds and serves until stop(). Port 0 picks a free port.
  bool listen(const std::string& host, int port);
  /// Binds without serving; returns the port or -1.
  int bind(const std::string& host, int port);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  wk_engine* engine_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace wukong::service
