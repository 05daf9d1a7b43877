#pragma once

#include "labelkit/service.hpp"

#include <memory>
#include <string>

namespace labelkit::service {

/// JSON-over-HTTP facade for an Application, plus a server-sent event stream.
class HttpServer {
public:
    explicit HttpServer(std::shared_ptr<Application> app);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Bind the listening socket; port 0 picks a free port. Returns the port.
    int bind(const std::string& host, int port);
    /// Serve until stop(). Requires bind().
    void run();
    /// run() on a background thread.
    void start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace labelkit::service
