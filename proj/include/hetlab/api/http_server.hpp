#pragma once

#include "hetlab/api/service.hpp"

#include <memory>
#include <string>

namespace hetlab::api {

// httplib binding of ApiService under /v1, with permissive CORS headers.
class HttpServer {
public:
    explicit HttpServer(ApiService& service);
    ~HttpServer();

    // Port 0 picks a free port. Returns the bound port, or -1.
    int bind(const std::string& host, int port);
    void listen();  // blocks until stop()
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace hetlab::api
