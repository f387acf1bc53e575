#include "hetlab/api/http_server.hpp"

#include "httplib.h"

namespace hetlab::api {

struct HttpServer::Impl {
    ApiService& service;
    httplib::Server server;

    explicit Impl(ApiService& s) : service(s) {}
};

namespace {

void forward(ApiService& service, const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    r.body = req.body;
    for (const auto& [name, file] : req.files) r.files.emplace(name, file.content);
    if (!req.files.empty()) r.body.clear();
    auto out = service.handle(r);
    res.status = out.status;
    res.set_content(out.body, "application/json");
}

}  // namespace

HttpServer::HttpServer(ApiService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& s = impl_->server;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
    auto handler = [this](const httplib::Request& req, httplib::Response& res) { forward(impl_->service, req, res); };
    const char* pattern = R"(/.*)";
    s.Get(pattern, handler);
    s.Post(pattern, handler);
    s.Delete(pattern, handler);
    s.Options(pattern, [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace hetlab::api
