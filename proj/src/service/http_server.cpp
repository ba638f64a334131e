/**
 * @file http_server.cpp
 * @brief cpp-httplib routes for session_service
 */

#include "mica/service.hpp"

#include <httplib.h>

namespace mica::service {

namespace {

void reply(httplib::Response& res, const api_response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
}

/// Parses the request body; an empty body counts as `{}`.
bool parse_body(const httplib::Request& req, httplib::Response& res, json& out) {
    if (req.body.empty()) {
        out = json::object();
        return true;
    }
    try {
        out = json::parse(req.body);
        return true;
    } catch (const json::parse_error& e) {
        reply(res, {400, json{{"error", "bad_request"}, {"message", e.what()}}});
        return false;
    }
}

} // namespace

http_server::http_server(session_service& service) : server_(std::make_unique<httplib::Server>()) {
    auto& srv = *server_;

    srv.Post("/v1/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
        json body;
        if (parse_body(req, res, body)) reply(res, service.create_session(body));
    });
    srv.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/answer)",
             [&service](const httplib::Request& req, httplib::Response& res) {
                 json body;
                 if (parse_body(req, res, body)) reply(res, service.post_answer(req.matches[1].str(), body));
             });
    srv.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/help)",
             [&service](const httplib::Request& req, httplib::Response& res) {
                 reply(res, service.post_help(req.matches[1].str()));
             });
    srv.Get(R"(/v1/sessions/([A-Za-z0-9_-]+)/summary)",
            [&service](const httplib::Request& req, httplib::Response& res) {
                reply(res, service.get_summary(req.matches[1].str(), req.get_param_value("role")));
            });
    srv.Post("/v1/surveys", [&service](const httplib::Request& req, httplib::Response& res) {
        json body;
        if (parse_body(req, res, body)) reply(res, service.submit_survey(body));
    });
    srv.Get("/v1/metrics", [&service](const httplib::Request&, httplib::Response& res) {
        reply(res, service.metrics());
    });

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "unknown error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            message = e.what();
        } catch (...) {
        }
        reply(res, {500, json{{"error", "internal"}, {"message", message}}});
    });
}

http_server::~http_server() = default;

bool http_server::listen(const std::string& host, int port) {
    return server_->listen(host, port);
}

int http_server::bind_any_port(const std::string& host) {
    return server_->bind_to_any_port(host);
}

bool http_server::listen_after_bind() {
    return server_->listen_after_bind();
}

void http_server::stop() {
    server_->stop();
}

void http_server::wait_until_ready() const {
    server_->wait_until_ready();
}

} // namespace mica::service
