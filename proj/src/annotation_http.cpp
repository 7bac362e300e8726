#include "mcrc/annotation.hpp"

#include "mcrc/error.hpp"
#include "mcrc/report.hpp"

#include <httplib.h>

namespace mcrc {

using nlohmann::json;

struct AnnotationServer::Impl {
    AnnotationService& service;
    httplib::Server server;
    int port = -1;

    explicit Impl(AnnotationService& s) : service(s) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    json details = json::array();
    if (const auto* v = dynamic_cast<const ValidationError*>(&e))
        for (const auto& d : v->details()) details.push_back(d);
    send_json(res, http_status(e.code()),
              {{"error", {{"code", to_string(e.code())}, {"message", e.what()}, {"details", details}}}});
}

std::string token_of(const httplib::Request& req) { return req.get_header_value("X-Session-Token"); }

}  // namespace

AnnotationServer::AnnotationServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& srv = impl_->server;
    auto& svc = impl_->service;
    const auto origin = svc.config().cors_origin;

    srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                             {"Access-Control-Allow-Headers", "Content-Type, X-Session-Token, X-Admin-Token"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Vary", "Origin"}});

    // Routes run inside this wrapper so every failure becomes a JSON error body.
    auto guarded = [](auto fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const Error& e) {
                send_error(res, e);
            } catch (const json::exception& e) {
                send_error(res, Error(ErrorCode::parse, std::string("malformed JSON: ") + e.what()));
            } catch (const std::exception& e) {
                send_json(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}, {"details", json::array()}}}});
            }
        };
    };

    srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Post("/api/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto body = json::parse(req.body);
                 if (!body.is_object() || !body.contains("annotator_id") || !body["annotator_id"].is_string())
                     throw ValidationError("annotator_id is required", {"annotator_id: missing"});
                 auto created = svc.create_session(body["annotator_id"].get<std::string>());
                 send_json(res, 201, created.info);
             }));

    srv.Get(R"(/api/sessions/([^/]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const auto id = req.matches[1].str();
                svc.authorize(id, token_of(req));
                send_json(res, 200, svc.status(id));
            }));

    srv.Get(R"(/api/sessions/([^/]+)/texts/([^/]+)/payload)",
            guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const auto id = req.matches[1].str();
                svc.authorize(id, token_of(req));
                std::optional<Stage> stage;
                if (req.has_param("stage")) stage = parse_stage(req.get_param_value("stage"));
                send_json(res, 200, svc.payload(id, req.matches[2].str(), stage));
            }));

    srv.Post(R"(/api/sessions/([^/]+)/texts/([^/]+)/submit)",
             guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                 const auto id = req.matches[1].str();
                 svc.authorize(id, token_of(req));
                 send_json(res, 200, svc.submit(id, req.matches[2].str(), json::parse(req.body)));
             }));

    srv.Get("/api/export", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                const auto& admin = svc.config().admin_token;
                if (admin && req.get_header_value("X-Admin-Token") != *admin)
                    throw Error(ErrorCode::unauthorized, "export needs the admin token");
                const auto exported = svc.export_records();
                json records = json::array();
                for (const auto& r : exported.records) records.push_back(to_json(r));
                send_json(res, 200, {{"records", records}, {"ratings", to_json(exported.ratings)}});
            }));
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) impl_->port = impl_->server.bind_to_any_port(host);
    else impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
    if (impl_->port < 0) throw Error(ErrorCode::config, "cannot bind " + host + ":" + std::to_string(port));
    return impl_->port;
}

void AnnotationServer::listen() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace mcrc
