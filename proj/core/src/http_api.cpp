#include "dualfocus/http_api.hpp"

#include <httplib.h>

#include <cstdlib>
#include <iostream>

#include <fmt/format.h>

#include "dualfocus/io.hpp"

namespace dualfocus::http_api {
namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw service::BadRequest(std::string("invalid JSON: ") + e.what());
  }
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const service::BadRequest& e) {
      send_error(res, 400, e.what());
    } catch (const service::NotFound& e) {
      send_error(res, 404, e.what());
    } catch (const service::Unavailable& e) {
      send_error(res, 503, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

void ServerConfig::apply_env() {
  if (const char* v = std::getenv("DC2_CKPT"); v != nullptr && *v != '\0') checkpoint = v;
  if (const char* v = std::getenv("DC2_STORE"); v != nullptr && *v != '\0') store = v;
  if (const char* v = std::getenv("DC2_PORT"); v != nullptr && *v != '\0') port = std::stoi(v);
}

void register_routes(httplib::Server& server, std::shared_ptr<service::SessionStore> store,
                     std::shared_ptr<service::Renderer> renderer) {
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/healthz", guarded([renderer](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200,
              {{"status", "ok"},
               {"model_loaded", renderer != nullptr},
               {"checkpoint_id", renderer ? renderer->checkpoint_id() : ""}});
  }));

  server.Post("/sessions", guarded([store](const httplib::Request& req, httplib::Response& res) {
    const auto request = service::CreateRequest::from_json(parse_body(req));
    const auto id = store->create(request);
    send_json(res, 201, {{"id", id}});
  }));

  server.Get("/sessions", guarded([store](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"sessions", store->list()}});
  }));

  server.Get(R"(/sessions/([0-9A-Za-z]+))", guarded([store](const httplib::Request& req, httplib::Response& res) {
    const auto session = store->get(req.matches[1]);
    auto body = session.summary();
    body["thumbnail_png"] = io::base64_encode(io::encode_png(session.w));
    send_json(res, 200, body);
  }));

  server.Delete(R"(/sessions/([0-9A-Za-z]+))", guarded([store](const httplib::Request& req, httplib::Response& res) {
    if (!store->remove(req.matches[1])) throw service::NotFound("unknown session " + std::string(req.matches[1]));
    res.status = 204;
  }));

  server.Post(R"(/sessions/([0-9A-Za-z]+)/defocus-map)",
              guarded([store, renderer](const httplib::Request& req, httplib::Response& res) {
                const auto session = store->get(req.matches[1]);
                const auto spec = service::spec_from_json(parse_body(req));
                const service::MapLimits limits = renderer ? renderer->limits() : service::MapLimits{};
                const auto map = service::build_defocus_map(spec, session, limits);
                float peak = 0.0f;
                for (float v : map.radius_px.data()) peak = std::max(peak, v);
                Image preview = map.radius_px;
                for (float& v : preview.data()) v = static_cast<float>(v / limits.max_radius_px);
                send_json(res, 200,
                          {{"map_png", io::base64_encode(io::encode_png(preview))},
                           {"map_raw", io::base64_encode(io::encode_raw(map.radius_px))},
                           {"max_radius_px", limits.max_radius_px},
                           {"peak_radius_px", peak},
                           {"spec", service::spec_echo(spec)}});
              }));

  server.Post(R"(/sessions/([0-9A-Za-z]+)/render)",
              guarded([store, renderer](const httplib::Request& req, httplib::Response& res) {
                const auto session = store->get(req.matches[1]);
                const auto spec = service::spec_from_json(parse_body(req));
                if (!renderer) throw service::Unavailable("no model loaded");
                const auto result = renderer->render(session, spec);
                send_json(res, 200,
                          {{"image_png", io::base64_encode(io::encode_png(result.image))},
                           {"provenance", result.provenance}});
              }));
}

int serve(const ServerConfig& config) {
  auto store = std::make_shared<service::SessionStore>(config.store);
  std::shared_ptr<service::Renderer> renderer;
  if (!config.checkpoint.empty()) renderer = service::Renderer::from_checkpoint(config.checkpoint, config.tiles);
  httplib::Server server;
  register_routes(server, store, renderer);
  std::cerr << fmt::format("serving on http://{}:{} (store {}, checkpoint {})\n", config.host, config.port,
                           config.store.string(), renderer ? renderer->checkpoint_id() : "none");
  return server.listen(config.host, config.port) ? 0 : 1;
}

}  // namespace dualfocus::http_api
