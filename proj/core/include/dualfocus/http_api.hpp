#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "dualfocus/service.hpp"

namespace httplib {
class Server;
}

namespace dualfocus::http_api {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path store = "sessions";
  /// Empty means no model; render requests answer 503.
  std::filesystem::path checkpoint;
  inference::TileConfig tiles;

  /// Overrides fields from DC2_CKPT, DC2_STORE and DC2_PORT when set.
  void apply_env();
};

/// Registers every route on `server`:
///   GET    /healthz
///   POST   /sessions                      create (JSON, base64 PNG planes)
///   GET    /sessions                      list
///   GET    /sessions/{id}                 summary
///   DELETE /sessions/{id}
///   POST   /sessions/{id}/defocus-map     spec -> map preview
///   POST   /sessions/{id}/render          spec -> image + provenance
/// Errors are JSON {"error": message} with 400, 404 or 503.
void register_routes(httplib::Server& server, std::shared_ptr<service::SessionStore> store,
                     std::shared_ptr<service::Renderer> renderer);

/// Blocking server loop. Returns non-zero if the socket could not be bound.
int serve(const ServerConfig& config);

}  // namespace dualfocus::http_api
