#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dualfocus/dfnet.hpp"
#include "dualfocus/inference.hpp"
#include "dualfocus/optics.hpp"
#include "dualfocus/synthcam.hpp"

namespace dualfocus::service {

/// Malformed request content (maps to HTTP 400).
class BadRequest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown session (maps to HTTP 404).
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No model loaded (maps to HTTP 503).
class Unavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Session {
  std::string id;
  Image w;
  Image uw_warped;
  Image occlusion;
  std::optional<optics::DepthMap> depth;
  synthcam::CameraRig rig;
  optics::LensState ref_lens;
  Image ref_defocus;
  std::int64_t created_unix = 0;

  int width() const { return w.width(); }
  int height() const { return w.height(); }
  inference::Planes planes(const Image& tgt_defocus) const;
  nlohmann::json summary() const;
};

struct CreateRequest {
  Image w;
  Image uw;
  /// When false the UW frame is aligned on the server (block matching,
  /// forward-backward occlusion).
  bool uw_prewarped = false;
  std::optional<Image> occlusion;
  std::optional<optics::DepthMap> depth;
  std::optional<synthcam::CameraRig> rig;
  std::optional<optics::LensState> ref_lens;
  /// Overrides the reference map that would otherwise come from depth + ref_lens.
  std::optional<Image> ref_defocus;

  static CreateRequest from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Validates the request and derives every session plane. Image planes are
/// quantized to 8 bits so that a stored session reloads bit-identically.
Session build_session(const CreateRequest& request);

/// Directory-per-session store; each directory holds PNG/raw planes and session.json.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  std::string create(const CreateRequest& request);
  std::string insert(Session session);
  /// Throws NotFound.
  Session get(const std::string& id) const;
  std::vector<nlohmann::json> list() const;
  bool remove(const std::string& id);
  const std::filesystem::path& root() const { return root_; }

 private:
  std::shared_ptr<std::mutex> lock_for(const std::string& id) const;
  std::filesystem::path dir_for(const std::string& id) const;
  std::string new_id();

  std::filesystem::path root_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::shared_ptr<std::mutex>> locks_;
  std::uint64_t counter_ = 0;
};

struct PhysicalSpec {
  double aperture_mm = 0.0;
  double focus_distance_mm = 1000.0;
};
struct ZerosSpec {};
struct TiltShiftSpec {
  /// Focus line through (point_x, point_y) px at `angle_rad` from the x axis;
  /// a missing point means the image center.
  std::optional<double> point_x;
  std::optional<double> point_y;
  double angle_rad = 0.0;
  double slope_px_per_px = 0.05;
  double max_radius_px = 8.0;
};
struct MaskedSpec {
  Image mask;  // 1 channel, > 0.5 = foreground
  double fg_radius_px = 0.0;
  double bg_radius_px = 8.0;
};
struct ExplicitSpec {
  Image map;  // 1 channel, px
};

using DefocusSpec = std::variant<PhysicalSpec, ZerosSpec, TiltShiftSpec, MaskedSpec, ExplicitSpec>;

/// JSON forms, selected by "type":
///   {"type":"physical","aperture_mm":A,"focus_distance_mm":S1}
///   {"type":"zeros"}
///   {"type":"tiltshift","point":[x,y],"angle_deg":a,"slope_px_per_px":s,"max_radius_px":m}
///   {"type":"masked","mask_png":base64,"fg_radius_px":f,"bg_radius_px":b}
///   {"type":"explicit","map_raw":base64 raw float grid}
/// Throws BadRequest.
DefocusSpec spec_from_json(const nlohmann::json& j);
/// Echo form; image payloads are replaced by their SHA-256.
nlohmann::json spec_echo(const DefocusSpec& spec);

struct MapLimits {
  double max_radius_px = 32.0;
  /// Width of the linear transition at mask boundaries.
  double mask_feather_px = 2.0;
};

/// Target defocus map for a session. Values are finite and within
/// [0, max_radius_px]. Throws BadRequest for missing depth (physical),
/// malformed masks or invalid explicit maps.
optics::DefocusMap build_defocus_map(const DefocusSpec& spec, const Session& session, const MapLimits& limits = {});

struct RenderResult {
  Image image;
  nlohmann::json provenance;  // checkpoint_id, spec, latency_ms, tiles
};

/// Shared inference path for the CLI and the HTTP service. Forward passes
/// are serialized through one model instance.
class Renderer {
 public:
  Renderer(dfnet::DetailFusionNet model, std::string checkpoint_id, inference::TileConfig tiles = {},
           MapLimits limits = {});
  static std::shared_ptr<Renderer> from_checkpoint(const std::filesystem::path& path,
                                                   inference::TileConfig tiles = {});

  RenderResult render(const Session& session, const DefocusSpec& spec);
  const std::string& checkpoint_id() const { return checkpoint_id_; }
  const MapLimits& limits() const { return limits_; }

 private:
  std::mutex mu_;
  dfnet::DetailFusionNet model_;
  std::string checkpoint_id_;
  inference::TileConfig tiles_;
  MapLimits limits_;
};

}  // namespace dualfocus::service
