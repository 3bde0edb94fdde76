#include "dualfocus/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "dualfocus/align.hpp"
#include "dualfocus/checkpoint.hpp"
#include "dualfocus/io.hpp"

namespace dualfocus::service {
namespace fs = std::filesystem;
namespace {

constexpr double kPi = 3.14159265358979323846;

Image decode_png_field(const nlohmann::json& j, const char* key) {
  try {
    const auto bytes = io::base64_decode(j.at(key).get<std::string>());
    return io::decode_png(bytes);
  } catch (const std::exception& e) {
    throw BadRequest(fmt::format("{}: {}", key, e.what()));
  }
}

Image decode_raw_field(const nlohmann::json& j, const char* key, int channels) {
  try {
    const auto bytes = io::base64_decode(j.at(key).get<std::string>());
    return io::decode_raw(bytes, channels);
  } catch (const std::exception& e) {
    throw BadRequest(fmt::format("{}: {}", key, e.what()));
  }
}

Image as_single_channel(const Image& img, const char* what) {
  if (img.channels() == 1) return img;
  if (img.channels() == 3) return luminance(img);
  throw BadRequest(fmt::format("{}: expected a 1 or 3 channel image", what));
}

void require_dims(const Image& a, const Image& b, const char* what) {
  if (!a.same_dims(b)) {
    throw BadRequest(fmt::format("{}: {}x{} does not match {}x{}", what, b.width(), b.height(), a.width(), a.height()));
  }
}

void require_valid_radii(const Image& map, double max_radius, const char* what) {
  for (float v : map.data()) {
    if (!std::isfinite(v) || v < 0.0f || v > max_radius) {
      throw BadRequest(fmt::format("{}: values must be finite and within [0, {}]", what, max_radius));
    }
  }
}

std::int64_t now_unix() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 && std::ranges::all_of(id, [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

optics::DefocusMap zeros_map(const Session& s) { return optics::DefocusMap::zeros(s.width(), s.height()); }

optics::DefocusMap from_radii(Image radii) {
  optics::DefocusMap m;
  m.valid.assign(radii.pixel_count(), 1);
  m.radius_px = std::move(radii);
  return m;
}

}  // namespace

inference::Planes Session::planes(const Image& tgt_defocus) const {
  return {w, uw_warped, occlusion, ref_defocus, tgt_defocus};
}

nlohmann::json Session::summary() const {
  return {{"id", id},
          {"width", width()},
          {"height", height()},
          {"created_unix", created_unix},
          {"has_depth", depth.has_value()},
          {"ref_focus_distance_mm", ref_lens.focus_distance_mm},
          {"rig", synthcam::to_json(rig)}};
}

CreateRequest CreateRequest::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw BadRequest("session: body must be a JSON object");
  CreateRequest r;
  r.w = decode_png_field(j, "w_png");
  r.uw = decode_png_field(j, "uw_png");
  r.uw_prewarped = j.value("uw_prewarped", false);
  if (j.contains("occlusion_png")) r.occlusion = as_single_channel(decode_png_field(j, "occlusion_png"), "occlusion");
  if (j.contains("depth_raw")) r.depth = optics::DepthMap{decode_raw_field(j, "depth_raw", 1)};
  if (j.contains("ref_defocus_raw")) r.ref_defocus = decode_raw_field(j, "ref_defocus_raw", 1);
  try {
    if (j.contains("rig")) r.rig = synthcam::rig_from_json(j.at("rig"));
    if (j.contains("ref_focus_distance_mm")) r.ref_lens = optics::LensState{j.at("ref_focus_distance_mm").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw BadRequest(std::string("session: ") + e.what());
  }
  return r;
}

nlohmann::json CreateRequest::to_json() const {
  nlohmann::json j;
  j["w_png"] = io::base64_encode(io::encode_png(w));
  j["uw_png"] = io::base64_encode(io::encode_png(uw));
  j["uw_prewarped"] = uw_prewarped;
  if (occlusion) j["occlusion_png"] = io::base64_encode(io::encode_png(*occlusion));
  if (depth) j["depth_raw"] = io::base64_encode(io::encode_raw(depth->mm));
  if (ref_defocus) j["ref_defocus_raw"] = io::base64_encode(io::encode_raw(*ref_defocus));
  if (rig) j["rig"] = synthcam::to_json(*rig);
  if (ref_lens) j["ref_focus_distance_mm"] = ref_lens->focus_distance_mm;
  return j;
}

Session build_session(const CreateRequest& request) {
  if (request.w.empty() || request.w.channels() != 3) throw BadRequest("session: W image must be RGB");
  if (request.uw.channels() != 3) throw BadRequest("session: UW image must be RGB");
  require_dims(request.w, request.uw, "session uw");

  Session s;
  s.created_unix = now_unix();
  s.w = io::quantize_8bit(request.w);
  try {
    s.rig = request.rig ? *request.rig : synthcam::CameraRig::default_rig(s.width(), s.height());
    s.rig.validate();
  } catch (const std::invalid_argument& e) {
    throw BadRequest(std::string("session rig: ") + e.what());
  }
  if (s.rig.w_cam.width_px != s.width() || s.rig.w_cam.height_px != s.height()) {
    throw BadRequest("session rig: camera size does not match the W image");
  }

  if (request.uw_prewarped) {
    s.uw_warped = request.uw;
    s.occlusion = request.occlusion ? *request.occlusion : Image(s.width(), s.height(), 1);
  } else {
    const auto forward = align::estimate_warp(request.uw, request.w);
    const auto backward = align::estimate_warp(request.w, request.uw);
    s.uw_warped = align::warp(request.uw, forward).image;
    s.occlusion = request.occlusion ? *request.occlusion : align::estimate_occlusion(forward, backward);
  }
  require_dims(s.w, s.occlusion, "session occlusion");
  s.uw_warped = io::quantize_8bit(s.uw_warped);
  s.occlusion = io::quantize_8bit(s.occlusion);

  if (request.depth) {
    require_dims(s.w, request.depth->mm, "session depth");
    s.depth = request.depth;
  }
  s.ref_lens = request.ref_lens ? *request.ref_lens : optics::LensState{};
  if (request.ref_defocus) {
    require_dims(s.w, *request.ref_defocus, "session ref_defocus");
    require_valid_radii(*request.ref_defocus, std::numeric_limits<double>::max(), "session ref_defocus");
    s.ref_defocus = *request.ref_defocus;
  } else if (s.depth) {
    try {
      s.ref_defocus = optics::defocus_map(s.rig.w_cam, s.ref_lens, *s.depth).radius_px;
    } catch (const std::exception& e) {
      throw BadRequest(std::string("session reference lens: ") + e.what());
    }
  } else {
    s.ref_defocus = Image(s.width(), s.height(), 1);
  }
  return s;
}

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

fs::path SessionStore::dir_for(const std::string& id) const { return root_ / id; }

std::shared_ptr<std::mutex> SessionStore::lock_for(const std::string& id) const {
  std::lock_guard guard(mu_);
  auto& slot = locks_[id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

std::string SessionStore::new_id() {
  std::lock_guard guard(mu_);
  static thread_local std::mt19937_64 rng(std::random_device{}());
  for (;;) {
    const auto id = fmt::format("{:016x}", rng() ^ (++counter_ * 0x9E3779B97F4A7C15ull));
    if (!fs::exists(dir_for(id))) return id;
  }
}

std::string SessionStore::create(const CreateRequest& request) { return insert(build_session(request)); }

std::string SessionStore::insert(Session session) {
  session.id = new_id();
  auto lock = lock_for(session.id);
  std::lock_guard guard(*lock);
  const fs::path dir = dir_for(session.id);
  fs::path tmp = dir;
  tmp += ".partial";
  fs::create_directories(tmp);
  io::write_png(tmp / "w.png", session.w);
  io::write_png(tmp / "uw_warped.png", session.uw_warped);
  io::write_png(tmp / "occlusion.png", session.occlusion);
  io::write_raw(tmp / "ref_defocus.raw", session.ref_defocus);
  if (session.depth) io::write_raw(tmp / "depth.raw", session.depth->mm);
  nlohmann::json meta = session.summary();
  io::write_text_atomic(tmp / "session.json", meta.dump(2));
  fs::rename(tmp, dir);
  return session.id;
}

Session SessionStore::get(const std::string& id) const {
  if (!valid_id(id)) throw NotFound("unknown session " + id);
  auto lock = lock_for(id);
  std::lock_guard guard(*lock);
  const fs::path dir = dir_for(id);
  if (!fs::exists(dir / "session.json")) throw NotFound("unknown session " + id);
  const auto bytes = io::read_file(dir / "session.json");
  const auto meta = nlohmann::json::parse(bytes.begin(), bytes.end());
  Session s;
  s.id = id;
  s.created_unix = meta.at("created_unix").get<std::int64_t>();
  s.rig = synthcam::rig_from_json(meta.at("rig"));
  s.ref_lens.focus_distance_mm = meta.at("ref_focus_distance_mm").get<double>();
  s.w = io::read_png(dir / "w.png");
  s.uw_warped = io::read_png(dir / "uw_warped.png");
  s.occlusion = io::read_png(dir / "occlusion.png");
  s.ref_defocus = io::read_raw(dir / "ref_defocus.raw", 1);
  if (meta.at("has_depth").get<bool>()) s.depth = optics::DepthMap{io::read_raw(dir / "depth.raw", 1)};
  return s;
}

std::vector<nlohmann::json> SessionStore::list() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && valid_id(name) && fs::exists(entry.path() / "session.json")) ids.push_back(name);
  }
  std::ranges::sort(ids);
  std::vector<nlohmann::json> out;
  for (const auto& id : ids) {
    const auto bytes = io::read_file(dir_for(id) / "session.json");
    auto meta = nlohmann::json::parse(bytes.begin(), bytes.end());
    meta.erase("rig");
    out.push_back(std::move(meta));
  }
  return out;
}

bool SessionStore::remove(const std::string& id) {
  if (!valid_id(id)) return false;
  auto lock = lock_for(id);
  std::lock_guard guard(*lock);
  const fs::path dir = dir_for(id);
  if (!fs::exists(dir)) return false;
  fs::remove_all(dir);
  return true;
}

DefocusSpec spec_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw BadRequest("spec: body must be a JSON object");
    const auto type = j.at("type").get<std::string>();
    if (type == "physical") {
      return PhysicalSpec{j.at("aperture_mm").get<double>(), j.at("focus_distance_mm").get<double>()};
    }
    if (type == "zeros") return ZerosSpec{};
    if (type == "tiltshift") {
      TiltShiftSpec t;
      if (j.contains("point")) {
        t.point_x = j.at("point").at(0).get<double>();
        t.point_y = j.at("point").at(1).get<double>();
      }
      t.angle_rad = j.value("angle_deg", 0.0) * kPi / 180.0;
      t.slope_px_per_px = j.value("slope_px_per_px", t.slope_px_per_px);
      t.max_radius_px = j.value("max_radius_px", t.max_radius_px);
      return t;
    }
    if (type == "masked") {
      MaskedSpec m;
      m.mask = as_single_channel(decode_png_field(j, "mask_png"), "mask");
      m.fg_radius_px = j.value("fg_radius_px", m.fg_radius_px);
      m.bg_radius_px = j.value("bg_radius_px", m.bg_radius_px);
      return m;
    }
    if (type == "explicit") return ExplicitSpec{decode_raw_field(j, "map_raw", 1)};
    throw BadRequest("spec: unknown type " + type);
  } catch (const nlohmann::json::exception& e) {
    throw BadRequest(std::string("spec: ") + e.what());
  }
}

nlohmann::json spec_echo(const DefocusSpec& spec) {
  struct Visitor {
    nlohmann::json operator()(const PhysicalSpec& s) const {
      return {{"type", "physical"}, {"aperture_mm", s.aperture_mm}, {"focus_distance_mm", s.focus_distance_mm}};
    }
    nlohmann::json operator()(const ZerosSpec&) const { return {{"type", "zeros"}}; }
    nlohmann::json operator()(const TiltShiftSpec& s) const {
      nlohmann::json j = {{"type", "tiltshift"},
                          {"angle_deg", s.angle_rad * 180.0 / kPi},
                          {"slope_px_per_px", s.slope_px_per_px},
                          {"max_radius_px", s.max_radius_px}};
      if (s.point_x && s.point_y) j["point"] = {*s.point_x, *s.point_y};
      return j;
    }
    nlohmann::json operator()(const MaskedSpec& s) const {
      return {{"type", "masked"},
              {"mask_sha256", io::sha256_hex(io::encode_png(s.mask))},
              {"fg_radius_px", s.fg_radius_px},
              {"bg_radius_px", s.bg_radius_px}};
    }
    nlohmann::json operator()(const ExplicitSpec& s) const {
      return {{"type", "explicit"}, {"map_sha256", io::sha256_hex(io::encode_raw(s.map))}};
    }
  };
  return std::visit(Visitor{}, spec);
}

optics::DefocusMap build_defocus_map(const DefocusSpec& spec, const Session& session, const MapLimits& limits) {
  const int w = session.width();
  const int h = session.height();
  const double max_r = limits.max_radius_px;

  struct Visitor {
    const Session& session;
    const MapLimits& limits;
    int w, h;
    double max_r;

    optics::DefocusMap operator()(const PhysicalSpec& s) const {
      if (!session.depth) throw BadRequest("physical spec needs a session with depth");
      auto cam = session.rig.w_cam;
      cam.aperture_diameter_mm = s.aperture_mm;
      optics::DefocusMap m;
      try {
        cam.validate();
        m = optics::defocus_map(cam, optics::LensState{s.focus_distance_mm}, *session.depth);
        if (!std::isfinite(s.focus_distance_mm)) throw std::domain_error("focus distance must be finite");
      } catch (const std::exception& e) {
        throw BadRequest(std::string("physical spec: ") + e.what());
      }
      m.radius_px.clamp(0.0f, static_cast<float>(max_r));
      return m;
    }
    optics::DefocusMap operator()(const ZerosSpec&) const { return zeros_map(session); }
    optics::DefocusMap operator()(const TiltShiftSpec& s) const {
      if (!std::isfinite(s.slope_px_per_px) || s.slope_px_per_px < 0.0 || !std::isfinite(s.max_radius_px) ||
          s.max_radius_px < 0.0 || !std::isfinite(s.angle_rad)) {
        throw BadRequest("tiltshift spec: slope and max radius must be finite and non-negative");
      }
      const double px = s.point_x.value_or((w - 1) / 2.0);
      const double py = s.point_y.value_or((h - 1) / 2.0);
      const double cap = std::min(s.max_radius_px, max_r);
      const double sn = std::sin(s.angle_rad);
      const double cs = std::cos(s.angle_rad);
      Image radii(w, h, 1);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double d = std::abs(-(x - px) * sn + (y - py) * cs);
          radii.at(0, y, x) = static_cast<float>(std::clamp(s.slope_px_per_px * d, 0.0, cap));
        }
      }
      return from_radii(std::move(radii));
    }
    optics::DefocusMap operator()(const MaskedSpec& s) const {
      require_dims(session.w, s.mask, "masked spec mask");
      if (s.mask.channels() != 1) throw BadRequest("masked spec: mask must be single channel");
      for (double r : {s.fg_radius_px, s.bg_radius_px}) {
        if (!std::isfinite(r) || r < 0.0) throw BadRequest("masked spec: radii must be finite and non-negative");
      }
      const double feather = limits.mask_feather_px;
      const int reach = static_cast<int>(std::ceil(feather)) + 1;
      Image radii(w, h, 1);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const bool fg = s.mask.at(0, y, x) > 0.5f;
          // Distance to the nearest pixel of the other class, capped at `reach`.
          double nearest = reach;
          for (int dy = -reach; dy <= reach; ++dy) {
            for (int dx = -reach; dx <= reach; ++dx) {
              const int yy = y + dy;
              const int xx = x + dx;
              if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
              if ((s.mask.at(0, yy, xx) > 0.5f) != fg) nearest = std::min(nearest, std::hypot(dx, dy));
            }
          }
          const double signed_dist = (fg ? 1.0 : -1.0) * (nearest - 0.5);
          const double alpha = feather > 0.0 ? std::clamp(0.5 + signed_dist / feather, 0.0, 1.0) : (fg ? 1.0 : 0.0);
          const double r = s.bg_radius_px + (s.fg_radius_px - s.bg_radius_px) * alpha;
          radii.at(0, y, x) = static_cast<float>(std::clamp(r, 0.0, max_r));
        }
      }
      return from_radii(std::move(radii));
    }
    optics::DefocusMap operator()(const ExplicitSpec& s) const {
      require_dims(session.w, s.map, "explicit spec map");
      require_valid_radii(s.map, max_r, "explicit spec map");
      return from_radii(s.map);
    }
  };
  return std::visit(Visitor{session, limits, w, h, max_r}, spec);
}

Renderer::Renderer(dfnet::DetailFusionNet model, std::string checkpoint_id, inference::TileConfig tiles,
                   MapLimits limits)
    : model_(std::move(model)), checkpoint_id_(std::move(checkpoint_id)), tiles_(tiles), limits_(limits) {
  tiles_.validate();
  model_->eval();
}

std::shared_ptr<Renderer> Renderer::from_checkpoint(const fs::path& path, inference::TileConfig tiles) {
  auto loaded = checkpoint::load(path);
  return std::make_shared<Renderer>(loaded.model, loaded.id, tiles);
}

RenderResult Renderer::render(const Session& session, const DefocusSpec& spec) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto target = build_defocus_map(spec, session, limits_);
  Image image;
  {
    std::lock_guard guard(mu_);
    image = inference::predict(model_, session.planes(target.radius_px), tiles_);
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  RenderResult r;
  r.image = std::move(image);
  r.provenance = {{"checkpoint_id", checkpoint_id_},
                  {"session_id", session.id},
                  {"spec", spec_echo(spec)},
                  {"latency_ms", ms},
                  {"tiles", {{"max_tile", tiles_.max_tile}, {"overlap", tiles_.overlap}}}};
  return r;
}

}  // namespace dualfocus::service
