#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "dualfocus/http_api.hpp"
#include "dualfocus/io.hpp"
#include "support.hpp"

using namespace dualfocus;
using dualfocus::fixtures::TempDir;

namespace {

// Runs the API on an ephemeral local port for the lifetime of the object.
class LiveServer {
 public:
  explicit LiveServer(std::shared_ptr<service::Renderer> renderer)
      : store_(std::make_shared<service::SessionStore>(dir_.path())) {
    http_api::register_routes(server_, store_, std::move(renderer));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(120, 0);
    return c;
  }
  service::SessionStore& store() { return *store_; }

 private:
  TempDir dir_;
  std::shared_ptr<service::SessionStore> store_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

nlohmann::json create_body(int w, int h) {
  const Image img = io::quantize_8bit(fixtures::smooth_image(w, h, 3, 1));
  return {{"w_png", io::base64_encode(io::encode_png(img))},
          {"uw_png", io::base64_encode(io::encode_png(img))},
          {"uw_prewarped", true}};
}

std::string post_session(httplib::Client& c, int w = 32, int h = 24) {
  auto res = c.Post("/sessions", create_body(w, h).dump(), "application/json");
  EXPECT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  return nlohmann::json::parse(res->body).at("id").get<std::string>();
}

std::shared_ptr<service::Renderer> tiny_renderer() {
  auto model = dfnet::build_model(dfnet::ModelConfig::tiny());
  model->eval();
  return std::make_shared<service::Renderer>(model, "tiny");
}

}  // namespace

TEST(HttpApi, HealthAndSessionLifecycle) {
  LiveServer server(nullptr);
  auto c = server.client();
  auto health = c.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_FALSE(nlohmann::json::parse(health->body).at("model_loaded").get<bool>());

  const auto id = post_session(c);
  auto list = c.Get("/sessions");
  EXPECT_EQ(nlohmann::json::parse(list->body).at("sessions").size(), 1u);
  auto get = c.Get("/sessions/" + id);
  ASSERT_TRUE(get);
  EXPECT_EQ(get->status, 200);
  EXPECT_EQ(nlohmann::json::parse(get->body).at("id"), id);
  auto del = c.Delete("/sessions/" + id);
  EXPECT_EQ(del->status, 204);
  EXPECT_EQ(c.Get("/sessions/" + id)->status, 404);
  EXPECT_EQ(c.Delete("/sessions/" + id)->status, 404);
}

TEST(HttpApi, BadRequestsAnswer400) {
  LiveServer server(nullptr);
  auto c = server.client();
  EXPECT_EQ(c.Post("/sessions", "{not json", "application/json")->status, 400);
  auto body = create_body(32, 24);
  body["uw_png"] = io::base64_encode(io::encode_png(Image(31, 24, 3)));
  auto res = c.Post("/sessions", body.dump(), "application/json");
  EXPECT_EQ(res->status, 400);
  EXPECT_TRUE(nlohmann::json::parse(res->body).contains("error"));
  const auto id = post_session(c);
  EXPECT_EQ(c.Post("/sessions/" + id + "/defocus-map", R"({"type":"sepia"})", "application/json")->status, 400);
  // Physical spec needs depth, which this session lacks.
  EXPECT_EQ(c.Post("/sessions/" + id + "/defocus-map", R"({"type":"physical","aperture_mm":2,"focus_distance_mm":900})",
                   "application/json")
                ->status,
            400);
}

TEST(HttpApi, DefocusMapPreview) {
  LiveServer server(nullptr);
  auto c = server.client();
  const auto id = post_session(c, 41, 21);
  auto res = c.Post("/sessions/" + id + "/defocus-map",
                    R"({"type":"tiltshift","slope_px_per_px":0.5,"max_radius_px":4})", "application/json");
  ASSERT_EQ(res->status, 200);
  const auto j = nlohmann::json::parse(res->body);
  const auto raw = io::base64_decode(j.at("map_raw").get<std::string>());
  const Image map = io::decode_raw(raw, 1);
  EXPECT_EQ(map.width(), 41);
  EXPECT_FLOAT_EQ(map.at(0, 0, 0), 4.0f);
  EXPECT_FLOAT_EQ(map.at(0, 10, 7), 0.0f);
  EXPECT_FLOAT_EQ(j.at("peak_radius_px").get<float>(), 4.0f);
  EXPECT_EQ(j.at("spec").at("type"), "tiltshift");
  EXPECT_EQ(c.Post("/sessions/nosuch/defocus-map", R"({"type":"zeros"})", "application/json")->status, 404);
}

TEST(HttpApi, RenderWithoutModelIs503) {
  LiveServer server(nullptr);
  auto c = server.client();
  const auto id = post_session(c);
  EXPECT_EQ(c.Post("/sessions/" + id + "/render", R"({"type":"zeros"})", "application/json")->status, 503);
}

TEST(HttpApi, RenderMatchesInProcessRenderer) {
  auto renderer = tiny_renderer();
  LiveServer server(renderer);
  auto c = server.client();
  const auto id = post_session(c, 40, 32);
  auto res = c.Post("/sessions/" + id + "/render", R"({"type":"tiltshift","slope_px_per_px":0.1})", "application/json");
  ASSERT_EQ(res->status, 200);
  const auto j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j.at("provenance").at("checkpoint_id"), "tiny");
  const Image over_http = io::decode_png(io::base64_decode(j.at("image_png").get<std::string>()));
  service::TiltShiftSpec spec;
  spec.slope_px_per_px = 0.1;
  const Image direct = renderer->render(server.store().get(id), spec).image;
  EXPECT_EQ(io::encode_png(over_http), io::encode_png(direct));
  EXPECT_EQ(c.Post("/sessions/nosuch/render", R"({"type":"zeros"})", "application/json")->status, 404);
}

TEST(HttpApi, CorsPreflight) {
  LiveServer server(nullptr);
  auto c = server.client();
  auto res = c.Options("/sessions");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST(HttpApi, EnvironmentOverrides) {
  http_api::ServerConfig cfg;
  setenv("DC2_PORT", "9191", 1);
  setenv("DC2_STORE", "/tmp/dc2store", 1);
  cfg.apply_env();
  unsetenv("DC2_PORT");
  unsetenv("DC2_STORE");
  EXPECT_EQ(cfg.port, 9191);
  EXPECT_EQ(cfg.store, "/tmp/dc2store");
  EXPECT_TRUE(cfg.checkpoint.empty());
}
