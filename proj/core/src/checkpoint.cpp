#include "dualfocus/checkpoint.hpp"

#include <torch/torch.h>

#include <bit>
#include <cstring>
#include <map>
#include <stdexcept>

namespace dualfocus::checkpoint {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

std::vector<std::pair<std::string, torch::Tensor>> named_state(dfnet::DetailFusionNet& model) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : model->named_parameters(true)) out.emplace_back(item.key(), item.value());
  for (const auto& item : model->named_buffers(true)) out.emplace_back(item.key(), item.value());
  return out;
}

}  // namespace

io::Bytes serialize(dfnet::DetailFusionNet& model, const nlohmann::json& extra) {
  nlohmann::json index = nlohmann::json::array();
  std::vector<torch::Tensor> payload;
  int64_t offset = 0;
  for (auto& [name, tensor] : named_state(model)) {
    auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    index.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", offset}});
    offset += t.numel();
    payload.push_back(t);
  }
  const nlohmann::json header = {{"config", model->config().to_json()}, {"extra", extra}, {"tensors", index}};
  const std::string text = header.dump();

  io::Bytes out(8 + 8 + text.size() + static_cast<std::size_t>(offset) * sizeof(float));
  std::memcpy(out.data(), kMagic, 8);
  const std::uint64_t len = text.size();
  std::memcpy(out.data() + 8, &len, 8);
  std::memcpy(out.data() + 16, text.data(), text.size());
  std::uint8_t* cursor = out.data() + 16 + text.size();
  for (const auto& t : payload) {
    const auto n = static_cast<std::size_t>(t.numel()) * sizeof(float);
    std::memcpy(cursor, t.data_ptr<float>(), n);
    cursor += n;
  }
  return out;
}

Loaded deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - 16) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  const std::uint8_t* data = bytes.data() + 16 + len;
  const std::size_t data_floats = (bytes.size() - 16 - len) / sizeof(float);

  Loaded loaded;
  loaded.model = dfnet::build_model(dfnet::ModelConfig::from_json(header.at("config")));
  loaded.extra = header.value("extra", nlohmann::json::object());
  loaded.id = io::sha256_hex(bytes);

  std::map<std::string, torch::Tensor> targets;
  for (auto& [name, tensor] : named_state(loaded.model)) targets.emplace(name, tensor);
  const auto& index = header.at("tensors");
  if (index.size() != targets.size()) throw std::runtime_error("checkpoint: tensor count does not match config");

  torch::NoGradGuard guard;
  for (const auto& entry : index) {
    const auto name = entry.at("name").get<std::string>();
    auto it = targets.find(name);
    if (it == targets.end()) throw std::runtime_error("checkpoint: unknown tensor " + name);
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    if (it->second.sizes().vec() != shape) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto numel = static_cast<std::size_t>(it->second.numel());
    if (offset + numel > data_floats) throw std::runtime_error("checkpoint: truncated payload");
    auto src = torch::empty(shape, torch::kFloat32);
    std::memcpy(src.data_ptr<float>(), data + offset * sizeof(float), numel * sizeof(float));
    it->second.copy_(src);
  }
  return loaded;
}

std::string save(const std::filesystem::path& path, dfnet::DetailFusionNet& model, const nlohmann::json& extra) {
  const auto bytes = serialize(model, extra);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file_atomic(path, bytes);
  return io::sha256_hex(bytes);
}

Loaded load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

bool same_weights(dfnet::DetailFusionNet& a, dfnet::DetailFusionNet& b) {
  if (a->config().to_json() != b->config().to_json()) return false;
  auto sa = named_state(a);
  auto sb = named_state(b);
  if (sa.size() != sb.size()) return false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i].first != sb[i].first || !torch::equal(sa[i].second, sb[i].second)) return false;
  }
  return true;
}

}  // namespace dualfocus::checkpoint
