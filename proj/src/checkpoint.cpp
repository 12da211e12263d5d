#include <fstream>

#include "dhg/binary_io.hpp"
#include "dhg/model.hpp"

namespace dhg {

namespace {

constexpr char kMagic[4] = {'D', 'H', 'G', 'W'};

struct Header {
  std::uint64_t digest = 0;
  std::string config_text;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[4] = {};
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open checkpoint " + path.string());
  in.read(magic, 4);
  require(in && std::equal(magic, magic + 4, kMagic), ErrorCode::kBadMagic, path.string() + " is not a DHGW checkpoint");
  std::uint32_t version = 0, len = 0;
  Header h;
  require(io::read_u32(in, version) && io::read_u64(in, h.digest) && io::read_u32(in, len), ErrorCode::kCheckpointMismatch,
          path.string() + ": truncated header");
  require(version == kCheckpointVersion, ErrorCode::kCheckpointMismatch,
          path.string() + ": unsupported checkpoint version " + std::to_string(version));
  h.config_text.resize(len);
  require(len < (1u << 24) && in.read(h.config_text.data(), len), ErrorCode::kCheckpointMismatch,
          path.string() + ": truncated config");
  require(fnv1a(h.config_text) == h.digest, ErrorCode::kCheckpointMismatch, path.string() + ": config digest mismatch");
  return h;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> blobs(DhstNetwork<T>& net) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (Parameter<T>* p : net.parameters()) out.emplace_back(p->name, &p->value);
  for (auto& b : net.buffers()) out.push_back(b);
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(DhstNetwork<T>& net, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write checkpoint " + path.string());
  const std::string text = net.config().to_text();
  out.write(kMagic, 4);
  io::write_u32(out, kCheckpointVersion);
  io::write_u64(out, fnv1a(text));
  io::write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto all = blobs(net);
  io::write_u32(out, static_cast<std::uint32_t>(all.size()));
  for (const auto& [name, tensor] : all) {
    io::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_u32(out, static_cast<std::uint32_t>(tensor->rank()));
    for (std::size_t d : tensor->shape()) io::write_u32(out, static_cast<std::uint32_t>(d));
    for (T v : tensor->data()) io::write_f32(out, static_cast<float>(v));
  }
  require(static_cast<bool>(out), ErrorCode::kIoError, "failed writing checkpoint " + path.string());
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return ModelConfig::from_text(read_header(in, path).config_text);
}

template <typename T>
void load_checkpoint(DhstNetwork<T>& net, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const Header h = read_header(in, path);
  require(h.digest == net.config().digest(), ErrorCode::kCheckpointMismatch,
          path.string() + " was saved from a different model config");
  const auto all = blobs(net);
  std::uint32_t count = 0;
  require(io::read_u32(in, count) && count == all.size(), ErrorCode::kCheckpointMismatch,
          path.string() + ": expected " + std::to_string(all.size()) + " blobs");
  for (const auto& [name, tensor] : all) {
    std::uint32_t len = 0, rank = 0;
    require(io::read_u32(in, len) && len < 4096, ErrorCode::kCheckpointMismatch, path.string() + ": truncated blob");
    std::string got(len, '\0');
    in.read(got.data(), len);
    require(in && got == name, ErrorCode::kCheckpointMismatch, path.string() + ": expected blob " + name + ", found " + got);
    require(io::read_u32(in, rank) && rank == tensor->rank(), ErrorCode::kCheckpointMismatch,
            path.string() + ": rank mismatch for " + name);
    for (std::size_t d : tensor->shape()) {
      std::uint32_t v = 0;
      require(io::read_u32(in, v) && v == d, ErrorCode::kCheckpointMismatch, path.string() + ": shape mismatch for " + name);
    }
    for (T& v : tensor->data()) {
      float f = 0;
      require(io::read_f32(in, f), ErrorCode::kCheckpointMismatch, path.string() + ": truncated data for " + name);
      v = static_cast<T>(f);
    }
  }
}

template <typename T>
std::unique_ptr<DhstNetwork<T>> load_network(const std::filesystem::path& path) {
  auto net = std::make_unique<DhstNetwork<T>>(read_checkpoint_config(path), 0);
  load_checkpoint(*net, path);
  return net;
}

template void save_checkpoint<float>(DhstNetwork<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(DhstNetwork<double>&, const std::filesystem::path&);
template void load_checkpoint<float>(DhstNetwork<float>&, const std::filesystem::path&);
template void load_checkpoint<double>(DhstNetwork<double>&, const std::filesystem::path&);
template std::unique_ptr<DhstNetwork<float>> load_network<float>(const std::filesystem::path&);
template std::unique_ptr<DhstNetwork<double>> load_network<double>(const std::filesystem::path&);

}  // namespace dhg
