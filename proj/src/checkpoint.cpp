#include "voxelprior/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <stdexcept>

#include <json.hpp>

#include "voxelprior/digest.hpp"
#include "voxelprior/errors.hpp"
#include "voxelprior/io.hpp"

namespace voxelprior {
namespace {

constexpr std::string_view kMagic = "VPNMDL1";

void put_u32(std::string& out, std::uint64_t v) {
  if (v > UINT32_MAX) throw std::invalid_argument("value does not fit the u32 checkpoint field");
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw std::invalid_argument(std::string("checkpoint truncated while reading ") + what +
                                  ": need " + std::to_string(n) + " bytes at offset " +
                                  std::to_string(pos_) + ", have " +
                                  std::to_string(bytes_.size() - pos_));
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t u(std::size_t width, const char* what) {
    const auto b = take(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = width; i-- > 0;) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(u(4, what)); }
  double f64(const char* what) { return std::bit_cast<double>(u(8, what)); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string arch_to_json(const ArchConfig& c) {
  nlohmann::json j{{"image_size", c.image_size},
                   {"voxel_dim", c.voxel_dim},
                   {"embed_dim", c.embed_dim},
                   {"image_channels", c.image_channels},
                   {"shape_channels", c.shape_channels},
                   {"generator_channels", c.generator_channels},
                   {"image_alpha", c.image_alpha},
                   {"shape_alpha", c.shape_alpha}};
  return j.dump();
}

ArchConfig arch_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ArchConfig c;
    c.image_size = j.at("image_size").get<std::size_t>();
    c.voxel_dim = j.at("voxel_dim").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.image_channels = j.at("image_channels").get<std::vector<std::size_t>>();
    c.shape_channels = j.at("shape_channels").get<std::vector<std::size_t>>();
    c.generator_channels = j.at("generator_channels").get<std::vector<std::size_t>>();
    c.image_alpha = j.at("image_alpha").get<double>();
    c.shape_alpha = j.at("shape_alpha").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed architecture record: ") + e.what());
  }
}

std::string serialize_model(const ModelParams& params) {
  std::string out(kMagic);
  const nlohmann::json record{{"arch", nlohmann::json::parse(arch_to_json(params.config()))},
                              {"variant", variant_name(params.variant())}};
  const std::string text = record.dump();
  put_u32(out, text.size());
  out += text;
  put_u32(out, params.tensors().size());
  for (const auto& [name, value] : params.tensors()) {
    put_u32(out, name.size());
    out += name;
    put_u32(out, value.rank());
    for (std::size_t e : value.shape()) put_u32(out, e);
    for (double v : value.values()) put_f64(out, v);
  }
  return out;
}

ModelParams deserialize_model(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.substr(0, kMagic.size()) != kMagic)
    throw std::invalid_argument("bad magic, not a VPNMDL1 checkpoint");
  r.take(kMagic.size(), "magic");
  const std::string_view text = r.take(r.u32("config length"), "config record");
  ArchConfig arch;
  Variant variant;
  try {
    const auto j = nlohmann::json::parse(text);
    arch = arch_from_json(j.at("arch").dump());
    variant = parse_variant(j.at("variant").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed config record: ") + e.what());
  }
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedTensor> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name(r.take(r.u32("name length"), "tensor name"));
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 8) throw std::invalid_argument("tensor " + name + " has bad rank");
    Shape shape;
    for (std::uint32_t a = 0; a < rank; ++a) shape.push_back(r.u32("extent"));
    const std::size_t n = shape_volume(shape);
    if (n > bytes.size()) throw std::invalid_argument("tensor " + name + " larger than the file");
    std::vector<double> values(n);
    for (double& v : values) v = r.f64("tensor values");
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (!r.done()) throw std::invalid_argument("trailing bytes after the last tensor");
  return ModelParams(std::move(arch), variant, std::move(tensors));
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  write_file(path, serialize_model(params));
}

ModelParams load_model(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  try {
    return deserialize_model(bytes);
  } catch (const std::invalid_argument& e) {
    throw IoError(IoError::Kind::corrupt, path, e.what());
  }
}

std::string model_digest(const ModelParams& params) { return digest_hex(serialize_model(params)); }

}  // namespace voxelprior
