#include "voxelprior/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "voxelprior/errors.hpp"

namespace voxelprior {
namespace {

constexpr std::string_view kVoxelMagic = "VOXL1";
constexpr std::size_t kVoxelHeader = kVoxelMagic.size() + 6;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const std::string& s, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) |
                                    (static_cast<unsigned char>(s[at + 1]) << 8));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
  return v;
}

std::uint16_t swap16(std::uint16_t v) { return static_cast<std::uint16_t>((v >> 8) | (v << 8)); }

std::string encode_voxels(std::size_t dim, const std::vector<double>& values) {
  if (dim == 0 || dim > 0xffff) throw std::invalid_argument("voxel extent must be in [1, 65535]");
  std::string out(kVoxelMagic);
  for (int i = 0; i < 3; ++i) put_u16(out, static_cast<std::uint16_t>(dim));
  out.reserve(kVoxelHeader + 4 * values.size());
  for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

}  // namespace

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::write_failed, path, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError(IoError::Kind::write_failed, path, "write failed");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    const bool exists = std::filesystem::exists(path);
    throw IoError(exists ? IoError::Kind::read_failed : IoError::Kind::not_found, path,
                  exists ? "cannot open for reading" : "no such file");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError(IoError::Kind::read_failed, path, "read failed");
  return std::move(buf).str();
}

void save_voxel_values(std::size_t dim, const std::vector<double>& values,
                       const std::filesystem::path& path) {
  if (values.size() != dim * dim * dim)
    throw std::invalid_argument("voxel value count does not match extent");
  write_file(path, encode_voxels(dim, values));
}

void save_voxel(const VoxelGrid& grid, const std::filesystem::path& path) {
  const auto v = grid.values();
  save_voxel_values(grid.dim(), std::vector<double>(v.begin(), v.end()), path);
}

std::vector<double> load_voxel_values(const std::filesystem::path& path, std::size_t* dim) {
  const std::string bytes = read_file(path);
  auto corrupt = [&](const std::string& why) {
    return IoError(IoError::Kind::corrupt, path, why);
  };
  if (bytes.size() < kVoxelMagic.size() || std::string_view(bytes).substr(0, 5) != kVoxelMagic)
    throw corrupt("bad magic, not a VOXL1 file");
  if (bytes.size() < kVoxelHeader)
    throw corrupt("truncated header: expected " + std::to_string(kVoxelHeader) + " bytes, got " +
                  std::to_string(bytes.size()));
  std::uint16_t ext[3];
  for (int i = 0; i < 3; ++i) ext[i] = get_u16(bytes, kVoxelMagic.size() + 2 * i);
  const std::size_t body = bytes.size() - kVoxelHeader;
  auto volume = [](const std::uint16_t* e) {
    return static_cast<std::size_t>(e[0]) * e[1] * e[2];
  };
  const std::uint16_t swapped[3] = {swap16(ext[0]), swap16(ext[1]), swap16(ext[2])};
  const bool looks_swapped = volume(ext) * 4 != body && volume(swapped) * 4 == body &&
                             volume(swapped) > 0;
  if (looks_swapped)
    throw corrupt("header extents are byte-swapped (big-endian file); VOXL1 is little-endian");
  if (ext[0] != ext[1] || ext[1] != ext[2] || ext[0] == 0)
    throw corrupt("extent mismatch: " + std::to_string(ext[0]) + "x" + std::to_string(ext[1]) +
                  "x" + std::to_string(ext[2]) + " is not a nonempty cube");
  const std::size_t expected = kVoxelHeader + 4 * volume(ext);
  if (bytes.size() != expected)
    throw corrupt((bytes.size() < expected ? "truncated file: expected " : "trailing data: expected ") +
                  std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
  std::vector<double> values(volume(ext));
  for (std::size_t i = 0; i < values.size(); ++i)
    values[i] = std::bit_cast<float>(get_u32(bytes, kVoxelHeader + 4 * i));
  *dim = ext[0];
  return values;
}

VoxelGrid load_voxel(const std::filesystem::path& path) {
  std::size_t dim = 0;
  std::vector<double> values = load_voxel_values(path, &dim);
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!(values[i] >= 0.0 && values[i] <= 1.0))
      throw IoError(IoError::Kind::corrupt, path,
                    "value " + std::to_string(values[i]) + " at index " + std::to_string(i) +
                        " outside [0,1]");
  return VoxelGrid(dim, std::move(values));
}

Tensor Image8::to_tensor() const {
  Tensor t(Shape{3, height, width}, 0.0);
  const std::size_t plane = width * height;
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) t[c * plane + p] = rgb[3 * p + c] / 255.0;
  return t;
}

Image8 Image8::from_tensor(const Tensor& chw) {
  if (chw.rank() != 3 || chw.extent(0) != 3)
    throw std::invalid_argument("expected a [3,H,W] image tensor, got " + shape_string(chw.shape()));
  Image8 img;
  img.height = chw.extent(1);
  img.width = chw.extent(2);
  const std::size_t plane = img.width * img.height;
  img.rgb.resize(3 * plane);
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = chw[c * plane + p];
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("image values must lie in [0,1]");
      img.rgb[3 * p + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

void save_ppm(const Image8& image, const std::filesystem::path& path) {
  if (image.rgb.size() != 3 * image.width * image.height)
    throw std::invalid_argument("PPM pixel buffer does not match its size");
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  write_file(path, out);
}

Image8 load_ppm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  auto corrupt = [&](const std::string& why) {
    return IoError(IoError::Kind::corrupt, path, why);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
    if (ec != std::errc()) throw corrupt("malformed PPM header");
    pos = static_cast<std::size_t>(end - bytes.data());
    return v;
  };
  if (bytes.size() < 2 || bytes.compare(0, 2, "P6") != 0) throw corrupt("not a binary PPM (P6)");
  pos = 2;
  Image8 img;
  img.width = number();
  img.height = number();
  if (number() != 255) throw corrupt("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw corrupt("malformed PPM header");
  ++pos;
  const std::size_t need = 3 * img.width * img.height;
  if (bytes.size() - pos != need)
    throw corrupt("pixel data: expected " + std::to_string(need) + " bytes, got " +
                  std::to_string(bytes.size() - pos));
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

}  // namespace voxelprior
