#include "myolo/fmap_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace myolo::fmap {
namespace {

constexpr char kMagic[4] = {'F', 'M', 'A', 'P'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& t) {
  if (t.rank() > std::numeric_limits<std::uint8_t>::max()) {
    throw FormatError("FMAP1: rank exceeds 255");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError("FMAP1: dimension exceeds u32");
    }
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * t.size());
  for (double v : t.data()) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("FMAP1: bad magic");
  }
  if (bytes[4] != kVersion) {
    throw FormatError("FMAP1: unsupported version " + std::to_string(bytes[4]));
  }
  const std::size_t ndim = bytes[5];
  std::size_t offset = 6;
  if (bytes.size() < offset + 4 * ndim) throw FormatError("FMAP1: truncated header");
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i, offset += 4) {
    shape[i] = get_u32(bytes.data() + offset);
  }
  const std::size_t count = shape_size(shape);
  if (bytes.size() != offset + 4 * count) {
    throw FormatError("FMAP1: payload holds " +
                      std::to_string(bytes.size() - offset) + " bytes, dims " +
                      to_string(shape) + " need " + std::to_string(4 * count));
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i, offset += 4) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + offset));
  }
  return Tensor(std::move(shape), std::move(data));
}

void write(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw FormatError("failed writing " + path.string());
}

Tensor read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor quantize(const Tensor& t) {
  Tensor q = t;
  for (double& v : q.data()) v = static_cast<float>(v);
  return q;
}

std::vector<std::pair<std::string, std::filesystem::path>> read_manifest(
    const std::filesystem::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw FormatError("cannot open manifest " + manifest.string());
  std::vector<std::pair<std::string, std::filesystem::path>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name, path, extra;
    if (!(ls >> name)) continue;
    if (!(ls >> path) || (ls >> extra)) {
      throw FormatError(manifest.string() + ":" + std::to_string(lineno) +
                        ": expected `name path`");
    }
    std::filesystem::path p(path);
    if (p.is_relative()) p = manifest.parent_path() / p;
    entries.emplace_back(std::move(name), std::move(p));
  }
  return entries;
}

TensorMap load_manifest(const std::filesystem::path& manifest) {
  TensorMap out;
  for (const auto& [name, path] : read_manifest(manifest)) {
    if (!out.emplace(name, read(path)).second) {
      throw FormatError(manifest.string() + ": duplicate entry " + name);
    }
  }
  return out;
}

std::filesystem::path save_manifest(const std::filesystem::path& dir,
                                    const TensorMap& tensors) {
  std::filesystem::create_directories(dir);
  const auto manifest = dir / "manifest.txt";
  std::ofstream os(manifest, std::ios::trunc);
  if (!os) throw FormatError("cannot write " + manifest.string());
  for (const auto& [name, tensor] : tensors) {
    const std::string file = name + ".fmap";
    write(dir / file, tensor);
    os << name << ' ' << file << '\n';
  }
  return manifest;
}

}  // namespace myolo::fmap
