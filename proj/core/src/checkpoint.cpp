#include "cmil/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cmil {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint: truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedParam>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kCheckpointMagic, 8);
  put_u32(os, kCheckpointVersion);
  for (const NamedParam& p : params) {
    const Tensor& t = *p.tensor;
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

std::map<std::string, Tensor> load_checkpoint_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                             " in '" + path + "'");
  std::map<std::string, Tensor> out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("checkpoint: truncated while reading block name");
    const std::uint32_t rank = get_u32(is, "rank of '" + name + "'");
    std::vector<int> shape;
    long long n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = get_u32(is, "dims of '" + name + "'");
      shape.push_back(static_cast<int>(d));
      n *= d;
    }
    std::vector<double> data(static_cast<std::size_t>(n));
    if (!is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double))))
      throw std::runtime_error("checkpoint: truncated payload in block '" + name + "'");
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second)
      throw std::runtime_error("checkpoint: duplicate block '" + name + "'");
  }
  return out;
}

void load_checkpoint(const std::string& path, const std::vector<NamedParam>& params) {
  auto blocks = load_checkpoint_raw(path);
  for (const NamedParam& p : params) {
    auto it = blocks.find(p.name);
    if (it == blocks.end())
      throw std::runtime_error("checkpoint: missing parameter '" + p.name + "' in '" + path + "'");
    if (!it->second.same_shape(*p.tensor))
      throw std::runtime_error("checkpoint: shape mismatch for '" + p.name + "': file has " +
                               shape_str(it->second) + ", expected " + shape_str(*p.tensor));
  }
  for (const NamedParam& p : params) *p.tensor = std::move(blocks.at(p.name));
}

}  // namespace cmil
