#include "fedtrace/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "fedtrace/errors.hpp"

namespace fedtrace {

namespace {

constexpr char kMagic[8] = {'F', 'T', 'C', 'K', '0', '0', '0', '1'};

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IoError("truncated checkpoint: " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& path) {
  uint32_t n = get_u32(in, path);
  if (n > (1u << 20)) throw ValidationError("implausible string length in checkpoint: " + path);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw IoError("truncated checkpoint: " + path);
  return s;
}

} // namespace

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::map<std::string, std::string>& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<uint32_t>(params.count()));
  for (size_t i = 0; i < params.count(); ++i) {
    put_string(out, params.names[i]);
    const Tensor& t = params[i];
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
    // Raw little-endian doubles; this code targets little-endian hosts only.
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  put_u32(out, static_cast<uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  Checkpoint ck;
  const uint32_t n_tensors = get_u32(in, path);
  if (n_tensors > 4096) throw ValidationError("implausible tensor count: " + path);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = get_string(in, path);
    const uint32_t ndim = get_u32(in, path);
    if (ndim > 8) throw ValidationError("implausible tensor rank: " + path);
    std::vector<int> shape;
    for (uint32_t d = 0; d < ndim; ++d) {
      const uint32_t dim = get_u32(in, path);
      if (dim == 0 || dim > (1u << 24)) throw ValidationError("bad tensor dim: " + path);
      shape.push_back(static_cast<int>(dim));
    }
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double))))
      throw IoError("truncated checkpoint: " + path);
    ck.params.add(std::move(name), std::move(t));
  }
  const uint32_t n_meta = get_u32(in, path);
  if (n_meta > 4096) throw ValidationError("implausible metadata count: " + path);
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string k = get_string(in, path);
    ck.metadata[k] = get_string(in, path);
  }
  return ck;
}

} // namespace fedtrace
