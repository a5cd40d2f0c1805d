#include "degflow/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "degflow/errors.hpp"

namespace degflow {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("checkpoint: truncated while reading " + what);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

// Floats are stored as little-endian u32 bit patterns.
void put_f32(std::ostream& os, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

float get_f32(std::istream& is, const std::string& what) {
  const uint32_t v = get_u32(is, what);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot open for writing: " + path.string());
  os.write("DGFW", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<uint32_t>(e.tensor.shape.size()));
    for (int64_t d : e.tensor.shape) put_u32(os, static_cast<uint32_t>(d));
    for (float f : e.tensor.data) put_f32(os, f);
  }
  if (!os) throw DataError("checkpoint: write failed: " + path.string());
}

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DGFW", 4) != 0)
    throw DataError("checkpoint: bad magic in " + path.string());
  const uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t count = get_u32(is, "tensor count");
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw DataError("checkpoint: truncated tensor name");
    const uint32_t rank = get_u32(is, "rank");
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = get_u32(is, "dim");
    Tensor<float> tensor(shape);
    for (auto& f : tensor.data) f = get_f32(is, "tensor data");
    entries.push_back({std::move(name), std::move(tensor)});
  }
  return entries;
}

const Tensor<float>& checkpoint_get(const std::vector<CheckpointEntry>& entries,
                                    const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return e.tensor;
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

bool checkpoint_has(const std::vector<CheckpointEntry>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return true;
  return false;
}

}  // namespace degflow
