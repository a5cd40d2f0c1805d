#include "degflow/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace degflow {

namespace {

constexpr unsigned char kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_be32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

uint32_t be32(const unsigned char* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& data) {
  put_be32(out, static_cast<uint32_t>(data.size()));
  const size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size()));
  put_be32(out, static_cast<uint32_t>(crc));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

ImageF load_image(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileMissingError("image: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    throw CorruptImageError("image: not a PNG: " + path.string());

  uint32_t width = 0, height = 0;
  int bit_depth = -1, color_type = -1;
  std::vector<unsigned char> idat;
  bool seen_ihdr = false, seen_iend = false;

  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = be32(&bytes[pos]);
    if (pos + 12 + len > bytes.size())
      throw CorruptImageError("image: truncated chunk in " + path.string());
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const unsigned char* data = &bytes[pos + 8];
    const uint32_t stored_crc = be32(&bytes[pos + 8 + len]);
    const uLong crc = crc32(0L, &bytes[pos + 4], 4 + len);
    if (static_cast<uint32_t>(crc) != stored_crc)
      throw CorruptImageError("image: chunk CRC mismatch in " + path.string());

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw CorruptImageError("image: bad IHDR in " + path.string());
      width = be32(data);
      height = be32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      const int interlace = data[12];
      if (bit_depth != 8)
        throw UnsupportedImageError("image: unsupported bit depth " + std::to_string(bit_depth) +
                                    " in " + path.string());
      if (color_type != 0 && color_type != 2)
        throw UnsupportedImageError("image: unsupported color type " +
                                    std::to_string(color_type) + " in " + path.string());
      if (interlace != 0)
        throw UnsupportedImageError("image: interlaced PNG not supported: " + path.string());
      seen_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_iend = true;
      break;
    }
    pos += 12 + len;
  }
  if (!seen_ihdr || !seen_iend || idat.empty() || width == 0 || height == 0)
    throw CorruptImageError("image: missing PNG chunks in " + path.string());

  const int channels = color_type == 2 ? 3 : 1;
  const size_t row_bytes = static_cast<size_t>(width) * channels;
  const size_t raw_size = (row_bytes + 1) * height;
  std::vector<unsigned char> raw(raw_size);
  uLongf out_len = static_cast<uLongf>(raw_size);
  const int zrc = uncompress(raw.data(), &out_len, idat.data(), static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || out_len != raw_size)
    throw CorruptImageError("image: corrupt compressed stream in " + path.string());

  // Undo per-row filters (types 0..4).
  std::vector<unsigned char> pix(row_bytes * height);
  const int bpp = channels;
  for (uint32_t y = 0; y < height; ++y) {
    const unsigned char filter = raw[y * (row_bytes + 1)];
    const unsigned char* src = &raw[y * (row_bytes + 1) + 1];
    unsigned char* dst = &pix[y * row_bytes];
    const unsigned char* prev = y > 0 ? &pix[(y - 1) * row_bytes] : nullptr;
    for (size_t x = 0; x < row_bytes; ++x) {
      const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
      const int b = prev ? prev[x] : 0;
      const int c = (prev && x >= static_cast<size_t>(bpp)) ? prev[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default:
          throw CorruptImageError("image: unknown filter type in " + path.string());
      }
      dst[x] = static_cast<unsigned char>(v & 0xff);
    }
  }

  ImageF img(static_cast<int>(height), static_cast<int>(width), channels);
  for (size_t i = 0; i < pix.size(); ++i) img.data[i] = static_cast<float>(pix[i]) / 255.0f;
  return img;
}

void save_image(const ImageF& img, const std::filesystem::path& path) {
  const size_t row_bytes = static_cast<size_t>(img.width) * img.channels;
  std::vector<unsigned char> raw((row_bytes + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw[y * (row_bytes + 1)] = 0;  // filter: none
    unsigned char* dst = &raw[y * (row_bytes + 1) + 1];
    const float* src = img.data.data() + static_cast<size_t>(y) * row_bytes;
    for (size_t x = 0; x < row_bytes; ++x) {
      const long b = std::lround(static_cast<double>(src[x]) * 255.0);
      dst[x] = static_cast<unsigned char>(b < 0 ? 0 : (b > 255 ? 255 : b));
    }
  }

  uLongf comp_cap = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_cap);
  if (compress2(comp.data(), &comp_cap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw DataError("image: compression failed for " + path.string());
  comp.resize(comp_cap);

  std::vector<unsigned char> out(kSignature, kSignature + 8);
  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(img.width));
  put_be32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);                                   // bit depth
  ihdr.push_back(img.channels == 3 ? 2 : 0);           // color type
  ihdr.push_back(0);                                   // compression
  ihdr.push_back(0);                                   // filter method
  ihdr.push_back(0);                                   // no interlace
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", comp);
  append_chunk(out, "IEND", {});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("image: cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("image: write failed for " + path.string());
}

}  // namespace degflow
