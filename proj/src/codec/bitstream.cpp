#include "ncdiff/bitstream.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ncdiff {

namespace {

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void put_u16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

uint32_t get_u32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>((p[0] << 8) | p[1]); }

}  // namespace

std::vector<uint8_t> Bitstream::serialize() const {
  std::vector<uint8_t> out;
  out.reserve(kHeaderSize + payload.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  put_u32(out, orig_h);
  put_u32(out, orig_w);
  put_u16(out, latent_c);
  put_u16(out, latent_h);
  put_u16(out, latent_w);
  put_u32(out, static_cast<uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Bitstream Bitstream::parse(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < kHeaderSize) throw std::runtime_error("bitstream truncated: no room for header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw std::runtime_error("bitstream format error: bad magic");
  if (bytes[4] != kVersion)
    throw std::runtime_error("bitstream format error: unsupported version " + std::to_string(bytes[4]));
  Bitstream b;
  b.orig_h = get_u32(bytes.data() + 5);
  b.orig_w = get_u32(bytes.data() + 9);
  b.latent_c = get_u16(bytes.data() + 13);
  b.latent_h = get_u16(bytes.data() + 15);
  b.latent_w = get_u16(bytes.data() + 17);
  const uint32_t plen = get_u32(bytes.data() + 19);
  if (bytes.size() != kHeaderSize + plen)
    throw std::runtime_error("bitstream truncated: payload_len does not match file size");
  b.payload.assign(bytes.begin() + kHeaderSize, bytes.end());
  return b;
}

void Bitstream::write_file(const std::string& path) const {
  const std::vector<uint8_t> bytes = serialize();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path);
}

Bitstream Bitstream::read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse(bytes);
}

double bits_per_pixel(size_t byte_count, int64_t h, int64_t w) {
  return 8.0 * static_cast<double>(byte_count) / (static_cast<double>(h) * static_cast<double>(w));
}

}  // namespace ncdiff
