#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ncdiff {

/// Container format for one compressed image. All header integers are
/// big-endian; `payload` is the range-coded latent.
///
///   offset  size  field
///   0       4     magic "NCDF"
///   4       1     version (currently 1)
///   5       4     orig_h (u32)
///   9       4     orig_w (u32)
///   13      2     latent_c (u16)
///   15      2     latent_h (u16)
///   17      2     latent_w (u16)
///   19      4     payload_len (u32)
///   23      ...   payload
struct Bitstream {
  static constexpr char kMagic[4] = {'N', 'C', 'D', 'F'};
  static constexpr uint8_t kVersion = 1;
  static constexpr size_t kHeaderSize = 23;

  uint32_t orig_h = 0;
  uint32_t orig_w = 0;
  uint16_t latent_c = 0;
  uint16_t latent_h = 0;
  uint16_t latent_w = 0;
  std::vector<uint8_t> payload;

  std::vector<uint8_t> serialize() const;
  static Bitstream parse(const std::vector<uint8_t>& bytes);

  void write_file(const std::string& path) const;
  static Bitstream read_file(const std::string& path);
};

/// Bits-per-pixel arithmetic: 8 * byte_count / (h * w).
double bits_per_pixel(size_t byte_count, int64_t h, int64_t w);

}  // namespace ncdiff
