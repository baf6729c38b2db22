#pragma once

#include <cstdint>
#include <vector>

namespace ncdiff {

/// Byte-oriented range coder (carry-counting variant). Symbols are coded
/// from integer cumulative-frequency tables with a fixed power-of-two
/// total; encode/decode are exact inverses for any symbol sequence.
class RangeEncoder {
 public:
  /// Code one symbol occupying [cum_lo, cum_hi) of [0, total). total must
  /// be <= 2^16 so the range never underflows.
  void encode(uint32_t cum_lo, uint32_t cum_hi, uint32_t total);

  /// Flushes pending state; no further encodes allowed. Returns the stream.
  std::vector<uint8_t> finish();

 private:
  void shift_low();

  std::vector<uint8_t> out_;
  uint64_t low_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
  uint8_t cache_ = 0;
  uint64_t cache_size_ = 1;
};

class RangeDecoder {
 public:
  /// The data must outlive the decoder.
  explicit RangeDecoder(const uint8_t* data, size_t size);

  /// Cumulative frequency of the next symbol; caller maps it to a symbol
  /// via its table, then confirms with decode().
  uint32_t decode_freq(uint32_t total);
  void decode(uint32_t cum_lo, uint32_t cum_hi);

 private:
  uint8_t next_byte();

  const uint8_t* data_;
  size_t size_, pos_ = 0;
  uint32_t code_ = 0;
  uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace ncdiff
