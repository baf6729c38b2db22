#include "ncdiff/range_coder.hpp"

#include <stdexcept>

namespace ncdiff {

namespace {
constexpr uint32_t kTop = 1u << 24;
}

void RangeEncoder::shift_low() {
  // Emit the next byte once it can no longer be changed by a carry: either
  // low's top byte is < 0xFF, or a carry already rippled into bit 32.
  if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    uint8_t carry = static_cast<uint8_t>(low_ >> 32);
    uint8_t b = cache_;
    do {
      out_.push_back(static_cast<uint8_t>(b + carry));
      b = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode(uint32_t cum_lo, uint32_t cum_hi, uint32_t total) {
  range_ /= total;
  low_ += static_cast<uint64_t>(cum_lo) * range_;
  range_ *= cum_hi - cum_lo;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  // The first shift_low always flushes the initial dummy cache byte.
  out_.erase(out_.begin());
  return std::move(out_);
}

RangeDecoder::RangeDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  // Reading past the payload is legal for the final few flush bytes the
  // encoder may not have emitted; they decode as zero.
  return pos_ < size_ ? data_[pos_++] : 0;
}

uint32_t RangeDecoder::decode_freq(uint32_t total) {
  range_ /= total;
  uint32_t f = code_ / range_;
  return f >= total ? total - 1 : f;
}

void RangeDecoder::decode(uint32_t cum_lo, uint32_t cum_hi) {
  code_ -= cum_lo * range_;
  range_ *= cum_hi - cum_lo;
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

}  // namespace ncdiff
