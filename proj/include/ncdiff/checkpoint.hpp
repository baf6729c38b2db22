#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ncdiff/nn.hpp"
#include "ncdiff/tensor.hpp"

namespace ncdiff {

/// Training state container. On disk:
///
///   offset  size  field
///   0       4     magic "NCCK"
///   4       1     version (currently 1)
///   5       4     header_len (u32, little-endian)
///   9       ...   header JSON: {"kind", "meta", "tensors": [{"name","shape"}]}
///   ...     ...   tensor payloads, doubles little-endian, header order
///
/// `meta` carries whatever the producer needs to rebuild the run: the
/// effective config text, model geometry, schedule descriptor, RNG states,
/// and step counters. Parameter tensors are named "param.<name>", optimizer
/// slots "adam.<name>", so one file resumes training bit-exactly.
struct Checkpoint {
  static constexpr char kMagic[4] = {'N', 'C', 'C', 'K'};
  static constexpr uint8_t kVersion = 1;

  std::string kind;  // "codec" | "diffusion"
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
};

void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

/// Packs params as "param.<name>" entries.
void add_params(Checkpoint& c, const ParamList& params);
/// Restores every Param from its "param." entry; a missing name, a shape
/// mismatch, or leftover entries (a different architecture) is an error.
void load_params(const ParamList& params, const Checkpoint& c);

/// Optimizer slots as "adam.<state>" entries plus meta["adam_steps"].
void add_adam(Checkpoint& c, const Adam& adam);
void load_adam(Adam& adam, const Checkpoint& c);

}  // namespace ncdiff
