#include "ncdiff/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace ncdiff {
namespace {

using nlohmann::json;

void write_f64_le(std::ostream& out, const double* p, int64_t n) {
  std::vector<char> buf(static_cast<size_t>(n) * 8);
  for (int64_t i = 0; i < n; ++i) {
    uint64_t bits = 0;
    std::memcpy(&bits, &p[i], 8);
    for (int k = 0; k < 8; ++k) buf[static_cast<size_t>(i) * 8 + k] = static_cast<char>(bits >> (8 * k));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_f64_le(std::istream& in, double* p, int64_t n, const std::string& path) {
  std::vector<char> buf(static_cast<size_t>(n) * 8);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw std::runtime_error("truncated checkpoint: " + path);
  for (int64_t i = 0; i < n; ++i) {
    uint64_t bits = 0;
    for (int k = 0; k < 8; ++k)
      bits |= static_cast<uint64_t>(static_cast<uint8_t>(buf[static_cast<size_t>(i) * 8 + k])) << (8 * k);
    std::memcpy(&p[i], &bits, 8);
  }
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& c) {
  json header;
  header["kind"] = c.kind;
  header["meta"] = c.meta;
  header["tensors"] = json::array();
  for (const auto& [name, t] : c.tensors) header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  const std::string htext = header.dump();
  if (htext.size() > 0xffffffffULL) throw std::runtime_error("checkpoint header too large");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(Checkpoint::kMagic, 4);
  out.put(static_cast<char>(Checkpoint::kVersion));
  const uint32_t hlen = static_cast<uint32_t>(htext.size());
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>(hlen >> (8 * k)));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, t] : c.tensors) write_f64_le(out, t.data(), t.numel());
  if (!out) throw std::runtime_error("short write: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, Checkpoint::kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  const int version = in.get();
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);

  char lenbuf[4] = {};
  in.read(lenbuf, 4);
  if (in.gcount() != 4) throw std::runtime_error("truncated checkpoint: " + path);
  uint32_t hlen = 0;
  for (int k = 0; k < 4; ++k) hlen |= static_cast<uint32_t>(static_cast<uint8_t>(lenbuf[k])) << (8 * k);

  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (in.gcount() != static_cast<std::streamsize>(hlen)) throw std::runtime_error("truncated checkpoint: " + path);

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint header: " + path + " (" + e.what() + ")");
  }

  Checkpoint c;
  c.kind = header.at("kind").get<std::string>();
  c.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
    Tensor t(shape);
    read_f64_le(in, t.data(), t.numel(), path);
    c.tensors.emplace_back(name, std::move(t));
  }
  // A trailing-garbage check would reject concatenated files; skip it so the
  // format stays append-friendly for external tooling.
  return c;
}

void add_params(Checkpoint& c, const ParamList& params) {
  for (const Param* p : params) c.add("param." + p->name, p->value);
}

void load_params(const ParamList& params, const Checkpoint& c) {
  std::unordered_map<std::string, const Tensor*> index;
  size_t stored = 0;
  for (const auto& [name, t] : c.tensors)
    if (name.rfind("param.", 0) == 0) {
      index[name] = &t;
      ++stored;
    }
  if (stored != params.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(stored) + " parameters, model expects " +
                             std::to_string(params.size()));
  for (Param* p : params) {
    const auto it = index.find("param." + p->name);
    if (it == index.end()) throw std::runtime_error("checkpoint is missing parameter '" + p->name + "'");
    if (it->second->shape() != p->value.shape())
      throw std::runtime_error("checkpoint parameter '" + p->name + "' has a different shape");
    p->value = *it->second;
  }
}

void add_adam(Checkpoint& c, const Adam& adam) {
  for (const auto& [name, t] : adam.state_tensors()) c.add("adam." + name, *t);
  c.meta["adam_steps"] = adam.steps_done();
}

void load_adam(Adam& adam, const Checkpoint& c) {
  for (const auto& [name, t] : c.tensors)
    if (name.rfind("adam.", 0) == 0) adam.load_state(name.substr(5), t);
  adam.set_steps_done(c.meta.at("adam_steps").get<int64_t>());
}

}  // namespace ncdiff
