#include "ncdiff/config.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "ncdiff/rng.hpp"

namespace ncdiff {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int64_t parse_i64(const std::string& key, const std::string& v) {
  int64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not an integer");
  return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not an unsigned integer");
  return out;
}

double parse_f64(const std::string& key, const std::string& v) {
  if (v.empty()) throw std::invalid_argument("config key '" + key + "': empty value");
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size())
    throw std::invalid_argument("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

std::vector<double> parse_f64_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_f64(key, trim(item)));
  if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
  return out;
}

std::string fmt_f64(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string fmt_f64_list(const std::vector<double>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += fmt_f64(xs[i]);
  }
  return out;
}

/// One row per key: canonical name, setter, getter. A single table keeps
/// parsing, serialization, and the unknown-key check in lockstep.
struct KeyEntry {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"diffusion.T", [](RunConfig& c, const std::string& v) { c.diffusion_T = parse_i64("diffusion.T", v); },
       [](const RunConfig& c) { return std::to_string(c.diffusion_T); }},
      {"diffusion.schedule", [](RunConfig& c, const std::string& v) { c.schedule = schedule_kind_from_string(v); },
       [](const RunConfig& c) { return to_string(c.schedule); }},
      {"sampler.steps", [](RunConfig& c, const std::string& v) { c.sampler_steps = parse_i64("sampler.steps", v); },
       [](const RunConfig& c) { return std::to_string(c.sampler_steps); }},
      {"loss.omega", [](RunConfig& c, const std::string& v) { c.loss.omega = parse_f64("loss.omega", v); },
       [](const RunConfig& c) { return fmt_f64(c.loss.omega); }},
      {"loss.beta", [](RunConfig& c, const std::string& v) { c.loss.beta = parse_f64("loss.beta", v); },
       [](const RunConfig& c) { return fmt_f64(c.loss.beta); }},
      {"loss.wavelet_levels",
       [](RunConfig& c, const std::string& v) { c.loss.wavelet_levels = parse_i64("loss.wavelet_levels", v); },
       [](const RunConfig& c) { return std::to_string(c.loss.wavelet_levels); }},
      {"loss.perceptual", [](RunConfig& c, const std::string& v) { c.loss_perceptual = v; },
       [](const RunConfig& c) { return c.loss_perceptual; }},
      {"train.lr", [](RunConfig& c, const std::string& v) { c.train_lr = parse_f64("train.lr", v); },
       [](const RunConfig& c) { return fmt_f64(c.train_lr); }},
      {"train.batch", [](RunConfig& c, const std::string& v) { c.train_batch = parse_i64("train.batch", v); },
       [](const RunConfig& c) { return std::to_string(c.train_batch); }},
      {"train.steps", [](RunConfig& c, const std::string& v) { c.train_steps = parse_i64("train.steps", v); },
       [](const RunConfig& c) { return std::to_string(c.train_steps); }},
      {"train.log_every",
       [](RunConfig& c, const std::string& v) { c.train_log_every = parse_i64("train.log_every", v); },
       [](const RunConfig& c) { return std::to_string(c.train_log_every); }},
      {"train.checkpoint_every",
       [](RunConfig& c, const std::string& v) { c.train_checkpoint_every = parse_i64("train.checkpoint_every", v); },
       [](const RunConfig& c) { return std::to_string(c.train_checkpoint_every); }},
      {"codec.in_channels",
       [](RunConfig& c, const std::string& v) { c.codec.in_channels = parse_i64("codec.in_channels", v); },
       [](const RunConfig& c) { return std::to_string(c.codec.in_channels); }},
      {"codec.hidden", [](RunConfig& c, const std::string& v) { c.codec.hidden = parse_i64("codec.hidden", v); },
       [](const RunConfig& c) { return std::to_string(c.codec.hidden); }},
      {"codec.latent_channels",
       [](RunConfig& c, const std::string& v) { c.codec.latent_channels = parse_i64("codec.latent_channels", v); },
       [](const RunConfig& c) { return std::to_string(c.codec.latent_channels); }},
      {"codec.lambda_rd",
       [](RunConfig& c, const std::string& v) { c.codec_lambda_rd = parse_f64("codec.lambda_rd", v); },
       [](const RunConfig& c) { return fmt_f64(c.codec_lambda_rd); }},
      {"codec.lr", [](RunConfig& c, const std::string& v) { c.codec_lr = parse_f64("codec.lr", v); },
       [](const RunConfig& c) { return fmt_f64(c.codec_lr); }},
      {"codec.steps", [](RunConfig& c, const std::string& v) { c.codec_steps = parse_i64("codec.steps", v); },
       [](const RunConfig& c) { return std::to_string(c.codec_steps); }},
      {"unet.base_channels",
       [](RunConfig& c, const std::string& v) { c.unet_base_channels = parse_i64("unet.base_channels", v); },
       [](const RunConfig& c) { return std::to_string(c.unet_base_channels); }},
      {"unet.time_embed_dim",
       [](RunConfig& c, const std::string& v) { c.unet_time_embed_dim = parse_i64("unet.time_embed_dim", v); },
       [](const RunConfig& c) { return std::to_string(c.unet_time_embed_dim); }},
      {"unet.attention_stage",
       [](RunConfig& c, const std::string& v) { c.unet_attention_stage = parse_i64("unet.attention_stage", v); },
       [](const RunConfig& c) { return std::to_string(c.unet_attention_stage); }},
      {"aff.gamma_init",
       [](RunConfig& c, const std::string& v) { c.aff.gamma_init = parse_f64("aff.gamma_init", v); },
       [](const RunConfig& c) { return fmt_f64(c.aff.gamma_init); }},
      {"aff.r_th", [](RunConfig& c, const std::string& v) { c.aff.r_th = parse_f64_list("aff.r_th", v); },
       [](const RunConfig& c) { return fmt_f64_list(c.aff.r_th); }},
      {"tile.size", [](RunConfig& c, const std::string& v) { c.tile_size = parse_i64("tile.size", v); },
       [](const RunConfig& c) { return std::to_string(c.tile_size); }},
      {"tile.overlap", [](RunConfig& c, const std::string& v) { c.tile_overlap = parse_i64("tile.overlap", v); },
       [](const RunConfig& c) { return std::to_string(c.tile_overlap); }},
      {"guidance.lambda",
       [](RunConfig& c, const std::string& v) { c.guidance_lambda = parse_f64("guidance.lambda", v); },
       [](const RunConfig& c) { return fmt_f64(c.guidance_lambda); }},
      {"guidance.embedder", [](RunConfig& c, const std::string& v) { c.guidance_embedder = v; },
       [](const RunConfig& c) { return c.guidance_embedder; }},
      {"data.crop", [](RunConfig& c, const std::string& v) { c.data_crop = parse_i64("data.crop", v); },
       [](const RunConfig& c) { return std::to_string(c.data_crop); }},
      {"data.count", [](RunConfig& c, const std::string& v) { c.data_count = parse_i64("data.count", v); },
       [](const RunConfig& c) { return std::to_string(c.data_count); }},
      {"data.split", [](RunConfig& c, const std::string& v) { c.data_split = v; },
       [](const RunConfig& c) { return c.data_split; }},
  };
  return table;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void apply_key_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const KeyEntry& e : key_table()) {
    if (key == e.name) {
      e.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line +
                                  "'");
    apply_key_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig parse_config_text(const std::string& text) { return parse_config_text(text, RunConfig{}); }

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const KeyEntry& e : key_table()) {
    out += e.name;
    out += " = ";
    out += e.get(cfg);
    out += "\n";
  }
  return out;
}

void validate_config(const RunConfig& cfg) {
  require(cfg.diffusion_T >= 1, "diffusion.T must be >= 1");
  require(cfg.sampler_steps >= 1, "sampler.steps must be >= 1");
  require(cfg.loss.omega >= 0.0, "loss.omega must be >= 0");
  require(cfg.loss.beta >= 0.0, "loss.beta must be >= 0");
  require(cfg.loss.wavelet_levels >= 1, "loss.wavelet_levels must be >= 1");
  require(cfg.train_lr > 0.0, "train.lr must be > 0");
  require(cfg.train_batch == 1, "train.batch: only batch size 1 is implemented");
  require(cfg.train_steps >= 1, "train.steps must be >= 1");
  require(cfg.train_log_every >= 1, "train.log_every must be >= 1");
  require(cfg.train_checkpoint_every >= 1, "train.checkpoint_every must be >= 1");
  require(cfg.codec.in_channels == 1 || cfg.codec.in_channels == 3, "codec.in_channels must be 1 or 3");
  require(cfg.codec.hidden >= 1 && cfg.codec.latent_channels >= 1, "codec sizes must be >= 1");
  require(cfg.codec_lambda_rd > 0.0, "codec.lambda_rd must be > 0");
  require(cfg.codec_lr > 0.0, "codec.lr must be > 0");
  require(cfg.codec_steps >= 1, "codec.steps must be >= 1");
  require(cfg.unet_base_channels >= 1, "unet.base_channels must be >= 1");
  require(cfg.unet_time_embed_dim >= 2 && cfg.unet_time_embed_dim % 2 == 0,
          "unet.time_embed_dim must be a positive even number");
  require(cfg.unet_attention_stage >= -1 && cfg.unet_attention_stage < 4,
          "unet.attention_stage must be in [-1, 3]");
  require(cfg.aff.r_th.size() == 4, "aff.r_th must list four thresholds");
  require(cfg.tile_size >= 1, "tile.size must be >= 1");
  require(cfg.tile_overlap >= 0 && cfg.tile_overlap < cfg.tile_size, "tile.overlap must be in [0, tile.size)");
  require(cfg.guidance_lambda >= 0.0, "guidance.lambda must be >= 0");
  require(cfg.data_crop >= CodecConfig::kStride && cfg.data_crop % CodecConfig::kStride == 0,
          "data.crop must be a positive multiple of " + std::to_string(CodecConfig::kStride));
  require(cfg.data_count >= 1, "data.count must be >= 1");
}

void write_config_sidecar(const std::string& artifact_path, const RunConfig& cfg) {
  const std::string path = artifact_path + ".config";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config sidecar: " + path);
  out << serialize_config(cfg);
  if (!out) throw std::runtime_error("short write: " + path);
}

std::string cache_dir() {
  const char* v = std::getenv("NCD_CACHE_DIR");
  return v ? std::string(v) : std::string();
}

std::string resolve_input_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) return path;
  const std::string cache = cache_dir();
  if (!cache.empty()) {
    const std::string fallback = (fs::path(cache) / fs::path(path).filename()).string();
    if (fs::exists(fallback)) return fallback;
    throw std::runtime_error("file not found: " + path + " (also tried " + fallback + ")");
  }
  throw std::runtime_error("file not found: " + path);
}

uint64_t sub_seed(uint64_t master, uint64_t tag) {
  uint64_t x = master ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
  return splitmix64(x);
}

}  // namespace ncdiff
