#pragma once

#include <cstdint>
#include <string>

#include "ncdiff/codec.hpp"
#include "ncdiff/losses.hpp"
#include "ncdiff/predictor.hpp"
#include "ncdiff/schedule.hpp"

namespace ncdiff {

/// Every tunable of the pipeline in one place, with the trained defaults.
/// The on-disk format is one `key = value` per line, `#` starts a comment:
///
///   seed               = 0
///   diffusion.T        = 1000        diffusion.schedule  = linear|uniform
///   sampler.steps      = 1
///   loss.omega         = 0.5         loss.beta           = 0.3
///   loss.wavelet_levels= 4           loss.perceptual     = stub|external:<path>
///   train.lr           = 8e-05       train.batch         = 1
///   train.steps        = 5000        train.log_every     = 50
///   train.checkpoint_every = 1000
///   codec.in_channels  = 3           codec.hidden        = 128
///   codec.latent_channels = 192      codec.lambda_rd     = 500
///   codec.lr           = 0.0001      codec.steps         = 2000
///   unet.base_channels = 16          unet.time_embed_dim = 64
///   unet.attention_stage = 1         aff.gamma_init      = 0
///   aff.r_th           = 0.5,0.4,0.3,0.25
///   tile.size          = 256         tile.overlap        = 64
///   guidance.lambda    = 0           guidance.embedder   = stub|external:<path>
///   data.crop          = 64          data.count          = 128
///   data.split         = train
///
/// Unknown keys are rejected so typos cannot silently fall back to defaults.
struct RunConfig {
  uint64_t seed = 0;
  int64_t diffusion_T = 1000;
  ScheduleKind schedule = ScheduleKind::kLinear;
  int64_t sampler_steps = 1;
  LossConfig loss;
  std::string loss_perceptual = "stub";
  double train_lr = 8e-5;
  int64_t train_batch = 1;
  int64_t train_steps = 5000;
  int64_t train_log_every = 50;
  int64_t train_checkpoint_every = 1000;
  CodecConfig codec;
  double codec_lambda_rd = 500.0;
  double codec_lr = 1e-4;
  int64_t codec_steps = 2000;
  int64_t unet_base_channels = 16;
  int64_t unet_time_embed_dim = 64;
  int64_t unet_attention_stage = 1;
  AFFConfig aff;
  int64_t tile_size = 256;
  int64_t tile_overlap = 64;
  double guidance_lambda = 0.0;
  std::string guidance_embedder = "stub";
  int64_t data_crop = 64;
  int64_t data_count = 128;
  std::string data_split = "train";
};

/// Assigns one key. Throws std::invalid_argument for an unknown key or a
/// value that does not parse as the key's type.
void apply_key_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Applies `key = value` lines on top of the defaults (or on `base`).
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_text(const std::string& text, RunConfig base);
RunConfig load_config_file(const std::string& path);

/// Canonical form: every key, declaration order, shortest round-trip
/// number formatting. parse(serialize(cfg)) reproduces cfg exactly.
std::string serialize_config(const RunConfig& cfg);

/// Range checks that individual assignments cannot see (tile.size >
/// tile.overlap and friends). Throws std::invalid_argument.
void validate_config(const RunConfig& cfg);

/// Writes the effective config as `<artifact_path>.config` so every output
/// artifact carries the settings that produced it.
void write_config_sidecar(const std::string& artifact_path, const RunConfig& cfg);

/// $NCD_CACHE_DIR, or empty when unset. Checkpoint lookups fall back to this
/// directory and periodic training checkpoints are written into it.
std::string cache_dir();

/// `path` if it exists, else `$NCD_CACHE_DIR/path`; throws std::runtime_error
/// naming both candidates when neither exists.
std::string resolve_input_path(const std::string& path);

/// Deterministic per-purpose seed derivation, so one master seed governs
/// independent random streams (weights, data order, quantizer noise, ...).
uint64_t sub_seed(uint64_t master, uint64_t tag);

}  // namespace ncdiff
