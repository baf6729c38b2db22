#include "ncdiff/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncdiff/checkpoint.hpp"
#include "ncdiff/codec.hpp"
#include "ncdiff/config.hpp"
#include "ncdiff/dataset.hpp"
#include "ncdiff/engine.hpp"
#include "ncdiff/eval.hpp"
#include "ncdiff/guidance.hpp"
#include "ncdiff/image_io.hpp"
#include "ncdiff/perceptual.hpp"
#include "ncdiff/predictor.hpp"
#include "ncdiff/schedule.hpp"
#include "ncdiff/synthetic.hpp"
#include "ncdiff/tiling.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ncdiff {
namespace {

/// Fixed tags for per-purpose streams derived from the one master seed.
enum SeedTag : uint64_t {
  kSeedCodecInit = 1,
  kSeedUNetInit,
  kSeedManifest,
  kSeedCrops,
  kSeedData,
  kSeedNoise,
  kSeedTrainer,
  kSeedDemo,
  kSeedControl,
};

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "config file (key = value lines)");
  cmd->add_option("--set", c.sets, "override one config key, e.g. --set diffusion.T=100")
      ->type_name("KEY=VALUE");
  cmd->add_flag("--force", c.force, "overwrite existing outputs");
}

RunConfig build_cfg(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg = load_config_file(c.config_path);
  for (const std::string& kv : c.sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    apply_key_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void echo_config(const RunConfig& cfg) { std::cout << "# effective config\n" << serialize_config(cfg) << std::flush; }

void require_output_writable(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw std::runtime_error("output exists: " + path + " (pass --force to overwrite)");
}

std::unique_ptr<PerceptualMetric> metric_from_spec(const std::string& spec) {
  if (spec == "stub") return make_stub_metric();
  if (spec.rfind("external:", 0) == 0) return make_external_metric(resolve_input_path(spec.substr(9)));
  throw std::invalid_argument("perceptual spec must be 'stub' or 'external:<path>', got '" + spec + "'");
}

std::unique_ptr<PerceptualEmbedder> embedder_from_spec(const std::string& spec) {
  if (spec == "stub") return make_stub_embedder();
  if (spec.rfind("external:", 0) == 0) return make_external_embedder(resolve_input_path(spec.substr(9)));
  throw std::invalid_argument("embedder spec must be 'stub' or 'external:<path>', got '" + spec + "'");
}

json codec_geometry(const CodecConfig& c) {
  return {{"in_channels", c.in_channels},
          {"hidden", c.hidden},
          {"latent_channels", c.latent_channels},
          {"support", c.support},
          {"tail", c.tail}};
}

CodecConfig codec_cfg_from_meta(const json& meta) {
  const json& g = meta.at("codec");
  CodecConfig c;
  c.in_channels = g.at("in_channels").get<int64_t>();
  c.hidden = g.at("hidden").get<int64_t>();
  c.latent_channels = g.at("latent_channels").get<int64_t>();
  c.support = g.at("support").get<int64_t>();
  c.tail = g.at("tail").get<double>();
  return c;
}

json predictor_geometry(const PredictorConfig& p) {
  return {{"in_channels", p.in_channels},
          {"base_channels", p.base_channels},
          {"time_embed_dim", p.time_embed_dim},
          {"attention_stage", p.attention_stage},
          {"aff_gamma_init", p.aff.gamma_init},
          {"aff_r_th", p.aff.r_th}};
}

PredictorConfig predictor_cfg_from_meta(const json& meta) {
  const json& g = meta.at("unet");
  PredictorConfig p;
  p.in_channels = g.at("in_channels").get<int64_t>();
  p.base_channels = g.at("base_channels").get<int64_t>();
  p.time_embed_dim = g.at("time_embed_dim").get<int64_t>();
  p.attention_stage = g.at("attention_stage").get<int64_t>();
  p.aff.gamma_init = g.at("aff_gamma_init").get<double>();
  p.aff.r_th = g.at("aff_r_th").get<std::vector<double>>();
  return p;
}

json schedule_descriptor(ScheduleKind kind, int64_t T) { return {{"kind", to_string(kind)}, {"T", T}}; }

NoiseSchedule schedule_from_meta(const json& meta) {
  const json& s = meta.at("schedule");
  return NoiseSchedule::build(schedule_kind_from_string(s.at("kind").get<std::string>()), s.at("T").get<int64_t>());
}

Checkpoint load_kind(const std::string& path, const std::string& kind) {
  const std::string resolved = resolve_input_path(path);
  Checkpoint ck = read_checkpoint(resolved);
  if (ck.kind != kind)
    throw std::runtime_error(resolved + ": expected a " + kind + " checkpoint, found '" + ck.kind + "'");
  return ck;
}

std::unique_ptr<CodecModel> codec_from_checkpoint(const Checkpoint& ck) {
  auto model = std::make_unique<CodecModel>(codec_cfg_from_meta(ck.meta), 0);
  ParamList ps;
  model->params(ps);
  load_params(ps, ck);  // every freshly seeded weight is overwritten
  return model;
}

std::unique_ptr<UNetPredictor> predictor_from_checkpoint(const Checkpoint& ck) {
  auto net = std::make_unique<UNetPredictor>(predictor_cfg_from_meta(ck.meta), 0);
  const ParamList ps = net->params();
  load_params(ps, ck);
  return net;
}

/// Periodic checkpoints go to $NCD_CACHE_DIR when set, else next to the
/// final output, named <stem>.step<NNNNNN><ext>.
std::string periodic_checkpoint_path(const std::string& output, int64_t step) {
  const fs::path out(output);
  const std::string cache = cache_dir();
  fs::path dir = cache.empty() ? (out.has_parent_path() ? out.parent_path() : fs::path(".")) : fs::path(cache);
  fs::create_directories(dir);
  char tag[32];
  std::snprintf(tag, sizeof tag, ".step%06lld", static_cast<long long>(step));
  return (dir / (out.stem().string() + tag + out.extension().string())).string();
}

struct DemoDataOpts {
  Common common;
  std::string output;
  int64_t count = 8;
  int64_t height = 64;
  int64_t width = 64;
  int64_t channels = 3;
};

void cmd_demo_data(const DemoDataOpts& o) {
  const RunConfig cfg = build_cfg(o.common);
  validate_config(cfg);
  echo_config(cfg);
  if (o.count < 1) throw std::invalid_argument("--count must be >= 1");
  if (o.channels != 1 && o.channels != 3) throw std::invalid_argument("--channels must be 1 or 3");
  fs::create_directories(o.output);
  Rng rng(sub_seed(cfg.seed, kSeedDemo));
  for (int64_t i = 0; i < o.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%03lld.png", static_cast<long long>(i));
    const std::string path = (fs::path(o.output) / name).string();
    require_output_writable(path, o.common.force);
    write_png(path, synth_textured(o.height, o.width, o.channels, rng));
  }
  write_config_sidecar((fs::path(o.output) / "dataset").string(), cfg);
  std::cout << "wrote " << o.count << " images to " << o.output << "\n";
}

struct TrainCodecOpts {
  Common common;
  std::string data, output, resume;
};

void cmd_train_codec(const TrainCodecOpts& o) {
  const RunConfig cfg = build_cfg(o.common);
  validate_config(cfg);
  echo_config(cfg);
  require_output_writable(o.output, o.common.force);

  const DatasetManifest manifest =
      build_manifest(o.data, cfg.data_crop, cfg.data_split, sub_seed(cfg.seed, kSeedManifest));
  Rng crop_rng(sub_seed(cfg.seed, kSeedCrops));
  const std::vector<Tensor> crops = load_crop_set(manifest, cfg.codec.in_channels, cfg.data_count, crop_rng);

  CodecModel model(cfg.codec, sub_seed(cfg.seed, kSeedCodecInit));
  ParamList ps;
  model.params(ps);
  Adam adam(ps, cfg.codec_lr);
  Rng data_rng(sub_seed(cfg.seed, kSeedData));
  Rng noise_rng(sub_seed(cfg.seed, kSeedNoise));
  int64_t step = 0;

  if (!o.resume.empty()) {
    const Checkpoint ck = load_kind(o.resume, "codec");
    if (ck.meta.at("codec") != codec_geometry(cfg.codec))
      throw std::runtime_error("resume checkpoint conflicts with the configured codec geometry");
    load_params(ps, ck);
    load_adam(adam, ck);
    noise_rng.set_state(ck.meta.at("rng").get<std::string>());
    data_rng.set_state(ck.meta.at("data_rng").get<std::string>());
    step = ck.meta.at("steps_done").get<int64_t>();
  }

  const std::string log_path = o.output + ".loss.csv";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path);
  log << "step,loss,bpp,mse\n";

  const auto save = [&](const std::string& path) {
    Checkpoint ck;
    ck.kind = "codec";
    ck.meta["config"] = serialize_config(cfg);
    ck.meta["codec"] = codec_geometry(cfg.codec);
    ck.meta["steps_done"] = step;
    ck.meta["rng"] = noise_rng.state();
    ck.meta["data_rng"] = data_rng.state();
    add_params(ck, ps);
    add_adam(ck, adam);
    write_checkpoint(path, ck);
    write_config_sidecar(path, cfg);
  };

  while (step < cfg.codec_steps) {
    const Tensor& crop = crops[static_cast<size_t>(data_rng.uniform_int(0, static_cast<int64_t>(crops.size()) - 1))];
    zero_grads(ps);
    const auto st = model.train_step_backward(crop, cfg.codec_lambda_rd, noise_rng);
    ++step;
    if (!std::isfinite(st.loss)) throw std::runtime_error("non-finite loss at step " + std::to_string(step));
    adam.step();
    if (step % cfg.train_log_every == 0)
      log << step << "," << st.loss << "," << st.bpp << "," << st.mse << "\n";
    if (step % cfg.train_checkpoint_every == 0 && step < cfg.codec_steps)
      save(periodic_checkpoint_path(o.output, step));
  }
  log.flush();
  save(o.output);
  std::cout << "wrote " << o.output << " (" << step << " steps)\n";
}

struct TrainDiffusionOpts {
  Common common;
  std::string data, codec, output, resume;
};

void cmd_train_diffusion(const TrainDiffusionOpts& o) {
  const RunConfig cfg = build_cfg(o.common);
  validate_config(cfg);
  echo_config(cfg);
  require_output_writable(o.output, o.common.force);

  // The codec is a hard prerequisite: the forward process has no noise
  // source without its reconstruction residual.
  const Checkpoint codec_ck = load_kind(o.codec, "codec");
  auto codec = codec_from_checkpoint(codec_ck);
  const int64_t channels = codec->config().in_channels;

  const DatasetManifest manifest =
      build_manifest(o.data, cfg.data_crop, cfg.data_split, sub_seed(cfg.seed, kSeedManifest));
  Rng crop_rng(sub_seed(cfg.seed, kSeedCrops));
  const std::vector<Tensor> crops = load_crop_set(manifest, channels, cfg.data_count, crop_rng);

  PredictorConfig pcfg;
  pcfg.in_channels = channels;
  pcfg.base_channels = cfg.unet_base_channels;
  pcfg.time_embed_dim = cfg.unet_time_embed_dim;
  pcfg.attention_stage = cfg.unet_attention_stage;
  pcfg.aff = cfg.aff;
  UNetPredictor net(pcfg, sub_seed(cfg.seed, kSeedUNetInit));
  const ParamList ps = net.params();

  std::unique_ptr<PerceptualMetric> metric;
  if (cfg.loss.omega > 0.0) metric = metric_from_spec(cfg.loss_perceptual);
  const NoiseSchedule schedule = NoiseSchedule::build(cfg.schedule, cfg.diffusion_T);
  DiffusionTrainer trainer(net, *codec, schedule, cfg.loss, metric.get(), cfg.train_lr,
                           sub_seed(cfg.seed, kSeedTrainer));
  Rng data_rng(sub_seed(cfg.seed, kSeedData));
  int64_t step = 0;

  const json loss_meta = {{"omega", cfg.loss.omega},
                          {"beta", cfg.loss.beta},
                          {"wavelet_levels", cfg.loss.wavelet_levels},
                          {"perceptual", cfg.loss_perceptual}};

  if (!o.resume.empty()) {
    const Checkpoint ck = load_kind(o.resume, "diffusion");
    if (ck.meta.at("unet") != predictor_geometry(pcfg) ||
        ck.meta.at("schedule") != schedule_descriptor(cfg.schedule, cfg.diffusion_T) ||
        ck.meta.at("loss") != loss_meta)
      throw std::runtime_error("resume checkpoint conflicts with the configured model or loss");
    load_params(ps, ck);
    load_adam(trainer.optimizer(), ck);
    trainer.rng().set_state(ck.meta.at("rng").get<std::string>());
    data_rng.set_state(ck.meta.at("data_rng").get<std::string>());
    step = ck.meta.at("steps_done").get<int64_t>();
  }

  const std::string log_path = o.output + ".loss.csv";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + log_path);
  log << "step,total,eps_mse,perceptual,high_freq,t\n";

  const auto save = [&](const std::string& path) {
    Checkpoint ck;
    ck.kind = "diffusion";
    ck.meta["config"] = serialize_config(cfg);
    ck.meta["codec"] = codec_geometry(codec->config());
    ck.meta["codec_checkpoint"] = o.codec;
    ck.meta["unet"] = predictor_geometry(pcfg);
    ck.meta["schedule"] = schedule_descriptor(cfg.schedule, cfg.diffusion_T);
    ck.meta["loss"] = loss_meta;
    ck.meta["steps_done"] = step;
    ck.meta["rng"] = trainer.rng().state();
    ck.meta["data_rng"] = data_rng.state();
    add_params(ck, ps);
    add_adam(ck, trainer.optimizer());
    write_checkpoint(path, ck);
    write_config_sidecar(path, cfg);
  };

  while (step < cfg.train_steps) {
    const Tensor& crop = crops[static_cast<size_t>(data_rng.uniform_int(0, static_cast<int64_t>(crops.size()) - 1))];
    TrainStepRecord rec;
    try {
      rec = trainer.train_step(Image(crop, Range::kUnit));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("step " + std::to_string(step + 1) + ": " + e.what());
    }
    ++step;
    if (step % cfg.train_log_every == 0)
      log << step << "," << rec.losses.total << "," << rec.losses.eps_mse << "," << rec.losses.perceptual << ","
          << rec.losses.high_freq << "," << rec.t << "\n";
    if (step % cfg.train_checkpoint_every == 0 && step < cfg.train_steps)
      save(periodic_checkpoint_path(o.output, step));
  }
  log.flush();
  save(o.output);
  std::cout << "wrote " << o.output << " (" << step << " steps)\n";
}

struct CompressOpts {
  Common common;
  std::string input, codec, output;
};

void cmd_compress(const CompressOpts& o) {
  const RunConfig cfg = build_cfg(o.common);
  validate_config(cfg);
  echo_config(cfg);
  require_output_writable(o.output, o.common.force);
  const Checkpoint ck = load_kind(o.codec, "codec");
  auto model = codec_from_checkpoint(ck);
  const Image img = load_image_channels(o.input, model->config().in_channels);
  const Bitstream bs = model->compress(img);
  bs.write_file(o.output);
  write_config_sidecar(o.output, cfg);
  std::cout << "wrote " << o.output << "\n"
            << "bpp = " << bits_per_pixel(bs.serialize().size(), img.height(), img.width()) << "\n";
}

struct DecompressOpts {
  Common common;
  std::string input, codec, output;
};

void cmd_decompress(const DecompressOpts& o) {
  const RunConfig cfg = build_cfg(o.common);
  validate_config(cfg);
  echo_config(cfg);
  require_output_writable(o.output, o.common.force);
  const Checkpoint ck = load_kind(o.codec, "codec");
  auto model = codec_from_checkpoint(ck);
  const Bitstream bs = Bitstream::read_file(o.input);
  if (bs.latent_c != model->config().latent_channels)
    throw std::runtime_error(o.input + " was produced by a different codec geometry (latent channels " +
                             std::to_string(bs.latent_c) + " vs " + std::to_string(model->config().latent_channels) +
                             ")");
  write_png(o.output, model->decompress(bs));
  write_config_sidecar(o.output, cfg);
  std::cout << "wrote " << o.output << "\n";
}

struct EnhanceOpts {
  Common common;
  std::string input, model, output, embedder;
  int64_t steps = 0;
  int64_t tile_size = -1;
  int64_t tile_overlap = -1;
  double lambda = -1.0;
  bool no_tiling = false;
};

void cmd_enhance(const EnhanceOpts& o) {
  RunConfig cfg = build_cfg(o.common);
  if (o.steps > 0) cfg.sampler_steps = o.steps;
  if (o.tile_size >= 0) cfg.tile_size = o.tile_size;
  if (o.tile_overlap >= 0) cfg.tile_overlap = o.tile_overlap;
  if (o.lambda >= 0.0) cfg.guidance_lambda = o.lambda;
  if (!o.embedder.empty()) cfg.guidance_embedder = o.embedder;
  validate_config(cfg);
  echo_config(cfg);
  require_output_writable(o.output, o.common.force);

  const Checkpoint ck = load_kind(o.model, "diffusion");
  auto net = predictor_from_checkpoint(ck);
  const NoiseSchedule schedule = schedule_from_meta(ck.meta);
  const SamplingPlan plan = subsample(schedule, cfg.sampler_steps);
  const Image i_term = load_image_channels(o.input, net->channels());

  GuidanceConfig gcfg;
  gcfg.lambda = cfg.guidance_lambda;
  gcfg.enabled = cfg.guidance_lambda > 0.0;
  std::unique_ptr<PerceptualEmbedder> embedder;
  if (gcfg.enabled) embedder = embedder_from_spec(cfg.guidance_embedder);

  const auto t0 = std::chrono::steady_clock::now();
  const auto run = [&](const Image& tile) {
    return infer(tile, plan, *net, schedule, gcfg.enabled ? &gcfg : nullptr, embedder.get());
  };
  const Image out = o.no_tiling ? run(i_term) : tiled_infer(i_term, cfg.tile_size, cfg.tile_overlap, run);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_png(o.output, out);
  write_config_sidecar(o.output, cfg);
  std::cout << "wrote " << o.output << "\n"
            << "steps = " << plan.steps() << "\n"
            << "seconds = " << secs << "\n";
}

struct EvaluateOpts {
  Common common;
  std::string reference, test, output, perceptual;
};

void cmd_evaluate(const EvaluateOpts& o) {
  RunConfig cfg = build_cfg(o.common);
  if (!o.perceptual.empty()) cfg.loss_perceptual = o.perceptual;
  validate_config(cfg);
  echo_config(cfg);
  const Image ref = read_png(o.reference);
  const Image test = read_png(o.test);
  if (ref.data.shape() != test.data.shape())
    throw std::runtime_error("images differ in shape: " + o.reference + " vs " + o.test);
  auto metric = metric_from_spec(cfg.loss_perceptual);
  const double p = psnr(ref, test);
  const double m = ms_ssim(ref, test);
  const double d = metric->distance(ref, test);
  std::cout << "psnr = " << p << "\nms_ssim = " << m << "\nperceptual = " << d << "\n";
  if (!o.output.empty()) {
    require_output_writable(o.output, o.common.force);
    const json out = {{"reference", o.reference}, {"test", o.test},          {"psnr", p},
                      {"ms_ssim", m},             {"perceptual", d},         {"perceptual_metric", metric->descriptor()}};
    std::ofstream f(o.output, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + o.output);
    f << out.dump(2) << "\n";
    write_config_sidecar(o.output, cfg);
  }
}

struct AnalyzeNoiseOpts {
  Common common;
  std::string input, codec, output, magnitude;
  int64_t bins = 101;
  bool control = false;
};

void cmd_analyze_noise(const AnalyzeNoiseOpts& o) {
  const RunConfig cfg = build_cfg(o.common);
  validate_config(cfg);
  echo_config(cfg);
  require_output_writable(o.output, o.common.force);
  const Checkpoint ck = load_kind(o.codec, "codec");
  auto model = codec_from_checkpoint(ck);
  const Image img = load_image_channels(o.input, model->config().in_channels);

  NoiseReport rep;
  std::string source;
  if (o.control) {
    // Synthetic null hypothesis: white Gaussian noise with the true
    // residual's power, for the edge-correlation comparison.
    const NoiseReport real = noise_statistics(img, *model, QuantizerMode::kTestRound, nullptr, o.bins);
    Image eps = Image::signed_(img.channels(), img.height(), img.width());
    Rng rng(sub_seed(cfg.seed, kSeedControl));
    rng.fill_normal(eps.data, 0.0, std::sqrt(std::max(real.variance, 0.0)));
    rep = noise_report(eps, img, o.bins);
    source = "gaussian-control";
  } else {
    rep = noise_statistics(img, *model, QuantizerMode::kTestRound, nullptr, o.bins);
    source = "residual";
  }

  const json out = {{"source", source},
                    {"mean", rep.mean},
                    {"variance", rep.variance},
                    {"edge_correlation", rep.edge_correlation},
                    {"histogram", {{"lo", rep.hist_lo}, {"hi", rep.hist_hi}, {"mass", rep.histogram}}},
                    {"band_energy", rep.band_energy}};
  std::ofstream f(o.output, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + o.output);
  f << out.dump(2) << "\n";
  write_config_sidecar(o.output, cfg);

  if (!o.magnitude.empty()) {
    require_output_writable(o.magnitude, o.common.force);
    Image mag(rep.magnitude, Range::kUnit);
    double peak = 0.0;
    for (int64_t i = 0; i < mag.data.numel(); ++i) peak = std::max(peak, mag.data.data()[i]);
    if (peak > 0.0) mag.data.scale_(1.0 / peak);
    write_png(o.magnitude, mag);
    write_config_sidecar(o.magnitude, cfg);
  }

  std::cout << "source = " << source << "\nmean = " << rep.mean << "\nvariance = " << rep.variance
            << "\nedge_correlation = " << rep.edge_correlation << "\nwrote " << o.output << "\n";
}

RDMetric metric_axis_from_string(const std::string& s) {
  if (s == "psnr") return RDMetric::kPsnr;
  if (s == "ms-ssim") return RDMetric::kMsSsim;
  if (s == "perceptual") return RDMetric::kPerceptual;
  throw std::invalid_argument("metric must be psnr, ms-ssim, or perceptual, got '" + s + "'");
}

struct RdCurveOpts {
  Common common;
  std::string data, output, svg, model, id = "ncd", metric = "psnr";
  std::vector<std::string> codecs;
  int64_t steps = 0;
  int64_t limit = 0;
};

void cmd_rd_curve(const RdCurveOpts& o) {
  RunConfig cfg = build_cfg(o.common);
  if (o.steps > 0) cfg.sampler_steps = o.steps;
  validate_config(cfg);
  echo_config(cfg);
  require_output_writable(o.output, o.common.force);
  if (!o.svg.empty()) require_output_writable(o.svg, o.common.force);

  const DatasetManifest manifest =
      build_manifest(o.data, CodecConfig::kStride, "eval", sub_seed(cfg.seed, kSeedManifest));
  if (manifest.files.empty()) throw std::runtime_error("dataset is empty: " + o.data);
  const size_t count = o.limit > 0 ? std::min(manifest.files.size(), static_cast<size_t>(o.limit))
                                   : manifest.files.size();

  std::unique_ptr<UNetPredictor> net;
  std::optional<NoiseSchedule> schedule;
  SamplingPlan plan;
  if (!o.model.empty()) {
    const Checkpoint mck = load_kind(o.model, "diffusion");
    net = predictor_from_checkpoint(mck);
    schedule = schedule_from_meta(mck.meta);
    plan = subsample(*schedule, cfg.sampler_steps);
  }
  auto metric = metric_from_spec(cfg.loss_perceptual);
  const std::string dataset_name = fs::path(o.data).filename().string();

  RDCurve initial{o.id + "-initial", {}};
  RDCurve enhanced{o.id + "-enhanced", {}};
  std::vector<RDRow> rows;

  for (const std::string& ckpath : o.codecs) {
    const Checkpoint ck = load_kind(ckpath, "codec");
    auto model = codec_from_checkpoint(ck);
    if (net && net->channels() != model->config().in_channels)
      throw std::runtime_error("model channels conflict with codec " + ckpath);

    double bpp = 0, psnr_i = 0, ssim_i = 0, perc_i = 0, psnr_e = 0, ssim_e = 0, perc_e = 0;
    for (size_t i = 0; i < count; ++i) {
      const Image orig = load_image_channels(manifest.path(i), model->config().in_channels);
      const Bitstream bs = model->compress(orig);
      bpp += bits_per_pixel(bs.serialize().size(), orig.height(), orig.width());
      const Image rec = model->decompress(bs);
      psnr_i += psnr(orig, rec);
      ssim_i += ms_ssim(orig, rec);
      perc_i += metric->distance(orig, rec);
      if (net) {
        const auto run = [&](const Image& tile) { return infer(tile, plan, *net, *schedule); };
        const Image enh = to_unit(tiled_infer(rec, cfg.tile_size, cfg.tile_overlap, run), true);
        psnr_e += psnr(orig, enh);
        ssim_e += ms_ssim(orig, enh);
        perc_e += metric->distance(orig, enh);
      }
    }
    const double n = static_cast<double>(count);
    const std::string label = fs::path(ckpath).stem().string();
    initial.points.push_back({bpp / n, psnr_i / n, ssim_i / n, perc_i / n, label});
    rows.push_back({o.id, "initial", dataset_name, bpp / n, psnr_i / n, ssim_i / n, perc_i / n});
    if (net) {
      enhanced.points.push_back({bpp / n, psnr_e / n, ssim_e / n, perc_e / n, label});
      rows.push_back({o.id, "enhanced", dataset_name, bpp / n, psnr_e / n, ssim_e / n, perc_e / n});
    }
  }

  write_rd_csv(o.output, rows);
  write_config_sidecar(o.output, cfg);
  std::cout << "wrote " << o.output << "\n";
  if (!o.svg.empty()) {
    std::vector<RDCurve> curves{initial};
    if (net) curves.push_back(enhanced);
    write_rd_svg(o.svg, curves, metric_axis_from_string(o.metric), "rate-distortion: " + dataset_name);
    write_config_sidecar(o.svg, cfg);
    std::cout << "wrote " << o.svg << "\n";
  }
  if (net && initial.points.size() >= 4) {
    try {
      std::cout << "bd_rate(enhanced vs initial, psnr) = " << bd_rate(initial, enhanced, RDMetric::kPsnr) << " %\n";
    } catch (const std::exception& e) {
      std::cout << "bd_rate unavailable: " << e.what() << "\n";
    }
  }
}

}  // namespace

int run_ncd(int argc, const char* const* argv) {
  CLI::App app{"noise-constrained diffusion image compression toolkit"};
  app.require_subcommand(1);

  DemoDataOpts demo;
  CLI::App* demo_cmd = app.add_subcommand("demo-data", "write a synthetic PNG dataset");
  demo_cmd->add_option("--output", demo.output, "output directory")->required();
  demo_cmd->add_option("--count", demo.count, "number of images");
  demo_cmd->add_option("--height", demo.height, "image height");
  demo_cmd->add_option("--width", demo.width, "image width");
  demo_cmd->add_option("--channels", demo.channels, "1 (gray) or 3 (rgb)");
  add_common(demo_cmd, demo.common);
  demo_cmd->callback([&] { cmd_demo_data(demo); });

  TrainCodecOpts tc;
  CLI::App* tc_cmd = app.add_subcommand("train-codec", "rate-distortion train the transform codec");
  tc_cmd->add_option("--data", tc.data, "training image directory")->required();
  tc_cmd->add_option("--output", tc.output, "checkpoint to write")->required();
  tc_cmd->add_option("--resume", tc.resume, "checkpoint to resume from");
  add_common(tc_cmd, tc.common);
  tc_cmd->callback([&] { cmd_train_codec(tc); });

  TrainDiffusionOpts td;
  CLI::App* td_cmd = app.add_subcommand("train-diffusion", "train the noise predictor on codec residuals");
  td_cmd->add_option("--data", td.data, "training image directory")->required();
  td_cmd->add_option("--codec", td.codec, "trained codec checkpoint")->required();
  td_cmd->add_option("--output", td.output, "checkpoint to write")->required();
  td_cmd->add_option("--resume", td.resume, "checkpoint to resume from");
  add_common(td_cmd, td.common);
  td_cmd->callback([&] { cmd_train_diffusion(td); });

  CompressOpts co;
  CLI::App* co_cmd = app.add_subcommand("compress", "encode a PNG into a bitstream");
  co_cmd->add_option("--input", co.input, "source PNG")->required();
  co_cmd->add_option("--codec", co.codec, "trained codec checkpoint")->required();
  co_cmd->add_option("--output", co.output, "bitstream to write")->required();
  add_common(co_cmd, co.common);
  co_cmd->callback([&] { cmd_compress(co); });

  DecompressOpts dc;
  CLI::App* dc_cmd = app.add_subcommand("decompress", "decode a bitstream into a PNG");
  dc_cmd->add_option("--input", dc.input, "bitstream file")->required();
  dc_cmd->add_option("--codec", dc.codec, "trained codec checkpoint")->required();
  dc_cmd->add_option("--output", dc.output, "PNG to write")->required();
  add_common(dc_cmd, dc.common);
  dc_cmd->callback([&] { cmd_decompress(dc); });

  EnhanceOpts en;
  CLI::App* en_cmd = app.add_subcommand("enhance", "run the diffusion over a decoded image");
  en_cmd->add_option("--input", en.input, "decoded PNG (the diffusion start and condition)")->required();
  en_cmd->add_option("--model", en.model, "trained diffusion checkpoint")->required();
  en_cmd->add_option("--output", en.output, "PNG to write")->required();
  en_cmd->add_option("--steps", en.steps, "sampling steps (default from config)");
  en_cmd->add_option("--tile-size", en.tile_size, "tile edge for large images");
  en_cmd->add_option("--tile-overlap", en.tile_overlap, "tile overlap");
  en_cmd->add_flag("--no-tiling", en.no_tiling, "process the whole image at once");
  en_cmd->add_option("--embedder", en.embedder, "guidance embedder: stub or external:<path>");
  en_cmd->add_option("--guidance-lambda", en.lambda, "guidance strength (0 disables)");
  add_common(en_cmd, en.common);
  en_cmd->callback([&] { cmd_enhance(en); });

  EvaluateOpts ev;
  CLI::App* ev_cmd = app.add_subcommand("evaluate", "PSNR / MS-SSIM / perceptual distance of an image pair");
  ev_cmd->add_option("--reference", ev.reference, "ground-truth PNG")->required();
  ev_cmd->add_option("--test", ev.test, "PNG under test")->required();
  ev_cmd->add_option("--output", ev.output, "also write the numbers as JSON");
  ev_cmd->add_option("--perceptual", ev.perceptual, "metric: stub or external:<path>");
  add_common(ev_cmd, ev.common);
  ev_cmd->callback([&] { cmd_evaluate(ev); });

  AnalyzeNoiseOpts an;
  CLI::App* an_cmd = app.add_subcommand("analyze-noise", "statistics of the codec's residual noise");
  an_cmd->add_option("--input", an.input, "source PNG")->required();
  an_cmd->add_option("--codec", an.codec, "trained codec checkpoint")->required();
  an_cmd->add_option("--output", an.output, "report JSON to write")->required();
  an_cmd->add_option("--magnitude", an.magnitude, "also write the |noise| map as PNG");
  an_cmd->add_option("--bins", an.bins, "histogram bins");
  an_cmd->add_flag("--control", an.control, "report a matched-power Gaussian instead of the residual");
  add_common(an_cmd, an.common);
  an_cmd->callback([&] { cmd_analyze_noise(an); });

  RdCurveOpts rd;
  CLI::App* rd_cmd = app.add_subcommand("rd-curve", "sweep codecs over a dataset into CSV / SVG curves");
  rd_cmd->add_option("--data", rd.data, "evaluation image directory")->required();
  rd_cmd->add_option("--codec", rd.codecs, "codec checkpoint (one per rate point, repeatable)")->required();
  rd_cmd->add_option("--output", rd.output, "CSV to write")->required();
  rd_cmd->add_option("--svg", rd.svg, "also plot the curves as SVG");
  rd_cmd->add_option("--model", rd.model, "diffusion checkpoint for an enhanced variant");
  rd_cmd->add_option("--steps", rd.steps, "sampling steps for the enhanced variant");
  rd_cmd->add_option("--limit", rd.limit, "evaluate at most this many images");
  rd_cmd->add_option("--id", rd.id, "codec family id for the CSV");
  rd_cmd->add_option("--metric", rd.metric, "SVG y axis: psnr, ms-ssim, or perceptual");
  add_common(rd_cmd, rd.common);
  rd_cmd->callback([&] { cmd_rd_curve(rd); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "ncd: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run_ncd(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("ncd");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_ncd(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ncdiff
