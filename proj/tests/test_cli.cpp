#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "ncdiff/checkpoint.hpp"
#include "ncdiff/cli.hpp"
#include "ncdiff/config.hpp"
#include "ncdiff/dataset.hpp"
#include "ncdiff/image_io.hpp"
#include "ncdiff/log.hpp"
#include "ncdiff/nn.hpp"
#include "ncdiff/synthetic.hpp"

using namespace ncdiff;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int64_t line_count(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  int64_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  std::streambuf* ob = std::cout.rdbuf(out.rdbuf());
  std::streambuf* eb = std::cerr.rdbuf(err.rdbuf());
  const int code = run_ncd(args);
  std::cout.rdbuf(ob);
  std::cerr.rdbuf(eb);
  return {code, out.str(), err.str()};
}

bool same_tensor_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), static_cast<size_t>(a.numel()) * sizeof(double)) == 0;
}

void write_demo_pngs(const fs::path& dir, int64_t count, int64_t size, uint64_t seed) {
  fs::create_directories(dir);
  Rng rng(seed);
  for (int64_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%03lld.png", static_cast<long long>(i));
    write_png((dir / name).string(), synth_textured(size, size, 1, rng));
  }
}

}  // namespace

TEST_CASE("config defaults match the trained settings") {
  const RunConfig cfg;
  CHECK(cfg.seed == 0);
  CHECK(cfg.diffusion_T == 1000);
  CHECK(cfg.schedule == ScheduleKind::kLinear);
  CHECK(cfg.sampler_steps == 1);
  CHECK(cfg.loss.omega == 0.5);
  CHECK(cfg.loss.beta == 0.3);
  CHECK(cfg.loss.wavelet_levels == 4);
  CHECK(cfg.loss_perceptual == "stub");
  CHECK(cfg.train_lr == 8e-5);
  CHECK(cfg.train_batch == 1);
  CHECK(cfg.tile_size == 256);
  CHECK(cfg.tile_overlap == 64);
  CHECK(cfg.guidance_lambda == 0.0);
  CHECK_NOTHROW(validate_config(cfg));
}

TEST_CASE("config text round trips and rejects unknown keys") {
  RunConfig cfg;
  apply_key_value(cfg, "diffusion.T", "250");
  apply_key_value(cfg, "loss.omega", "0.125");
  apply_key_value(cfg, "train.lr", "3e-4");
  apply_key_value(cfg, "aff.r_th", "0.6, 0.5, 0.4, 0.3");
  apply_key_value(cfg, "diffusion.schedule", "uniform");
  CHECK(cfg.diffusion_T == 250);
  CHECK(cfg.aff.r_th == std::vector<double>{0.6, 0.5, 0.4, 0.3});
  CHECK(cfg.schedule == ScheduleKind::kUniform);

  const std::string text = serialize_config(cfg);
  const RunConfig back = parse_config_text(text);
  CHECK(serialize_config(back) == text);

  // comments and blank lines are format, not content
  const RunConfig commented = parse_config_text("# header\n\n  diffusion.T = 77 # trailing\n");
  CHECK(commented.diffusion_T == 77);

  CHECK_THROWS_WITH_AS(apply_key_value(cfg, "diffusion.t", "10"),
                       doctest::Contains("unknown config key 'diffusion.t'"), std::invalid_argument);
  CHECK_THROWS_AS(apply_key_value(cfg, "diffusion.T", "ten"), std::invalid_argument);
  CHECK_THROWS_AS(apply_key_value(cfg, "loss.omega", "0.5x"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config_text("diffusion.T 50\n"), doctest::Contains("expected 'key = value'"),
                       std::invalid_argument);
}

TEST_CASE("config validation catches cross-field conflicts") {
  RunConfig cfg;
  cfg.train_batch = 2;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg = RunConfig{};
  cfg.tile_overlap = cfg.tile_size;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg = RunConfig{};
  cfg.data_crop = 33;  // not a stride multiple
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg = RunConfig{};
  cfg.guidance_lambda = -1.0;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg = RunConfig{};
  cfg.unet_time_embed_dim = 15;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
}

TEST_CASE("config sidecar lands next to the artifact") {
  const fs::path dir = fresh_dir("ncdiff_test_sidecar");
  RunConfig cfg;
  cfg.seed = 9;
  cfg.sampler_steps = 4;
  const std::string artifact = (dir / "out.bin").string();
  write_config_sidecar(artifact, cfg);
  const RunConfig back = parse_config_text(read_bytes(artifact + ".config"));
  CHECK(back.seed == 9);
  CHECK(back.sampler_steps == 4);
  CHECK(serialize_config(back) == serialize_config(cfg));
  fs::remove_all(dir);
}

TEST_CASE("sub seeds decorrelate purposes") {
  CHECK(sub_seed(42, 1) == sub_seed(42, 1));
  CHECK(sub_seed(42, 1) != sub_seed(42, 2));
  CHECK(sub_seed(42, 1) != sub_seed(43, 1));
}

TEST_CASE("manifest lists only decodable images deterministically") {
  const fs::path dir = fresh_dir("ncdiff_test_manifest");
  write_demo_pngs(dir, 6, 48, 11);
  {
    Rng rng(5);
    write_png((dir / "tiny.png").string(), synth_textured(8, 8, 1, rng));  // below the crop
    std::ofstream bad(dir / "broken.png");
    bad << "this is not a png";
  }
  std::ofstream other(dir / "notes.txt");
  other << "ignored";
  other.close();

  const int64_t warns_before = warn_count();
  const DatasetManifest m = build_manifest(dir.string(), 32, "train", 7);
  CHECK(m.files.size() == 6);
  CHECK(warn_count() == warns_before + 2);  // tiny + broken, each once
  for (const std::string& f : m.files) {
    CHECK(f != "tiny.png");
    CHECK(f != "broken.png");
    CHECK(f != "notes.txt");
  }

  const DatasetManifest again = build_manifest(dir.string(), 32, "train", 7);
  CHECK(again.files == m.files);
  const DatasetManifest reseeded = build_manifest(dir.string(), 32, "train", 8);
  CHECK(reseeded.files != m.files);  // same set, new order
  auto sorted_a = m.files, sorted_b = reseeded.files;
  std::sort(sorted_a.begin(), sorted_a.end());
  std::sort(sorted_b.begin(), sorted_b.end());
  CHECK(sorted_a == sorted_b);

  CHECK_THROWS_AS(build_manifest((dir / "missing").string(), 32, "train", 7), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("crop loading is a pure function of the rng state") {
  const fs::path dir = fresh_dir("ncdiff_test_crops");
  write_demo_pngs(dir, 2, 48, 3);
  const DatasetManifest m = build_manifest(dir.string(), 32, "train", 1);

  Rng a(77), b(77);
  const std::vector<Tensor> ca = load_crop_set(m, 1, 5, a);  // count cycles past the two files
  const std::vector<Tensor> cb = load_crop_set(m, 1, 5, b);
  REQUIRE(ca.size() == 5);
  for (size_t i = 0; i < ca.size(); ++i) {
    CHECK(ca[i].shape() == std::vector<int64_t>{1, 32, 32});
    CHECK(same_tensor_bits(ca[i], cb[i]));
  }

  DatasetManifest empty = m;
  empty.files.clear();
  Rng c(1);
  CHECK_THROWS_WITH_AS(load_crop_set(empty, 1, 1, c), doctest::Contains("dataset is empty"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("channel adaptation replicates and averages") {
  const fs::path dir = fresh_dir("ncdiff_test_channels");
  Rng rng(21);
  write_png((dir / "gray.png").string(), synth_textured(24, 24, 1, rng));
  write_png((dir / "rgb.png").string(), synth_textured(24, 24, 3, rng));

  const Image as_rgb = load_image_channels((dir / "gray.png").string(), 3);
  CHECK(as_rgb.channels() == 3);
  const int64_t plane = 24 * 24;
  for (int64_t i = 0; i < plane; ++i) {
    CHECK(as_rgb.data.data()[i] == as_rgb.data.data()[plane + i]);
    CHECK(as_rgb.data.data()[i] == as_rgb.data.data()[2 * plane + i]);
  }

  const Image rgb = load_image_channels((dir / "rgb.png").string(), 3);
  const Image as_gray = load_image_channels((dir / "rgb.png").string(), 1);
  CHECK(as_gray.channels() == 1);
  for (int64_t i = 0; i < plane; ++i) {
    const double mean =
        (rgb.data.data()[i] + rgb.data.data()[plane + i] + rgb.data.data()[2 * plane + i]) / 3.0;
    CHECK(as_gray.data.data()[i] == doctest::Approx(mean).epsilon(1e-12));
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint files round trip tensors and meta") {
  const fs::path dir = fresh_dir("ncdiff_test_ncck");
  const std::string path = (dir / "a.ncck").string();

  Checkpoint ck;
  ck.kind = "codec";
  ck.meta = {{"steps_done", 12}, {"rng", "state string"}, {"nested", {{"x", 1.5}}}};
  Rng rng(4);
  Tensor t1({3, 5});
  rng.fill_normal(t1);
  Tensor t2({2, 2, 2});
  rng.fill_uniform(t2, -1.0, 1.0);
  ck.add("param.w", t1);
  ck.add("adam.m.w", t2);
  write_checkpoint(path, ck);

  const Checkpoint back = read_checkpoint(path);
  CHECK(back.kind == "codec");
  CHECK(back.meta == ck.meta);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].first == "param.w");
  CHECK(same_tensor_bits(back.tensors[0].second, t1));
  CHECK(same_tensor_bits(back.tensors[1].second, t2));
  CHECK(back.find("adam.m.w") != nullptr);
  CHECK(back.find("nope") == nullptr);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint rejects damage and mismatched models") {
  const fs::path dir = fresh_dir("ncdiff_test_ncck_bad");
  const std::string path = (dir / "a.ncck").string();

  Checkpoint ck;
  ck.kind = "codec";
  ck.meta = {{"steps_done", 1}};
  Tensor t({4, 4});
  t.fill(0.25);
  ck.add("param.w", t);
  write_checkpoint(path, ck);

  const std::string bytes = read_bytes(path);
  {
    std::ofstream f(dir / "trunc.ncck", std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
  }
  CHECK_THROWS_WITH_AS(read_checkpoint((dir / "trunc.ncck").string()), doctest::Contains("truncated"),
                       std::runtime_error);
  {
    std::string wrong = bytes;
    wrong[0] = 'X';
    std::ofstream f(dir / "magic.ncck", std::ios::binary);
    f.write(wrong.data(), static_cast<std::streamsize>(wrong.size()));
  }
  CHECK_THROWS_WITH_AS(read_checkpoint((dir / "magic.ncck").string()), doctest::Contains("bad magic"),
                       std::runtime_error);
  CHECK_THROWS_AS(read_checkpoint((dir / "missing.ncck").string()), std::runtime_error);

  // parameter loading is strict about identity
  Rng rng(9);
  Conv2d conv("w", 1, 1, 3, 1, 1, rng);
  ParamList ps;
  conv.params(ps);
  const Checkpoint loaded = read_checkpoint(path);
  CHECK_THROWS_AS(load_params(ps, loaded), std::runtime_error);  // names/shapes differ
  fs::remove_all(dir);
}

TEST_CASE("adam state survives a checkpoint") {
  Rng rng(31);
  Conv2d conv("c", 1, 2, 3, 1, 1, rng);
  ParamList ps;
  conv.params(ps);
  Adam adam(ps, 1e-3);
  for (int it = 0; it < 2; ++it) {
    for (Param* p : ps) rng.fill_normal(p->grad);
    adam.step();
  }

  const fs::path dir = fresh_dir("ncdiff_test_adam");
  const std::string path = (dir / "a.ncck").string();
  Checkpoint ck;
  ck.kind = "codec";
  add_params(ck, ps);
  add_adam(ck, adam);
  write_checkpoint(path, ck);

  // perturb everything, then restore
  for (Param* p : ps) rng.fill_normal(p->value);
  Adam fresh(ps, 1e-3);
  const Checkpoint back = read_checkpoint(path);
  load_params(ps, back);
  load_adam(fresh, back);
  CHECK(fresh.steps_done() == 2);
  const auto sa = adam.state_tensors();
  const auto sb = fresh.state_tensors();
  REQUIRE(sa.size() == sb.size());
  for (size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].first == sb[i].first);
    CHECK(same_tensor_bits(*sa[i].second, *sb[i].second));
  }
  fs::remove_all(dir);
}

TEST_CASE("cli pipeline runs end to end deterministically") {
  const fs::path dir = fresh_dir("ncdiff_test_cli");
  const std::string data = (dir / "data").string();
  const std::string codec = (dir / "codec.ncck").string();
  const std::string model = (dir / "diff.ncck").string();
  const std::vector<std::string> small_codec = {
      "--set", "codec.in_channels=1", "--set", "codec.hidden=8",  "--set", "codec.latent_channels=4",
      "--set", "data.crop=32",        "--set", "data.count=4",    "--set", "seed=5",
  };

  CliResult r = run_cli({"demo-data", "--output", data, "--count", "3", "--height", "48", "--width", "48",
                         "--channels", "1", "--set", "seed=5"});
  CHECK(r.code == 0);
  CHECK(r.out.find("# effective config") != std::string::npos);
  CHECK(r.out.find("sampler.steps = 1") != std::string::npos);
  CHECK(fs::exists(fs::path(data) / "img_002.png"));
  CHECK(fs::exists(fs::path(data) / "dataset.config"));

  std::vector<std::string> tc = {"train-codec", "--data", data, "--output", codec,
                                 "--set", "codec.steps=20", "--set", "train.log_every=5"};
  tc.insert(tc.end(), small_codec.begin(), small_codec.end());
  r = run_cli(tc);
  CHECK(r.code == 0);
  CHECK(fs::exists(codec));
  CHECK(line_count(codec + ".loss.csv") == 1 + 20 / 5);  // header + steps / log-interval
  CHECK(fs::exists(codec + ".config"));

  std::vector<std::string> td = {"train-diffusion", "--data", data, "--codec", codec, "--output", model,
                                 "--set", "unet.base_channels=8", "--set", "unet.time_embed_dim=16",
                                 "--set", "diffusion.T=50", "--set", "train.steps=4",
                                 "--set", "train.log_every=1", "--set", "loss.wavelet_levels=2"};
  td.insert(td.end(), small_codec.begin(), small_codec.end());
  r = run_cli(td);
  CHECK(r.code == 0);
  CHECK(fs::exists(model));
  CHECK(line_count(model + ".loss.csv") == 1 + 4);

  const std::string src = (fs::path(data) / "img_000.png").string();
  const auto pipeline = [&](const std::string& tag) {
    const std::string bs = (dir / (tag + ".ncdf")).string();
    const std::string dec = (dir / (tag + "_dec.png")).string();
    const std::string enh = (dir / (tag + "_enh.png")).string();
    CHECK(run_cli({"compress", "--input", src, "--codec", codec, "--output", bs}).code == 0);
    CHECK(run_cli({"decompress", "--input", bs, "--codec", codec, "--output", dec}).code == 0);
    CHECK(run_cli({"enhance", "--input", dec, "--model", model, "--output", enh, "--steps", "2"}).code == 0);
    return read_bytes(bs) + "|" + read_bytes(dec) + "|" + read_bytes(enh);
  };
  CHECK(pipeline("run1") == pipeline("run2"));

  const std::string dec = (dir / "run1_dec.png").string();
  const std::string enh1 = (dir / "run1_enh.png").string();
  r = run_cli({"evaluate", "--reference", src, "--test", enh1, "--output", (dir / "m.json").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("psnr = ") != std::string::npos);
  CHECK(r.out.find("ms_ssim = ") != std::string::npos);
  {
    const auto m = nlohmann::json::parse(read_bytes(dir / "m.json"));
    CHECK(m.at("psnr").get<double>() > 0.0);
    CHECK(m.at("ms_ssim").is_number());
    CHECK(m.at("perceptual").get<double>() >= 0.0);
  }

  r = run_cli({"analyze-noise", "--input", src, "--codec", codec, "--output", (dir / "noise.json").string(),
               "--magnitude", (dir / "mag.png").string()});
  CHECK(r.code == 0);
  {
    const auto n = nlohmann::json::parse(read_bytes(dir / "noise.json"));
    CHECK(n.at("source") == "residual");
    double mass = 0.0;
    for (const auto& v : n.at("histogram").at("mass")) mass += v.get<double>();
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n.at("band_energy").size() == 8);
  }
  CHECK(fs::exists(dir / "mag.png"));

  // guided variant stays deterministic too
  const std::string g1 = (dir / "g1.png").string(), g2 = (dir / "g2.png").string();
  CHECK(run_cli({"enhance", "--input", dec, "--model", model, "--output", g1, "--steps", "2",
                 "--guidance-lambda", "0.01", "--embedder", "stub"}).code == 0);
  CHECK(run_cli({"enhance", "--input", dec, "--model", model, "--output", g2, "--steps", "2",
                 "--guidance-lambda", "0.01", "--embedder", "stub"}).code == 0);
  CHECK(read_bytes(g1) == read_bytes(g2));

  r = run_cli({"rd-curve", "--data", data, "--codec", codec, "--output", (dir / "rd.csv").string(), "--svg",
               (dir / "rd.svg").string(), "--limit", "1"});
  CHECK(r.code == 0);
  CHECK(line_count(dir / "rd.csv") == 2);  // header + one point
  CHECK(read_bytes(dir / "rd.svg").find("<svg") == 0);

  fs::remove_all(dir);
}

TEST_CASE("cli refuses bad inputs with nonzero exits") {
  const fs::path dir = fresh_dir("ncdiff_test_cli_bad");
  const std::string data = (dir / "data").string();
  write_demo_pngs(data, 2, 48, 2);

  // unknown config key
  CliResult r = run_cli({"demo-data", "--output", (dir / "d2").string(), "--set", "nope=1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown config key") != std::string::npos);

  // config conflict
  r = run_cli({"demo-data", "--output", (dir / "d3").string(), "--set", "train.batch=2"});
  CHECK(r.code == 1);
  CHECK(r.err.find("batch") != std::string::npos);

  // diffusion training without a codec checkpoint
  r = run_cli({"train-diffusion", "--data", data, "--codec", (dir / "none.ncck").string(), "--output",
               (dir / "d.ncck").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("not found") != std::string::npos);

  // a usable codec for the remaining cases
  std::vector<std::string> tc = {"train-codec", "--data", data, "--output", (dir / "c.ncck").string(),
                                 "--set", "codec.in_channels=1", "--set", "codec.hidden=8",
                                 "--set", "codec.latent_channels=4", "--set", "codec.steps=2",
                                 "--set", "data.crop=32", "--set", "data.count=2"};
  REQUIRE(run_cli(tc).code == 0);
  const std::string codec = (dir / "c.ncck").string();
  const std::string src = (fs::path(data) / "img_000.png").string();
  const std::string bs = (dir / "x.ncdf").string();
  REQUIRE(run_cli({"compress", "--input", src, "--codec", codec, "--output", bs}).code == 0);

  // overwrite guard
  r = run_cli({"compress", "--input", src, "--codec", codec, "--output", bs});
  CHECK(r.code == 1);
  CHECK(r.err.find("--force") != std::string::npos);
  CHECK(run_cli({"compress", "--input", src, "--codec", codec, "--output", bs, "--force"}).code == 0);

  // truncated bitstream
  const std::string whole = read_bytes(bs);
  {
    std::ofstream f(dir / "trunc.ncdf", std::ios::binary);
    f.write(whole.data(), 25);
  }
  r = run_cli({"decompress", "--input", (dir / "trunc.ncdf").string(), "--codec", codec, "--output",
               (dir / "t.png").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("ncd: error") != std::string::npos);

  // wrong checkpoint kind
  r = run_cli({"enhance", "--input", src, "--model", codec, "--output", (dir / "e.png").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("expected a diffusion checkpoint") != std::string::npos);

  // unknown subcommand is a CLI11 parse error
  CHECK(run_cli({"frobnicate"}).code != 0);
  fs::remove_all(dir);
}

TEST_CASE("training resumes bit exactly from a checkpoint") {
  const fs::path dir = fresh_dir("ncdiff_test_resume");
  const std::string data = (dir / "data").string();
  write_demo_pngs(data, 3, 48, 13);
  const std::vector<std::string> base = {
      "--set", "codec.in_channels=1", "--set", "codec.hidden=8",  "--set", "codec.latent_channels=4",
      "--set", "data.crop=32",        "--set", "data.count=3",    "--set", "seed=13",
      "--set", "train.log_every=1",
  };

  const auto train_codec = [&](const std::string& out, int64_t steps, const std::string& resume) {
    std::vector<std::string> args = {"train-codec", "--data", data, "--output", out,
                                     "--set", "codec.steps=" + std::to_string(steps)};
    if (!resume.empty()) {
      args.push_back("--resume");
      args.push_back(resume);
    }
    args.insert(args.end(), base.begin(), base.end());
    return run_cli(args);
  };

  const std::string straight = (dir / "straight.ncck").string();
  const std::string half = (dir / "half.ncck").string();
  const std::string resumed = (dir / "resumed.ncck").string();
  REQUIRE(train_codec(straight, 16, "").code == 0);
  REQUIRE(train_codec(half, 8, "").code == 0);
  REQUIRE(train_codec(resumed, 16, half).code == 0);

  // identical weights, optimizer slots, rng states, and counters
  CHECK(read_bytes(straight) == read_bytes(resumed));

  // the resumed run's logged losses equal the straight run's tail
  std::istringstream a(read_bytes(straight + ".loss.csv")), b(read_bytes(resumed + ".loss.csv"));
  std::vector<std::string> rows_a, rows_b;
  for (std::string line; std::getline(a, line);) rows_a.push_back(line);
  for (std::string line; std::getline(b, line);) rows_b.push_back(line);
  REQUIRE(rows_a.size() == 17);  // header + 16
  REQUIRE(rows_b.size() == 9);   // header + steps 9..16
  for (size_t i = 0; i < 8; ++i) CHECK(rows_b[1 + i] == rows_a[9 + i]);

  // geometry conflicts are rejected instead of silently reinterpreted
  std::vector<std::string> conflict = {"train-codec", "--data", data, "--output", (dir / "x.ncck").string(),
                                       "--resume", half, "--set", "codec.steps=16", "--set", "codec.hidden=16",
                                       "--set", "codec.in_channels=1", "--set", "codec.latent_channels=4",
                                       "--set", "data.crop=32", "--set", "data.count=3", "--set", "seed=13"};
  const CliResult r = run_cli(conflict);
  CHECK(r.code == 1);
  CHECK(r.err.find("conflicts") != std::string::npos);

  // same exercise for the diffusion trainer
  const std::vector<std::string> dbase = {
      "--set", "unet.base_channels=8", "--set", "unet.time_embed_dim=16", "--set", "diffusion.T=50",
      "--set", "loss.wavelet_levels=2",
  };
  const auto train_diff = [&](const std::string& out, int64_t steps, const std::string& resume) {
    std::vector<std::string> args = {"train-diffusion", "--data", data, "--codec", straight, "--output", out,
                                     "--set", "train.steps=" + std::to_string(steps)};
    if (!resume.empty()) {
      args.push_back("--resume");
      args.push_back(resume);
    }
    args.insert(args.end(), base.begin(), base.end());
    args.insert(args.end(), dbase.begin(), dbase.end());
    return run_cli(args);
  };
  const std::string dstraight = (dir / "dstraight.ncck").string();
  const std::string dhalf = (dir / "dhalf.ncck").string();
  const std::string dresumed = (dir / "dresumed.ncck").string();
  REQUIRE(train_diff(dstraight, 6, "").code == 0);
  REQUIRE(train_diff(dhalf, 3, "").code == 0);
  REQUIRE(train_diff(dresumed, 6, dhalf).code == 0);
  CHECK(read_bytes(dstraight) == read_bytes(dresumed));

  fs::remove_all(dir);
}

TEST_CASE("cache dir resolves checkpoints and collects periodic saves") {
  const fs::path dir = fresh_dir("ncdiff_test_cache");
  const fs::path cache = dir / "cache";
  const std::string data = (dir / "data").string();
  write_demo_pngs(data, 2, 48, 4);

  CHECK(resolve_input_path((dir / "data").string()) == (dir / "data").string());

  ::setenv("NCD_CACHE_DIR", cache.string().c_str(), 1);
  std::vector<std::string> tc = {"train-codec", "--data", data, "--output", (dir / "c.ncck").string(),
                                 "--set", "codec.in_channels=1", "--set", "codec.hidden=8",
                                 "--set", "codec.latent_channels=4", "--set", "codec.steps=4",
                                 "--set", "train.checkpoint_every=2", "--set", "data.crop=32",
                                 "--set", "data.count=2"};
  CHECK(run_cli(tc).code == 0);
  CHECK(fs::exists(cache / "c.step000002.ncck"));  // periodic save went to the cache

  // bare names fall back to the cache directory
  fs::copy_file(dir / "c.ncck", cache / "cached.ncck");
  const std::string resolved = resolve_input_path("cached.ncck");
  CHECK(resolved == (cache / "cached.ncck").string());
  const std::string src = (fs::path(data) / "img_000.png").string();
  CHECK(run_cli({"compress", "--input", src, "--codec", "cached.ncck", "--output", (dir / "o.ncdf").string()})
            .code == 0);

  ::unsetenv("NCD_CACHE_DIR");
  CHECK_THROWS_AS(resolve_input_path("cached.ncck"), std::runtime_error);
  fs::remove_all(dir);
}
