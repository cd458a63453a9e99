#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "xing/bench.hpp"
#include "xing/checkpoint.hpp"
#include "xing/image_io.hpp"
#include "xing/pose.hpp"
#include "xing/trainer.hpp"
#include "xing/verify.hpp"

namespace fs = std::filesystem;
using namespace xing;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kIo = 2;

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const unsigned long v = std::stoul(item, &used);
    if (used != item.size()) throw ConfigError("bad list element '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

// The run config saved next to a checkpoint, unless overridden.
RunConfig config_for(const fs::path& ckpt, const std::string& override_path) {
  const fs::path cfg = override_path.empty() ? ckpt.parent_path() / "config.ini" : fs::path(override_path);
  if (!fs::exists(cfg)) throw IoError("no config.ini next to checkpoint (looked for " + cfg.string() + ")");
  return load_config(cfg);
}

Tensor item0(const Tensor& batch) {
  Shape s(batch.shape().begin() + 1, batch.shape().end());
  const auto d = batch.data().subspan(0, numel(s));
  return Tensor(std::move(s), {d.begin(), d.end()});
}

int cmd_gradcheck(bool inject_softmax) {
  if (inject_softmax) set_fault(Fault::softmax_backward_sign);
  std::vector<std::string> failed;
  const auto t0 = std::chrono::steady_clock::now();
  run_verification([&](const CheckResult& r) {
    std::printf("%-22s %-6s max_err=%.3e tol=%.0e %6.2fs %s%s%s\n", r.name.c_str(), r.kind.c_str(),
                r.error, r.tolerance, r.seconds, r.passed() ? "ok" : "FAILED",
                r.detail.empty() ? "" : " : ", r.detail.c_str());
    std::fflush(stdout);
    if (!r.passed()) failed.push_back(r.name);
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (failed.empty()) {
    std::printf("all checks passed in %.1fs\n", secs);
    return kOk;
  }
  std::string names;
  for (const auto& n : failed) names += (names.empty() ? "" : ", ") + n;
  std::printf("FAILED: %s\n", names.c_str());
  return kInvalid;
}

int cmd_train(const std::string& config_path, bool resume, bool quiet) {
  const RunConfig cfg = load_config(config_path);
  cfg.validate();
  FitOptions opts;
  opts.resume = resume;
  const auto t0 = std::chrono::steady_clock::now();
  opts.on_step = [&](const LossReport& r, std::optional<double> ssim) {
    if (quiet && !ssim) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("step %5llu  d=%.4f  g_adv=%.4f  l1=%.4f  p=%.4f", static_cast<unsigned long long>(r.step),
                r.loss_d, r.loss_g_adv, r.loss_l1, r.loss_p);
    if (ssim) std::printf("  ssim=%.4f", *ssim);
    std::printf("  (%.0fs)\n", secs);
    std::fflush(stdout);
  };
  const FitResult res = fit(cfg, opts);
  std::printf("checkpoint: %s\nholdout ssim: generated=%.4f copy_baseline=%.4f\n",
              res.checkpoint.string().c_str(), res.final_holdout.generated, res.final_holdout.baseline);
  return kOk;
}

int cmd_generate(const std::string& ckpt, std::uint64_t seed, const std::string& out_dir,
                 const std::string& config_override, bool png) {
  const RunConfig cfg = config_for(ckpt, config_override);
  Trainer trainer(cfg);
  trainer.load(ckpt);
  const auto& m = cfg.model;
  const pose::Episode ep = pose::sample_episode(seed, m.height, m.width);
  const auto out = trainer.generate(pose::stack({ep}));

  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const ImageFormat fmt = png ? ImageFormat::png : ImageFormat::ppm;
  write_image(dir / "source", to_rgb8(ep.source_image), fmt);
  write_image(dir / "target_pose", gray_to_rgb8(pose::pose_overlay(ep.target_pose)), fmt);
  write_image(dir / "target", to_rgb8(ep.target_image), fmt);
  write_image(dir / "generated", to_rgb8(item0(out.image)), fmt);
  for (std::size_t i = 0; i < out.appearance_images.size(); ++i) {
    write_image(dir / ("appearance_" + std::to_string(i)), to_rgb8(item0(out.appearance_images[i])), fmt);
    write_image(dir / ("shape_" + std::to_string(i)), to_rgb8(item0(out.shape_images[i])), fmt);
  }
  const Tensor attn = item0(out.attention);
  for (std::size_t k = 0; k < attn.dim(0); ++k) {
    write_image(dir / ("attention_" + std::to_string(k)), gray_to_rgb8(item0(slice(attn, 0, k, 1))), fmt);
  }
  std::printf("wrote %zu images to %s\n", 4 + 2 * out.appearance_images.size() + attn.dim(0),
              dir.string().c_str());
  return kOk;
}

int cmd_eval(const std::string& ckpt, std::size_t n, const std::string& config_override) {
  if (n == 0) throw ConfigError("--n must be >= 1");
  const RunConfig cfg = config_for(ckpt, config_override);
  Trainer trainer(cfg);
  trainer.load(ckpt);
  const auto eps = pose::holdout_episodes(cfg.train.seed, n, cfg.model.height, cfg.model.width);
  const HoldoutScore s = trainer.holdout_ssim(eps);
  std::printf("episodes            %zu\n", n);
  std::printf("ssim generated      %.6f\n", s.generated);
  std::printf("ssim copy baseline  %.6f\n", s.baseline);
  std::printf("margin              %+.6f\n", s.generated - s.baseline);
  return kOk;
}

int cmd_bench(std::size_t h, std::size_t w, const std::string& pyramid, std::size_t channels,
              std::size_t reps) {
  PyramidSpec spec{parse_list(pyramid)};
  const AttentionBench b = bench_attention(h, w, spec, channels, reps);
  std::printf("code %zux%zu, c=%zu\n", h, w, channels);
  std::printf("%6s %8s %7s %12s %12s\n", "factor", "grid", "tokens", "correlation", "ms");
  for (const auto& s : b.scales) {
    const std::string grid = std::to_string(s.height) + "x" + std::to_string(s.width);
    const std::string corr = std::to_string(s.tokens) + "^2";
    std::printf("%6zu %8s %7zu %12s %12.4f\n", s.factor, grid.c_str(), s.tokens, corr.c_str(),
                1e3 * s.seconds);
  }
  std::printf("single-scale block (sa)   %.4f ms\n", 1e3 * b.single_scale_seconds);
  std::printf("multi-scale block (emsa)  %.4f ms\n", 1e3 * b.multi_scale_seconds);
  return kOk;
}

int cmd_sweep(const std::string& config_path, const std::string& blocks) {
  const RunConfig cfg = load_config(config_path);
  const auto rows = block_sweep(cfg, parse_list(blocks), [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  });
  std::printf("%6s %9s %10s %10s %8s %8s\n", "T", "params", "l1_first", "l1_last", "ssim", "copy");
  for (const auto& r : rows) {
    std::printf("%6zu %9zu %10.4f %10.4f %8.4f %8.4f\n", r.blocks, r.params, r.l1_first, r.l1_last,
                r.ssim, r.ssim_baseline);
  }
  std::printf("wrote %s\n", (fs::path(cfg.train.checkpoint_dir) / "sweep.csv").string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xing: cross-attention pose-transfer GAN engine"};
  app.require_subcommand(1);

  auto* gc = app.add_subcommand("gradcheck", "Run the gradient/oracle verification suite");
  std::string fault;
  gc->add_option("--inject-fault", fault)->group("")->check(CLI::IsMember({"softmax"}));

  auto* train = app.add_subcommand("train", "Train from a config file");
  std::string config;
  bool resume = false, quiet = false;
  train->add_option("--config", config, "Run config (.ini)")->required();
  train->add_flag("--resume", resume, "Continue from checkpoint_dir/latest.xgpp");
  train->add_flag("--quiet", quiet, "Only print evaluation steps");

  auto* gen = app.add_subcommand("generate", "Render one episode with a trained model");
  std::string ckpt, out_dir, config_override;
  std::uint64_t seed = 0;
  bool png = false;
  gen->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  gen->add_option("--seed", seed, "Episode seed")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--config", config_override, "Config (default: config.ini beside the checkpoint)");
  gen->add_flag("--png", png, "Write PNG instead of PPM");

  auto* ev = app.add_subcommand("eval", "Held-out SSIM against the copy baseline");
  std::size_t n = 32;
  ev->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  ev->add_option("--n", n, "Held-out episodes");
  ev->add_option("--config", config_override, "Config (default: config.ini beside the checkpoint)");

  auto* bench = app.add_subcommand("bench", "Single- vs multi-scale attention cost");
  std::size_t bh = 16, bw = 16, channels = 32, reps = 5;
  std::string pyramid = "1,2,3,6";
  bench->set_help_flag("--help", "Print this help message and exit");
  bench->add_option("--h", bh, "Code height");
  bench->add_option("--w", bw, "Code width");
  bench->add_option("--pyramid", pyramid, "Comma-separated downsampling factors");
  bench->add_option("--channels", channels, "Code channels");
  bench->add_option("--reps", reps, "Timing repetitions (best of)");

  auto* dump = app.add_subcommand("dump-data", "Write synthetic episodes as PPM + manifest");
  std::size_t dn = 16, dh = 64, dw = 32;
  dump->set_help_flag("--help", "Print this help message and exit");
  dump->add_option("--out", out_dir, "Output directory")->required();
  dump->add_option("--n", dn, "Episodes");
  dump->add_option("--seed", seed, "Seed");
  dump->add_option("--h", dh, "Image height");
  dump->add_option("--w", dw, "Image width");

  auto* sweep = app.add_subcommand("sweep", "Block-count sweep; writes sweep.csv");
  std::string blocks = "1,3,5";
  sweep->add_option("--config", config, "Base run config")->required();
  sweep->add_option("--blocks", blocks, "Comma-separated T values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*gc) return cmd_gradcheck(fault == "softmax");
    if (*train) return cmd_train(config, resume, quiet);
    if (*gen) return cmd_generate(ckpt, seed, out_dir, config_override, png);
    if (*ev) return cmd_eval(ckpt, n, config_override);
    if (*bench) return cmd_bench(bh, bw, pyramid, channels, reps);
    if (*dump) {
      pose::dump_dataset(out_dir, seed, dn, dh, dw);
      std::printf("wrote %zu episodes to %s\n", dn, out_dir.c_str());
      return kOk;
    }
    if (*sweep) return cmd_sweep(config, blocks);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInvalid;
  }
  return kInvalid;
}
