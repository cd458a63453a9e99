#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "xing/checkpoint.hpp"
#include "xing/image_io.hpp"
#include "xing/trainer.hpp"

namespace fs = std::filesystem;
using namespace xing;
using xing::test::uniform;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("xing_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny(const fs::path& dir) {
  RunConfig c = RunConfig::desk();
  c.model.blocks = 1;
  c.model.channels = 4;
  c.model.height = 16;
  c.model.width = 16;
  c.model.fusion.intermediates = 2;
  c.train.batch = 2;
  c.train.holdout = 2;
  c.train.iters = 6;
  c.train.checkpoint_every = 3;
  c.train.eval_every = 3;
  c.train.checkpoint_dir = dir.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  const fs::path dir = scratch("ckpt");
  TensorMap m{{"a", uniform({2, 3, 4}, 1, -1e300, 1e300)}, {"b", Tensor::scalar(-0.0)}, {"c", uniform({7}, 2)}};
  save_tensors(dir / "x.xgpp", m);
  const TensorMap back = load_tensors(dir / "x.xgpp");
  ASSERT_EQ(back.size(), 3u);
  for (const auto& [k, v] : m) EXPECT_TRUE(bitwise_equal(back.at(k), v)) << k;
  EXPECT_EQ(slurp(dir / "x.xgpp").substr(0, 4), "XGPP");
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const fs::path dir = scratch("corrupt");
  save_tensors(dir / "ok.xgpp", {{"a", uniform({16}, 3)}});
  std::string bytes = slurp(dir / "ok.xgpp");
  {
    std::ofstream(dir / "magic.xgpp", std::ios::binary) << "XGPQ" << bytes.substr(4);
    std::ofstream(dir / "short.xgpp", std::ios::binary) << bytes.substr(0, bytes.size() - 9);
  }
  EXPECT_THROW(load_tensors(dir / "magic.xgpp"), IoError);
  EXPECT_THROW(load_tensors(dir / "short.xgpp"), IoError);
  EXPECT_THROW(load_tensors(dir / "missing.xgpp"), IoError);
}

TEST(Checkpoint, LoadIntoChecksShapes) {
  ParamStore store;
  store.add("w", uniform({2, 2}, 4));
  EXPECT_THROW(load_into(store, {{"w", uniform({4}, 5)}}), std::exception);
  EXPECT_THROW(load_into(store, {}), std::exception);
  const Tensor v = uniform({2, 2}, 6);
  load_into(store, {{"w", v}});
  EXPECT_TRUE(bitwise_equal(store.at("w").value, v));
}

TEST(Config, SerializeParseRoundTrip) {
  RunConfig c = RunConfig::desk();
  c.optim.lr = 1.0 / 3.0;
  c.model.pyramid.factors = {1, 2, 5};
  c.gan.kind = GanLossKind::lsgan;
  c.train.seed = 123456789012345ULL;
  EXPECT_EQ(parse_config(serialize_config(c)), c);
  EXPECT_EQ(parse_config(serialize_config(RunConfig::desk())), RunConfig::desk());
}

TEST(Config, ShippedDeskPresetMatches) {
  EXPECT_EQ(load_config(fs::path(XING_SOURCE_DIR) / "configs" / "desk.ini"), RunConfig::desk());
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("[model]\nblocks = 2\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(parse_config("[nope]\n"), ConfigError);
  EXPECT_THROW(parse_config("[optim]\nlr = fast\n"), ConfigError);
  EXPECT_THROW(parse_config("blocks = 2\n"), ConfigError);
  RunConfig bad = RunConfig::desk();
  bad.train.log = "../escape.csv";
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Trainer, SaveLoadForwardIsBitwise) {
  const fs::path dir = scratch("trainer");
  const RunConfig cfg = tiny(dir);
  Trainer a(cfg);
  a.train_step(pose::training_batch(0, 0, 2, 16, 16));
  a.save(dir / "a.xgpp");
  Trainer b(cfg);
  b.load(dir / "a.xgpp");
  const auto probe = pose::training_batch(5, 0, 2, 16, 16);
  EXPECT_TRUE(bitwise_equal(a.generate(probe).image, b.generate(probe).image));
  EXPECT_EQ(b.steps_done(), 1u);
  const LossReport ra = a.train_step(probe), rb = b.train_step(probe);
  EXPECT_EQ(ra.loss_g, rb.loss_g);
  EXPECT_EQ(ra.loss_d, rb.loss_d);
}

TEST(Fit, ResumeReproducesUninterruptedRun) {
  const fs::path full = scratch("fit_full"), part = scratch("fit_part");
  fit(tiny(full));
  RunConfig first = tiny(part);
  first.train.iters = 3;
  fit(first);
  FitOptions opts;
  opts.resume = true;
  const FitResult rest = fit(tiny(part), opts);
  EXPECT_EQ(rest.losses.size(), 3u);
  EXPECT_EQ(slurp(full / "metrics.csv"), slurp(part / "metrics.csv"));
  EXPECT_EQ(slurp(full / "latest.xgpp"), slurp(part / "latest.xgpp"));
  EXPECT_EQ(load_config(part / "config.ini"), tiny(part));
}

TEST(Fit, MetricsCsvHeader) {
  const fs::path dir = scratch("fit_csv");
  RunConfig c = tiny(dir);
  c.train.iters = 2;
  fit(c);
  std::ifstream in(dir / "metrics.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "step,loss_d,loss_g_adv,loss_l1,loss_p,ssim_holdout");
}

TEST(ImageIo, PpmRoundTrip) {
  const fs::path dir = scratch("ppm");
  Rgb8 img{3, 2, {0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255, 9, 8, 7, 6, 5, 4}};
  write_ppm(dir / "a.ppm", img);
  const Rgb8 back = read_ppm(dir / "a.ppm");
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 2u);
  EXPECT_EQ(back.pixels, img.pixels);
  write_png(dir / "a.png", img);
  EXPECT_EQ(slurp(dir / "a.png").substr(1, 3), "PNG");
}
