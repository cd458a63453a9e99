#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Exec {
  int code = -1;
  std::string out;
};

Exec run(const std::string& args) {
  Exec r;
  const std::string cmd = std::string(XING_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (const std::size_t n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST(Cli, BenchReportsPyramidSizes) {
  const Exec r = run("bench --h 16 --w 16 --reps 1 --channels 8");
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* s : {"256^2", "64^2", "36^2", "9^2", "16x16", "8x8", "6x6", "3x3"}) {
    EXPECT_NE(r.out.find(s), std::string::npos) << s << "\n" << r.out;
  }
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("train --config /nonexistent/x.ini").code, 2);
  EXPECT_EQ(run("bench --pyramid 2,3").code, 1);
  EXPECT_EQ(run("eval --ckpt /nonexistent/latest.xgpp").code, 2);
}

TEST(Cli, BadConfigIsInvalidInput) {
  const fs::path p = fs::temp_directory_path() / "xing_cli_bad.ini";
  std::ofstream(p) << "[model]\nblocks = many\n";
  const Exec r = run("train --config " + p.string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("line 2"), std::string::npos) << r.out;
}

TEST(Cli, TrainGenerateEval) {
  const fs::path dir = fs::temp_directory_path() / "xing_cli_run";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "run.ini") << "[model]\nblocks = 1\nchannels = 4\nheight = 16\nwidth = 16\n"
                                    "intermediates = 2\n[data]\nholdout = 2\n[train]\niters = 2\n"
                                    "batch = 2\ncheckpoint_dir = " << (dir / "out").string() << "\n";
  const Exec t = run("train --config " + (dir / "run.ini").string());
  ASSERT_EQ(t.code, 0) << t.out;
  const std::string ckpt = (dir / "out" / "latest.xgpp").string();
  const Exec g = run("generate --ckpt " + ckpt + " --seed 3 --out " + (dir / "img").string() + " --png");
  ASSERT_EQ(g.code, 0) << g.out;
  EXPECT_TRUE(fs::exists(dir / "img" / "generated.png"));
  EXPECT_TRUE(fs::exists(dir / "img" / "attention_4.png"));
  const Exec e = run("eval --ckpt " + ckpt + " --n 2");
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("ssim copy baseline"), std::string::npos);
  const Exec d = run("dump-data --out " + (dir / "data").string() + " --n 2 --h 32 --w 16");
  ASSERT_EQ(d.code, 0) << d.out;
  EXPECT_TRUE(fs::exists(dir / "data" / "manifest.txt"));
}
