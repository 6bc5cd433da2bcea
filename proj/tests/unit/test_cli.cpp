#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args, const fs::path& cwd = fs::current_path()) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" VINET_CLI "' " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe) != nullptr) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST(Cli, ContractErrorsExitTwo) {
  auto dir = vinet::oracle::temp_dir("cli_contract");
  auto r = run("make-data --out " + (dir / "d").string() + " --size 50");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.output.rfind("vinet: error[contract]: ", 0), 0u) << r.output;
  EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 1);
  EXPECT_EQ(run("train --stage 3 --data x --out y").code, 2);
  EXPECT_EQ(run("nonsense").code, 2);
}

TEST(Cli, IoErrorsExitThree) {
  auto dir = vinet::oracle::temp_dir("cli_io");
  auto r = run("infer --ckpt missing.bin --frames f --masks m --out o", dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(r.output.rfind("vinet: error[io]: ", 0), 0u) << r.output;
}

TEST(Cli, ConfigSearchOrder) {
  auto dir = vinet::oracle::temp_dir("cli_config");
  ASSERT_EQ(run("make-data --out data --clips 1 --frames 6 --size 32 --seed 2", dir).code, 0);
  // ./vinet.cfg is picked up when --config is absent; an unknown key proves it was read.
  std::ofstream(dir / "vinet.cfg") << "bogus_key = 1\n";
  auto r = run("train --stage 1 --data data --out run --iterations 0", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("bogus_key"), std::string::npos) << r.output;
  // --config wins over ./vinet.cfg.
  std::ofstream(dir / "good.cfg") << "width1 = 8\nwidth2 = 16\nwidth3 = 32\nwidth4 = 64\nheight = 32\nwidth = 32\n";
  r = run("train --stage 1 --config good.cfg --data data --out run --iterations 1", dir);
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.bin"));
  EXPECT_TRUE(fs::exists(dir / "run" / "loss.csv"));
}

TEST(Cli, EndToEnd) {
  auto dir = vinet::oracle::temp_dir("cli_e2e");
  std::ofstream(dir / "tiny.cfg") << "width1 = 8\nwidth2 = 16\nwidth3 = 32\nwidth4 = 64\nheight = 32\nwidth = 32\nbatch_size = 1\n";
  ASSERT_EQ(run("make-data --out data --clips 2 --frames 6 --size 32 --seed 1", dir).code, 0);
  ASSERT_EQ(run("train --stage 1 --config tiny.cfg --data data --out s1 --iterations 1", dir).code, 0);
  ASSERT_EQ(run("train --stage 2 --config tiny.cfg --data data --out s2 --ckpt s1/checkpoint.bin --iterations 1", dir).code, 0);
  ASSERT_EQ(run("make-masks --kind arbitrary --seed 4 --frames 6 --height 32 --width 32 --out masks", dir).code, 0);
  for (const char* clip : {"clip000", "clip001"}) {
    auto r = run(std::string("infer --ckpt s2/checkpoint.bin --frames data/") + clip +
                     "/frames --masks masks --out pred/" + clip, dir);
    ASSERT_EQ(r.code, 0) << r.output;
  }
  EXPECT_TRUE(fs::exists(dir / "pred/clip000/frames/00005.png"));
  EXPECT_TRUE(fs::exists(dir / "pred/clip000/flow/00005.flo"));
  for (const char* m : {"warp", "fid", "psnr"}) {
    auto r = run(std::string("eval --metric ") + m + " --data data --pred pred --out " + m + ".csv", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    std::ifstream csv(dir / (std::string(m) + ".csv"));
    std::string line;
    int lines = 0;
    while (std::getline(csv, line)) ++lines;
    EXPECT_EQ(lines, 4);
  }
  auto r = run("compare --inputs data/clip000/frames pred/clip000/frames --masks masks --out cmp", dir);
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(run("cache-flow --data data", dir).code, 0);
}
