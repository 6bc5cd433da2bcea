#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "vinet/checkpoint.hpp"
#include "vinet/config.hpp"
#include "vinet/error.hpp"

using namespace vinet;

namespace {

ArchConfig tiny() {
  ArchConfig c;
  c.widths = {8, 16, 32, 64};
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripRestoresEveryParameter) {
  auto dir = oracle::temp_dir("ckpt_rt");
  torch::manual_seed(1);
  VINet a(tiny());
  save_checkpoint(a, {tiny(), 2, 17}, dir / "a.bin");
  torch::manual_seed(2);
  VINet b(tiny());
  auto meta = load_checkpoint(b, dir / "a.bin");
  EXPECT_EQ(meta.stage, 2);
  EXPECT_EQ(meta.iteration, 17);
  auto pa = a->named_parameters();
  auto pb = b->named_parameters();
  for (const auto& item : pa) EXPECT_TRUE(torch::equal(item.value(), pb[item.key()])) << item.key();
}

TEST(Checkpoint, ArchitectureMismatchIsContractError) {
  auto dir = oracle::temp_dir("ckpt_arch");
  VINet a(tiny());
  save_checkpoint(a, {tiny(), 1, 0}, dir / "a.bin");
  ArchConfig other = tiny();
  other.widths[0] = 16;
  VINet b(other);
  EXPECT_THROW(load_checkpoint(b, dir / "a.bin"), ContractError);
  auto [loaded, meta] = load_model(dir / "a.bin");
  EXPECT_EQ(loaded->config(), tiny());
}

TEST(Checkpoint, CorruptFilesAreFormatErrors) {
  auto dir = oracle::temp_dir("ckpt_bad");
  VINet a(tiny());
  save_checkpoint(a, {tiny(), 1, 0}, dir / "a.bin");
  std::filesystem::resize_file(dir / "a.bin", std::filesystem::file_size(dir / "a.bin") / 2);
  VINet b(tiny());
  EXPECT_THROW(load_checkpoint(b, dir / "a.bin"), FormatError);
  std::ofstream(dir / "junk.bin") << "not a checkpoint";
  EXPECT_THROW(read_checkpoint_meta(dir / "junk.bin"), FormatError);
  EXPECT_THROW(read_checkpoint_meta(dir / "missing.bin"), IoError);
}

TEST(Config, ParsesValuesAndComments) {
  auto kv = KeyValueConfig::parse("# comment\nlr = 0.5\n\nname=abc  # trailing\nflag = true\n");
  EXPECT_DOUBLE_EQ(kv.get_double("lr", 0), 0.5);
  EXPECT_EQ(kv.get_string("name", ""), "abc");
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_EQ(kv.get_int("missing", 4), 4);
  EXPECT_THROW(kv.get_int("name", 0), ContractError);
  EXPECT_THROW(kv.check_known({"lr", "name"}), ContractError);
  EXPECT_NO_THROW(kv.check_known({"lr", "name", "flag"}));
}

TEST(Config, ArchMapRoundTrip) {
  ArchConfig c = tiny();
  c.share_reference_encoder = true;
  c.input_shift = {0.5, 0.25, 0.125};
  EXPECT_EQ(ArchConfig::from_map(c.to_map()), c);
}
