#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "nets.hpp"
#include "support.hpp"
#include "xdn/checkpoint.hpp"

using namespace xdn;
using namespace xdn::nn;
using testing_support::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

CheckpointMeta sample_meta() {
  CheckpointMeta m;
  m.role = "restoration";
  m.seed = 0xfeedfacecafebeefULL;
  m.loss_history = {0.1, 0.01, 1.0 / 3.0};
  m.extra["lambda"] = "0.1";
  return m;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir tmp("ck");
  const auto m = nets::small_unet(4);
  save_checkpoint(tmp / "a.xdnz", m, sample_meta());
  const auto back = load_checkpoint(tmp / "a.xdnz");
  EXPECT_EQ(back.meta, sample_meta());
  EXPECT_EQ(back.model.config(), m.config());
  ASSERT_EQ(back.model.parameters().size(), m.parameters().size());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(back.model.parameters()[i].name, m.parameters()[i].name);
    EXPECT_EQ(back.model.parameters()[i].var->value(), m.parameters()[i].var->value());
  }
  EXPECT_EQ(back.model.checksum(), m.checksum());
  const Tensor x({1, 1, 16, 16}, 0.3);
  EXPECT_EQ(back.model.infer(x), m.infer(x));
  save_checkpoint(tmp / "b.xdnz", back.model, back.meta);
  EXPECT_EQ(slurp(tmp / "a.xdnz"), slurp(tmp / "b.xdnz"));
  EXPECT_EQ(slurp(tmp / "a.xdnz").substr(0, 4), "XDNZ");
}

TEST(Checkpoint, RejectsCorruption) {
  TempDir tmp("ck");
  save_checkpoint(tmp / "good.xdnz", nets::small_unet(5), sample_meta());
  const auto good = slurp(tmp / "good.xdnz");

  spit(tmp / "t.xdnz", good.substr(0, good.size() - 9));
  EXPECT_THROW(load_checkpoint(tmp / "t.xdnz"), CheckpointError);
  spit(tmp / "t2.xdnz", good.substr(0, 10));
  EXPECT_THROW(load_checkpoint(tmp / "t2.xdnz"), CheckpointError);

  auto flipped = good;
  flipped[flipped.size() - 100] ^= 0x01;
  spit(tmp / "f.xdnz", flipped);
  EXPECT_THROW(load_checkpoint(tmp / "f.xdnz"), CheckpointError);

  auto magic = good;
  magic[0] = 'Y';
  spit(tmp / "m.xdnz", magic);
  EXPECT_THROW(load_checkpoint(tmp / "m.xdnz"), CheckpointError);

  auto version = good;
  version[4] = 9;
  spit(tmp / "v.xdnz", version);
  EXPECT_THROW(load_checkpoint(tmp / "v.xdnz"), CheckpointError);

  spit(tmp / "x.xdnz", good + "x");
  EXPECT_THROW(load_checkpoint(tmp / "x.xdnz"), CheckpointError);

  // Rename a manifest entry without touching its length.
  auto renamed = good;
  const auto pos = renamed.find("inc.0.weight");
  ASSERT_NE(pos, std::string::npos);
  renamed[pos] = 'x';
  spit(tmp / "r.xdnz", renamed);
  EXPECT_THROW(load_checkpoint(tmp / "r.xdnz"), CheckpointError);

  EXPECT_THROW(load_checkpoint(tmp / "absent.xdnz"), CheckpointError);
}

TEST(Checkpoint, RejectsUnrepresentableOrUnconfiguredModels) {
  TempDir tmp("ck");
  auto m = nets::small_unet(6);
  m.parameters()[0].var->mutable_value()[0] = 0.1;  // not a float
  EXPECT_THROW(save_checkpoint(tmp / "a.xdnz", m, {}), CheckpointError);
  EXPECT_THROW(save_checkpoint(tmp / "b.xdnz", nets::single_sigmoid(2.0), {}), CheckpointError);
  EXPECT_FALSE(std::filesystem::exists(tmp / "a.xdnz"));
}
