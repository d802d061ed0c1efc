#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "attnpool/config.hpp"
#include "attnpool/errors.hpp"

using namespace attnpool;

TEST(Config, ParsesSectionsAndComments) {
  const RunConfig c = parse_config(
      "# planted run\n"
      "seed = 42\n"
      "[task]\n"
      "n1 = 5   # rows\n"
      "signal_strength = 2.5\n"
      "multi_label = true\n"
      "[train]\n"
      "head = rank_p\n"
      "rank = 3\n"
      "loss = sigmoid\n"
      "[sketch]\n"
      "dim = 128\n"
      "signed_sqrt = true\n");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.task.n1, 5u);
  EXPECT_EQ(c.task.signal_strength, 2.5);
  EXPECT_TRUE(c.task.multi_label);
  EXPECT_EQ(c.train.head, HeadKind::kRankP);
  EXPECT_EQ(c.train.rank, 3u);
  EXPECT_EQ(c.train.loss, LossKind::kSigmoid);
  EXPECT_EQ(c.train.sketch_dim, 128u);
  EXPECT_TRUE(c.train.cbp.signed_sqrt);
  EXPECT_EQ(c.task_config().seed, 42u);
  EXPECT_EQ(c.train_config().seed, 42u);
}

TEST(Config, RejectsUnknownDuplicateAndMalformed) {
  EXPECT_THROW((void)parse_config("[task]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW((void)parse_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW((void)parse_config("[task]\nn1 = three\n"), ConfigError);
  EXPECT_THROW((void)parse_config("[task\nn1 = 3\n"), ConfigError);
  EXPECT_THROW((void)parse_config("just words\n"), ConfigError);
  EXPECT_THROW((void)parse_config("[train]\nhead = bilinear\n"), ConfigError);
  EXPECT_THROW(parse_config("[train]\nmomentum = 1.5\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("[task]\nclasses = 40\n").validate(), ConfigError);
  try {
    (void)parse_config("seed = 1\n\n[task]\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos) << e.what();
  }
}

TEST(Config, SerializeRoundTripsExactly) {
  RunConfig c;
  c.seed = 123;
  c.task.signal_strength = 0.1 + 0.2;
  c.train.lr = 1.0 / 3.0;
  c.train.head = HeadKind::kCbp;
  c.train.cbp.l2_normalize = true;
  const std::string text = serialize_config(c);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.task.signal_strength, 0.1 + 0.2);
  EXPECT_EQ(back.train.lr, 1.0 / 3.0);
  EXPECT_EQ(text.rfind("seed = 123\n", 0), 0u);
  for (const auto& key : config_keys()) EXPECT_EQ(get_value(back, key), get_value(c, key)) << key;
}

TEST(Config, ResolutionIsPure) {
  const std::string text = "[train]\nepochs = 9\n";
  EXPECT_EQ(serialize_config(parse_config(text)), serialize_config(parse_config(text)));
}

TEST(Config, Overrides) {
  RunConfig c;
  apply_override(c, "train.epochs=4");
  apply_override(c, "task.f = 16");
  EXPECT_EQ(c.train.epochs, 4u);
  EXPECT_EQ(c.task.f, 16u);
  EXPECT_THROW(apply_override(c, "epochs=4"), ConfigError);
  EXPECT_THROW(apply_override(c, "train.epochs"), ConfigError);
  EXPECT_EQ(get_value(c, "train.epochs"), "4");
}

TEST(Config, SeedFromEnvironment) {
  RunConfig c;
  ::unsetenv("ATTNPOOL_SEED");
  apply_seed_env(c);
  EXPECT_EQ(c.seed, 7u);
  ::setenv("ATTNPOOL_SEED", "99", 1);
  apply_seed_env(c);
  EXPECT_EQ(c.seed, 99u);
  ::setenv("ATTNPOOL_SEED", "x", 1);
  EXPECT_THROW(apply_seed_env(c), ConfigError);
  ::unsetenv("ATTNPOOL_SEED");
}

TEST(Config, LoadFile) {
  const auto path = std::filesystem::temp_directory_path() / "attnpool_config_test.txt";
  {
    std::ofstream os(path);
    os << "[train]\nepochs = 2\n";
  }
  RunConfig base;
  base.seed = 5;
  const RunConfig c = load_config(path, base);
  EXPECT_EQ(c.train.epochs, 2u);
  EXPECT_EQ(c.seed, 5u);
  std::filesystem::remove(path);
  EXPECT_THROW((void)load_config(path), IoError);
}

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(3.0), "3");
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
  const double v = 0.1 + 0.2;
  EXPECT_EQ(std::stod(format_number(v)), v);
}
