#include <gtest/gtest.h>

#include "genrec/config.hpp"
#include "test_util.hpp"

using namespace genrec;

TEST(Config, DefaultsRoundTripThroughIni) {
  const auto c = default_config();
  const auto back = parse_config(c.to_ini());
  EXPECT_EQ(back.to_ini(), c.to_ini());
  EXPECT_EQ(back.fingerprint(), c.fingerprint());
  EXPECT_EQ(c.fingerprint().size(), 16u);
}

TEST(Config, OverridesAndSeedDerivation) {
  const auto c = parse_config("[general]\nseed = 7\n[model]\nd_model = 64\n[train]\nlr = 0.01\ngct = false\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.model.d_model, 64);
  EXPECT_DOUBLE_EQ(c.train.optim.lr, 0.01);
  EXPECT_FALSE(c.train.gct);
  EXPECT_EQ(c.index.seed, 7u);
  EXPECT_EQ(c.synth.seed, 7u);
  EXPECT_EQ(c.model.seed, hash_combine(7, 2));
  EXPECT_NE(c.train.seed, c.anneal.seed);
  // An explicit key wins over the derived seed regardless of order.
  auto d = default_config();
  d.apply_seed(7);
  EXPECT_EQ(d.model.seed, c.model.seed);
  EXPECT_NE(default_config().fingerprint(), c.fingerprint());
}

TEST(Config, Rejections) {
  EXPECT_GENREC_ERROR(parse_config("[model]\nwidth = 3\n"), "invalid_config");
  EXPECT_GENREC_ERROR(parse_config("[nowhere]\nx = 1\n"), "invalid_config");
  EXPECT_GENREC_ERROR(parse_config("[model]\nd_model = many\n"), "invalid_config");
  EXPECT_GENREC_ERROR(parse_config("[train]\ngct = maybe\n"), "invalid_config");
  EXPECT_GENREC_ERROR(parse_config("[index]\ncomposition = both\n"), "invalid_config");
  EXPECT_GENREC_ERROR(parse_config("not ini at all [\n"), "invalid_config");
  EXPECT_GENREC_ERROR(parse_config("[eval]\nks = 5,40\nbeam = 20\n"), "invalid_config");
  EXPECT_GENREC_ERROR(load_config("/nonexistent/genrec.ini"), "io_error");
}

TEST(Config, AblationPlan) {
  const auto plan = parse_ablation_plan("a:unit:1:0, b:semantic:0:1:2:3", 4, 4);
  ASSERT_EQ(plan.size(), 2u);
  EXPECT_EQ(plan[0].name, "a");
  EXPECT_EQ(plan[0].depth_s, 4);
  EXPECT_TRUE(plan[0].gct);
  EXPECT_FALSE(plan[0].aat);
  EXPECT_EQ(plan[1].composition, IndexComposition::semantic);
  EXPECT_FALSE(plan[1].gct);
  EXPECT_EQ(plan[1].depth_s, 2);
  EXPECT_EQ(plan[1].depth_b, 3);
  EXPECT_GENREC_ERROR(parse_ablation_plan("a:unit:1", 4, 4), "invalid_config");
  const auto c = parse_config("[ablate]\nvariants = x:random:1:1\nseeds = 4,5\n");
  EXPECT_EQ(c.ablation.size(), 1u);
  EXPECT_EQ(c.ablation_seeds, (std::vector<uint64_t>{4, 5}));
}
