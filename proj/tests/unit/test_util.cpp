#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "entfact/config.hpp"
#include "entfact/error.hpp"
#include "entfact/hash.hpp"
#include "entfact/parallel.hpp"
#include "entfact/rng.hpp"
#include "entfact/text.hpp"

using namespace entfact;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformIndexStaysInRangeAndCoversIt) {
  Rng rng(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.uniform_index(7)];
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(1.0, 2.0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 1.0, 0.02);
  EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 2.0, 0.02);
}

TEST(Rng, DerivedSeedsDependOnLabelAndIndex) {
  EXPECT_EQ(derive_seed(1, "split"), derive_seed(1, "split"));
  EXPECT_NE(derive_seed(1, "split"), derive_seed(2, "split"));
  EXPECT_NE(derive_seed(1, "split"), derive_seed(1, "pick"));
  EXPECT_NE(derive_seed(1, "x", 0), derive_seed(1, "x", 1));
}

TEST(Text, NormalizeSurface) {
  EXPECT_EQ(normalize_surface("  Relay \t  Ventures "), "relay ventures");
  EXPECT_EQ(normalize_surface(""), "");
}

TEST(Text, StringOverlapIsMutualSubstringIgnoringCase) {
  EXPECT_TRUE(has_string_overlap("Relay Ventures", "relay ventures fund"));
  EXPECT_TRUE(has_string_overlap("Samsung Ventures", "SAMSUNG"));
  EXPECT_FALSE(has_string_overlap("Samsung", "Relay Ventures"));
}

TEST(Text, TokenizeSplitsPunctuation) {
  EXPECT_EQ(tokenize("Hi, World!"), (std::vector<std::string>{"hi", ",", "world", "!"}));
  EXPECT_TRUE(tokenize("   ").empty());
  EXPECT_EQ(count_words(" a  b\tc\n"), 3u);
}

TEST(Hash, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Parallel, VisitsEveryIndexOnce) {
  std::vector<std::atomic<int>> seen(1000);
  parallel_for(seen.size(), [&](std::size_t i) { seen[i]++; });
  for (auto& s : seen) EXPECT_EQ(s.load(), 1);
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

TEST(Config, ParsesSectionsAndTypes) {
  const auto c = Config::parse(R"(
seed = 7
[paths]
corpus = "data/c.jsonl"  # trailing comment
[train]
learning_rate = 1e-3
use = true
label = "has # hash"
)");
  EXPECT_EQ(c.get_int("seed", 0), 7);
  EXPECT_EQ(c.get_string("paths.corpus"), "data/c.jsonl");
  EXPECT_DOUBLE_EQ(c.get_double("train.learning_rate", 0), 1e-3);
  EXPECT_TRUE(c.get_bool("train.use", false));
  EXPECT_EQ(c.get_string("train.label"), "has # hash");
  EXPECT_EQ(c.get_int("missing", 5), 5);
}

TEST(Config, OverridesReplaceValues) {
  auto c = Config::parse("[train]\nseed = 1\n");
  c.set("train.seed", "9");
  c.set("paths.output_dir", "out");
  EXPECT_EQ(c.get_int("train.seed", 0), 9);
  EXPECT_EQ(c.get_string("paths.output_dir"), "out");
  EXPECT_EQ(c.canonical(), "paths.output_dir = \"out\"\ntrain.seed = 9\n");
}

TEST(Config, RejectsBadLinesAndWrongTypes) {
  EXPECT_THROW(Config::parse("key value"), Error);
  EXPECT_THROW(Config::parse("a = 1\na = 2"), Error);
  EXPECT_THROW(Config::parse("[open"), Error);
  const auto c = Config::parse("a = \"x\"");
  EXPECT_THROW(c.get_int("a", 0), Error);
}
