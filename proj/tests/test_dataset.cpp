#include "acr/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "acr/error.hpp"

namespace acr {
namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.samples_per_class = 6;
  return c;
}

TEST(Synthetic, DeterministicInSeed) {
  const ZslDataset a = make_synthetic_zsl(small_config());
  const ZslDataset b = make_synthetic_zsl(small_config());
  ASSERT_EQ(a.samples.size(), b.samples.size());
  EXPECT_EQ(a.semantics.attributes, b.semantics.attributes);
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].image.pixels, b.samples[i].image.pixels);
  SyntheticConfig other = small_config();
  other.seed = 8;
  EXPECT_NE(make_synthetic_zsl(other).samples.front().image.pixels, a.samples.front().image.pixels);
}

TEST(Synthetic, PartitionAndSplits) {
  const SyntheticConfig c = small_config();
  const ZslDataset d = make_synthetic_zsl(c);
  EXPECT_EQ(d.semantics.seen_classes().size(), 15u);
  EXPECT_EQ(d.semantics.unseen_classes().size(), 5u);
  EXPECT_EQ(d.samples.size(), static_cast<std::size_t>(c.num_classes * c.samples_per_class));
  for (const auto& s : d.samples) {
    EXPECT_EQ(s.split == Split::TestUnseen, !d.semantics.seen[static_cast<std::size_t>(s.label)]);
  }
  EXPECT_FALSE(d.indices(Split::TestSeen).empty());
  EXPECT_FALSE(d.indices(Split::Train).empty());
}

TEST(Synthetic, ClassVectorsAreOneHotPerBlockAndDistinct) {
  const ZslDataset d = make_synthetic_zsl(small_config());
  const Matrix& a = d.semantics.attributes;
  std::set<std::vector<double>> distinct;
  for (Index c = 0; c < a.rows(); ++c) {
    for (Index b = 0; b < kAttributeBlocks; ++b) EXPECT_EQ(a.row(c).segment(b * 4, 4).sum(), 1.0);
    distinct.insert(std::vector<double>(a.row(c).data(), a.row(c).data() + a.cols()));
  }
  EXPECT_EQ(distinct.size(), static_cast<std::size_t>(a.rows()));
}

TEST(Synthetic, SeenClassesCoverEveryAttributeEvenly) {
  const ZslDataset d = make_synthetic_zsl(small_config());
  RowVector counts = RowVector::Zero(d.semantics.num_attributes());
  for (Index c : d.semantics.seen_classes()) counts += d.semantics.attributes.row(c);
  EXPECT_GE(counts.minCoeff(), 3.0);
  EXPECT_LE(counts.maxCoeff() - counts.minCoeff(), 1.0);
}

TEST(Render, NoiselessImageEncodesBlockValues) {
  // Each quadrant's summed color determines its value: the painted pixel
  // count is the same wherever the square lands.
  const Index values = 4, size = 32, q = size / 2;
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Index> truth;
    for (Index b = 0; b < kAttributeBlocks; ++b) truth.push_back(static_cast<Index>(rng.below(values)));
    const Image img = render_image(truth, values, size, 3, 0.0, rng);
    for (Index b = 0; b < kAttributeBlocks; ++b) {
      Vector excess = Vector::Zero(3);
      for (Index y = (b / 2) * q; y < (b / 2 + 1) * q; ++y) {
        for (Index x = (b % 2) * q; x < (b % 2 + 1) * q; ++x) {
          for (Index c = 0; c < 3; ++c) excess(c) += img.at(y, x, c) - kBackground;
        }
      }
      Index best = -1;
      double best_err = 1e9;
      for (Index v = 0; v < values; ++v) {
        Vector expected(3);
        const Index side = block_side(size);
        const double count = b == 0 ? side * side : side * side / 2.0;
        for (Index c = 0; c < 3; ++c) expected(c) = count * (palette(v, values, c) - kBackground);
        const double err = (excess - expected).norm();
        if (err < best_err) {
          best_err = err;
          best = v;
        }
      }
      EXPECT_EQ(best, truth[static_cast<std::size_t>(b)]);
      EXPECT_LT(best_err, 1e-9);
    }
  }
}

TEST(Render, TexturesDifferPerBlock) {
  EXPECT_TRUE(texture_on(0, 1, 1));
  EXPECT_FALSE(texture_on(1, 1, 0));
  EXPECT_TRUE(texture_on(1, 0, 1));
  EXPECT_FALSE(texture_on(2, 0, 1));
  EXPECT_TRUE(texture_on(3, 1, 1));
  EXPECT_FALSE(texture_on(3, 0, 1));
}

TEST(Render, PaletteIsInUnitRangeAndDistinct) {
  for (Index v = 0; v < 4; ++v) {
    for (Index w = v + 1; w < 4; ++w) {
      double diff = 0;
      for (Index c = 0; c < 3; ++c) diff += std::abs(palette(v, 4, c) - palette(w, 4, c));
      EXPECT_GT(diff, 0.1);
    }
    for (Index c = 0; c < 3; ++c) {
      EXPECT_GE(palette(v, 4, c), 0.0);
      EXPECT_LE(palette(v, 4, c), 1.0);
    }
  }
}

TEST(SyntheticConfig, Validation) {
  SyntheticConfig c;
  EXPECT_NO_THROW(c.validate());
  c.num_attributes = 15;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = SyntheticConfig{};
  c.num_seen = 20;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = SyntheticConfig{};
  c.num_attributes = 4;  // one value per block cannot separate classes
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(DatasetIo, RoundTripIsExact) {
  const auto dir = std::filesystem::temp_directory_path() / "acr_dataset_io_test";
  std::filesystem::remove_all(dir);
  const ZslDataset d = make_synthetic_zsl(small_config());
  save_dataset(d, dir);
  const ZslDataset e = load_dataset(dir);
  EXPECT_EQ(e.semantics.attributes, d.semantics.attributes);
  EXPECT_EQ(e.semantics.seen, d.semantics.seen);
  ASSERT_EQ(e.samples.size(), d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    EXPECT_EQ(e.samples[i].label, d.samples[i].label);
    EXPECT_EQ(e.samples[i].split, d.samples[i].split);
    EXPECT_EQ(e.samples[i].image.pixels, d.samples[i].image.pixels);
  }
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_dataset(dir), FormatError);
}

}  // namespace
}  // namespace acr
