#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "acr/backbone.hpp"
#include "acr/moae.hpp"
#include "acr/rng.hpp"

namespace acr {

enum class Split { Train, TestSeen, TestUnseen };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct Sample {
  Image image;
  Index label = 0;
  Split split = Split::Train;
};

struct ZslDataset {
  std::vector<Sample> samples;
  ClassSemantics semantics;

  std::vector<Index> indices(Split split) const;
  /// Disjoint seen/unseen partition; train and test-seen only hold seen
  /// classes, test-unseen only unseen ones.
  void validate() const;
};

/// Synthetic attribute benchmark.
///
/// Attributes are split into four blocks, one per image quadrant; block b
/// offers A/4 mutually exclusive values, so every class vector is one-hot
/// within each block. Value v of block b is rendered as a square at a
/// jittered position inside quadrant b, with hue v and a texture that
/// identifies the block (solid, horizontal stripes, vertical stripes,
/// checkerboard), on a mid-gray background. Gaussian pixel noise is added. Seen classes are
/// chosen so attribute pairs co-occur evenly and every attribute is seen.
struct SyntheticConfig {
  Index num_classes = 20;
  Index num_seen = 15;
  Index num_attributes = 16;
  Index samples_per_class = 60;
  double noise = 0.1;
  std::uint64_t seed = 7;
  Index image_size = 32;
  Index channels = 3;
  double test_seen_fraction = 0.2;

  void validate() const;
};

inline constexpr Index kAttributeBlocks = 4;
/// Background intensity outside the attribute squares.
inline constexpr double kBackground = 0.5;

/// Color of `value` out of `values` in `channel`; hues are evenly spaced.
double palette(Index value, Index values, Index channel);
/// Whether the texture of `block` paints pixel (y, x); off pixels keep the background.
bool texture_on(Index block, Index y, Index x);
/// Side of the attribute square inside each quadrant.
Index block_side(Index image_size);

/// Renders one image; `block_values[b]` is the active value of block b.
Image render_image(const std::vector<Index>& block_values, Index values_per_block, Index image_size, Index channels,
                   double noise, Rng& rng);

ZslDataset make_synthetic_zsl(const SyntheticConfig& config);

/// Directory layout: manifest.json, images.arr (N x H x W x C), attributes.arr (C x A).
void save_dataset(const ZslDataset& dataset, const std::filesystem::path& dir);
ZslDataset load_dataset(const std::filesystem::path& dir);

}  // namespace acr
