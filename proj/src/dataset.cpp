#include "acr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "acr/array_io.hpp"
#include "acr/error.hpp"
#include "acr/rng.hpp"

namespace acr {

namespace {

constexpr std::uint64_t kClassStream = 0x636c6173;
constexpr std::uint64_t kSampleStream = 0x73616d70;

Index values_per_block(Index num_attributes) { return num_attributes / kAttributeBlocks; }

Index integer_power(Index base, Index exp) {
  Index out = 1;
  for (Index i = 0; i < exp; ++i) out *= base;
  return out;
}

}  // namespace

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::TestSeen: return "test_seen";
    case Split::TestUnseen: return "test_unseen";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "test_seen") return Split::TestSeen;
  if (name == "test_unseen") return Split::TestUnseen;
  throw FormatError("unknown split tag '" + name + "'");
}

std::vector<Index> ZslDataset::indices(Split split) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(static_cast<Index>(i));
  }
  return out;
}

void ZslDataset::validate() const {
  semantics.validate();
  if (semantics.seen_classes().empty() || semantics.unseen_classes().empty()) {
    throw ArgumentError("dataset: both seen and unseen classes are required");
  }
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= semantics.num_classes()) throw ArgumentError("dataset: label out of range");
    const bool seen = semantics.seen[static_cast<std::size_t>(s.label)];
    if ((s.split == Split::TestUnseen) == seen) {
      throw ArgumentError("dataset: sample split disagrees with its class partition");
    }
  }
}

void SyntheticConfig::validate() const {
  if (num_classes < 2 || num_seen < 1 || num_seen >= num_classes) {
    throw ArgumentError("synthetic: need 1 <= num_seen < num_classes");
  }
  if (num_attributes < 4 || num_attributes % kAttributeBlocks != 0) {
    throw ArgumentError("synthetic: num_attributes must be a multiple of 4 and at least 4");
  }
  const Index v = values_per_block(num_attributes);
  if (v < 2 || num_classes > integer_power(v, kAttributeBlocks)) {
    throw ArgumentError("synthetic: not enough distinct attribute combinations for the class count");
  }
  if (samples_per_class < 2) throw ArgumentError("synthetic: samples_per_class must be at least 2");
  if (image_size < 8 || image_size % 2 != 0 || channels < 1) throw ArgumentError("synthetic: bad image geometry");
  if (!(noise >= 0)) throw ArgumentError("synthetic: noise must be nonnegative");
  if (!(test_seen_fraction > 0 && test_seen_fraction < 1)) throw ArgumentError("synthetic: test_seen_fraction in (0,1)");
}

double palette(Index value, Index values, Index channel) {
  const double phase = static_cast<double>(value) / static_cast<double>(values) + static_cast<double>(channel) / 3.0;
  return 0.5 + 0.45 * std::cos(2.0 * std::numbers::pi * phase);
}

bool texture_on(Index block, Index y, Index x) {
  switch (block % kAttributeBlocks) {
    case 0: return true;
    case 1: return y % 2 == 0;
    case 2: return x % 2 == 0;
    default: return (x + y) % 2 == 0;
  }
}

Index block_side(Index image_size) { return (image_size / 2) * 3 / 4; }

Image render_image(const std::vector<Index>& block_values, Index values, Index image_size, Index channels, double noise,
                   Rng& rng) {
  Image img(image_size, image_size, channels);
  std::fill(img.pixels.begin(), img.pixels.end(), kBackground);
  const Index quadrant = image_size / 2;
  const Index side = block_side(image_size);
  for (Index b = 0; b < kAttributeBlocks; ++b) {
    const Index oy = (b / 2) * quadrant + static_cast<Index>(rng.below(static_cast<std::uint64_t>(quadrant - side + 1)));
    const Index ox = (b % 2) * quadrant + static_cast<Index>(rng.below(static_cast<std::uint64_t>(quadrant - side + 1)));
    const Index v = block_values[static_cast<std::size_t>(b)];
    for (Index y = oy; y < oy + side; ++y) {
      for (Index x = ox; x < ox + side; ++x) {
        if (!texture_on(b, y, x)) continue;
        for (Index c = 0; c < channels; ++c) img.at(y, x, c) = palette(v, values, c);
      }
    }
  }
  if (noise > 0) {
    for (double& p : img.pixels) p += noise * rng.normal();
  }
  return img;
}

ZslDataset make_synthetic_zsl(const SyntheticConfig& config) {
  config.validate();
  const Index values = values_per_block(config.num_attributes);
  Rng class_rng(config.seed, kClassStream);

  // Seen classes are chosen greedily so that every pair of attribute values
  // from different blocks co-occurs as evenly as possible; unseen classes are
  // then drawn from the remaining combinations.
  std::vector<std::vector<Index>> pool;
  {
    const Index total = integer_power(values, kAttributeBlocks);
    for (Index code = 0; code < total; ++code) {
      std::vector<Index> combo(kAttributeBlocks);
      Index rest = code;
      for (auto& v : combo) {
        v = rest % values;
        rest /= values;
      }
      pool.push_back(std::move(combo));
    }
  }
  for (std::size_t i = pool.size(); i > 1; --i) {
    std::swap(pool[i - 1], pool[static_cast<std::size_t>(class_rng.below(i))]);
  }

  const Index a = config.num_attributes;
  Matrix cooccur = Matrix::Zero(a, a);  // diagonal holds single counts
  auto cost = [&](const std::vector<Index>& combo) {
    double c = 0;
    for (Index b = 0; b < kAttributeBlocks; ++b) {
      const Index x = b * values + combo[static_cast<std::size_t>(b)];
      c += cooccur(x, x);
      for (Index b2 = b + 1; b2 < kAttributeBlocks; ++b2) c += cooccur(x, b2 * values + combo[static_cast<std::size_t>(b2)]);
    }
    return c;
  };
  std::vector<std::vector<Index>> combos;
  std::vector<bool> used(pool.size(), false);
  for (Index n = 0; n < config.num_seen; ++n) {
    std::size_t best = pool.size();
    double best_cost = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      const double c = cost(pool[i]);
      if (best == pool.size() || c < best_cost) {
        best = i;
        best_cost = c;
      }
    }
    used[best] = true;
    for (Index b = 0; b < kAttributeBlocks; ++b) {
      const Index x = b * values + pool[best][static_cast<std::size_t>(b)];
      for (Index b2 = 0; b2 < kAttributeBlocks; ++b2) cooccur(x, b2 * values + pool[best][static_cast<std::size_t>(b2)]) += 1;
    }
    combos.push_back(pool[best]);
  }
  for (std::size_t i = 0; i < pool.size() && static_cast<Index>(combos.size()) < config.num_classes; ++i) {
    if (!used[i]) combos.push_back(pool[i]);
  }

  // Classes are listed in a seeded random order so seen ids are interleaved.
  std::vector<Index> order(static_cast<std::size_t>(config.num_classes));
  for (Index i = 0; i < config.num_classes; ++i) order[static_cast<std::size_t>(i)] = i;
  for (Index i = config.num_classes - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(class_rng.below(static_cast<std::uint64_t>(i + 1)))]);
  }
  std::vector<std::vector<Index>> shuffled(combos.size());
  std::vector<bool> seen(static_cast<std::size_t>(config.num_classes), false);
  for (Index i = 0; i < config.num_classes; ++i) {
    const auto slot = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
    shuffled[slot] = combos[static_cast<std::size_t>(i)];
    seen[slot] = i < config.num_seen;
  }
  combos = std::move(shuffled);

  ZslDataset data;
  data.semantics.attributes = Matrix::Zero(config.num_classes, config.num_attributes);
  for (Index c = 0; c < config.num_classes; ++c) {
    for (Index b = 0; b < kAttributeBlocks; ++b) {
      data.semantics.attributes(c, b * values + combos[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)]) = 1.0;
    }
  }
  data.semantics.seen = seen;

  const auto n_test = std::max<Index>(1, static_cast<Index>(std::lround(config.test_seen_fraction * static_cast<double>(config.samples_per_class))));
  const Rng sample_root(config.seed, kSampleStream);
  for (Index c = 0; c < config.num_classes; ++c) {
    for (Index i = 0; i < config.samples_per_class; ++i) {
      Rng rng = sample_root.substream(static_cast<std::uint64_t>(c * config.samples_per_class + i));
      Sample s;
      s.image = render_image(combos[static_cast<std::size_t>(c)], values, config.image_size, config.channels, config.noise, rng);
      s.label = c;
      if (!seen[static_cast<std::size_t>(c)]) {
        s.split = Split::TestUnseen;
      } else {
        s.split = i < n_test ? Split::TestSeen : Split::Train;
      }
      data.samples.push_back(std::move(s));
    }
  }
  data.validate();
  return data;
}

void save_dataset(const ZslDataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  std::filesystem::create_directories(dir);
  const auto& first = dataset.samples.front().image;
  NdArray images;
  images.shape = {static_cast<std::uint32_t>(dataset.samples.size()), static_cast<std::uint32_t>(first.height),
                  static_cast<std::uint32_t>(first.width), static_cast<std::uint32_t>(first.channels)};
  images.data.reserve(images.element_count());
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : dataset.samples) {
    if (s.image.height != first.height || s.image.width != first.width || s.image.channels != first.channels) {
      throw ArgumentError("save_dataset: images differ in shape");
    }
    images.data.insert(images.data.end(), s.image.pixels.begin(), s.image.pixels.end());
    samples.push_back({{"label", s.label}, {"split", to_string(s.split)}});
  }
  nlohmann::json classes = nlohmann::json::array();
  for (Index c = 0; c < dataset.semantics.num_classes(); ++c) {
    classes.push_back({{"id", c}, {"seen", static_cast<bool>(dataset.semantics.seen[static_cast<std::size_t>(c)])}});
  }
  const nlohmann::json manifest = {{"format", "acr-zsl-dataset"},
                                   {"version", 1},
                                   {"image", {{"height", first.height}, {"width", first.width}, {"channels", first.channels}}},
                                   {"num_attributes", dataset.semantics.num_attributes()},
                                   {"attributes", "attributes.arr"},
                                   {"images", "images.arr"},
                                   {"classes", classes},
                                   {"samples", samples}};
  write_array(dir / "images.arr", images);
  write_array(dir / "attributes.arr", to_array(dataset.semantics.attributes));
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

ZslDataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "acr-zsl-dataset") throw FormatError("dataset manifest: unexpected format tag");
  try {
    ZslDataset data;
    data.semantics.attributes = to_matrix(read_array(dir / manifest.at("attributes").get<std::string>()));
    const auto& classes = manifest.at("classes");
    data.semantics.seen.assign(classes.size(), false);
    for (const auto& c : classes) {
      const auto id = c.at("id").get<std::size_t>();
      if (id >= classes.size()) throw FormatError("dataset manifest: class id out of range");
      data.semantics.seen[id] = c.at("seen").get<bool>();
    }
    const NdArray images = read_array(dir / manifest.at("images").get<std::string>());
    const auto& samples = manifest.at("samples");
    if (images.shape.size() != 4 || images.shape[0] != samples.size()) throw FormatError("dataset: image array shape");
    const Index h = images.shape[1];
    const Index w = images.shape[2];
    const Index ch = images.shape[3];
    const std::size_t stride = static_cast<std::size_t>(h * w * ch);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Sample s;
      s.image = Image(h, w, ch);
      std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * stride), stride, s.image.pixels.begin());
      s.label = samples[i].at("label").get<Index>();
      s.split = split_from_string(samples[i].at("split").get<std::string>());
      data.samples.push_back(std::move(s));
    }
    data.validate();
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
}

}  // namespace acr
