#include "acr/backbone.hpp"

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "acr/error.hpp"
#include "acr/model.hpp"
#include "acr/ops.hpp"
#include "acr/rng.hpp"

namespace acr {
namespace {

Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

Image random_image(Index h, Index w, Index c, Rng& rng) {
  Image img(h, w, c);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

TEST(Patchify, ShapeAndLayout) {
  Image img(4, 4, 1);
  for (Index y = 0; y < 4; ++y) {
    for (Index x = 0; x < 4; ++x) img.at(y, x, 0) = static_cast<double>(10 * y + x);
  }
  const Matrix p = patchify(img, 2);
  ASSERT_EQ(p.rows(), 4);
  ASSERT_EQ(p.cols(), 4);
  // Patch 1 is the top-right 2x2 block, flattened (py, px).
  EXPECT_EQ(p.row(1), (RowVector(4) << 2, 3, 12, 13).finished());
  EXPECT_EQ(p.row(2), (RowVector(4) << 20, 21, 30, 31).finished());
}

TEST(Patchify, IndivisibleImageThrows) {
  EXPECT_THROW(patchify(Image(5, 4, 1), 2), ArgumentError);
}

TEST(PatchifyProject, ConstantImageGivesIdenticalEmbeddings) {
  Rng rng(1);
  Image img(8, 8, 3);
  std::fill(img.pixels.begin(), img.pixels.end(), 0.7);
  const Matrix p = patchify(img, 4);
  const Tensor e = patchify_project(p, Tensor::constant(random_matrix(48, 6, rng)), Tensor::constant(Matrix::Zero(1, 6)));
  for (Index r = 1; r < e.rows(); ++r) EXPECT_EQ(e.value().row(r), e.value().row(0));
}

TEST(PatchifyProject, MatchesDenseOracle) {
  Rng rng(2);
  const Image img = random_image(8, 8, 3, rng);
  const Matrix w = random_matrix(48, 5, rng), b = random_matrix(1, 5, rng);
  const Tensor e = patchify_project(patchify(img, 4), Tensor::constant(w), Tensor::constant(b));
  for (Index py = 0; py < 2; ++py) {
    for (Index px = 0; px < 2; ++px) {
      RowVector flat(48);
      Index k = 0;
      for (Index y = 0; y < 4; ++y) {
        for (Index x = 0; x < 4; ++x) {
          for (Index c = 0; c < 3; ++c) flat(k++) = img.at(py * 4 + y, px * 4 + x, c);
        }
      }
      const RowVector expected = flat * w + b;
      EXPECT_LT((e.value().row(py * 2 + px) - expected).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(AssembleSequence, ConcatenatesAndAddsPositions) {
  Rng rng(3);
  const Index batch = 2, m = 3, d = 4;
  const Matrix tokens = random_matrix(batch * m, d, rng), cls = random_matrix(1, d, rng),
               pos = random_matrix(1 + m, d, rng);
  const Matrix seq =
      assemble_sequence(Tensor::constant(tokens), Tensor::constant(cls), Tensor::constant(pos), batch).value();
  ASSERT_EQ(seq.rows(), batch * (1 + m));
  for (Index b = 0; b < batch; ++b) {
    EXPECT_LT((seq.row(b * (1 + m)) - (cls + pos.row(0))).cwiseAbs().maxCoeff(), 1e-15);
    for (Index i = 0; i < m; ++i) {
      EXPECT_LT((seq.row(b * (1 + m) + 1 + i) - (tokens.row(b * m + i) + pos.row(1 + i))).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
  const Matrix zero_pos =
      assemble_sequence(Tensor::constant(tokens), Tensor::constant(cls), Tensor::constant(Matrix::Zero(1 + m, d)), batch)
          .value();
  EXPECT_EQ(zero_pos.row(1), tokens.row(0));
  const Matrix zero_tokens = assemble_sequence(Tensor::constant(Matrix::Zero(batch * m, d)),
                                               Tensor::constant(Matrix::Zero(1, d)), Tensor::constant(pos), batch)
                                 .value();
  EXPECT_EQ(zero_tokens.middleRows(1 + m, 1 + m), pos);
}

// Scripted single-layer, single-head forward with plain Eigen algebra.
Matrix oracle_layer(const Matrix& x, const EncoderLayer& L, double eps) {
  auto ln = [eps](const Matrix& in, const Matrix& g, const Matrix& b) {
    Matrix out(in.rows(), in.cols());
    for (Index r = 0; r < in.rows(); ++r) {
      const double mu = in.row(r).mean();
      const double var = (in.row(r).array() - mu).square().mean();
      out.row(r) = ((in.row(r).array() - mu) / std::sqrt(var + eps)).matrix().cwiseProduct(g) + b;
    }
    return out;
  };
  const Index d = x.cols();
  const Matrix a = ln(x, L.ln1_gain.value(), L.ln1_bias.value());
  const Matrix proj = a * L.qkv_weight.value();
  const Matrix qkv = proj.rowwise() + L.qkv_bias.value().row(0);
  const Matrix q = qkv.leftCols(d), k = qkv.middleCols(d, d), v = qkv.rightCols(d);
  Matrix s = q * k.transpose() / std::sqrt(static_cast<double>(d));
  for (Index r = 0; r < s.rows(); ++r) {
    s.row(r) = (s.row(r).array() - s.row(r).maxCoeff()).exp();
    s.row(r) /= s.row(r).sum();
  }
  const Matrix attn = (s * v) * L.out_weight.value();
  const Matrix h = x + (attn.rowwise() + L.out_bias.value().row(0));
  const Matrix n = ln(h, L.ln2_gain.value(), L.ln2_bias.value());
  const Matrix hidden = n * L.ffn_in_weight.value();
  Matrix pre = hidden.rowwise() + L.ffn_in_bias.value().row(0);
  pre = pre.unaryExpr([](double z) { return 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0))); });
  const Matrix ffn = pre * L.ffn_out_weight.value();
  return h + (ffn.rowwise() + L.ffn_out_bias.value().row(0));
}

TEST(Encoder, MatchesScriptedOracle) {
  Rng rng(4);
  BackboneConfig bb;
  bb.width = 4;
  bb.heads = 1;
  bb.mlp_ratio = 2;
  MopeConfig mc;
  mc.num_experts = 3;
  mc.rank = 1;
  EncoderLayer layer = EncoderLayer::initialize(bb, mc, rng);
  layer.ln1_gain = Tensor::parameter(random_matrix(1, 4, rng));
  layer.ln2_bias = Tensor::parameter(random_matrix(1, 4, rng));
  layer.qkv_bias = Tensor::parameter(random_matrix(1, 12, rng));
  const Matrix x = random_matrix(5, 4, rng);
  const std::vector<EncoderLayer> layers{layer};
  const EncoderOutput out = encoder_forward(Tensor::constant(x), layers, 1, EncoderOptions{1, bb.ln_eps, false});
  EXPECT_LT((out.tokens.value() - oracle_layer(x, layer, bb.ln_eps)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, ZeroInitMopeEqualsPlainVit) {
  Rng rng(5);
  BackboneConfig bb;
  bb.width = 8;
  bb.heads = 2;
  MopeConfig mc;
  mc.num_experts = 4;
  mc.rank = 2;
  std::vector<EncoderLayer> layers;
  for (int l = 0; l < 3; ++l) layers.push_back(EncoderLayer::initialize(bb, mc, rng));
  const Matrix x = random_matrix(2 * 5, 8, rng);
  const EncoderOutput with = encoder_forward(Tensor::constant(x), layers, 2, EncoderOptions{2, bb.ln_eps, true});
  const EncoderOutput without = encoder_forward(Tensor::constant(x), layers, 2, EncoderOptions{2, bb.ln_eps, false});
  EXPECT_EQ((with.tokens.value() - without.tokens.value()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(with.records.size(), 3u);
  EXPECT_TRUE(without.records.empty());
}

TEST(Encoder, PermutingPatchesPermutesOutputs) {
  // Without positional terms the encoder is equivariant to patch order.
  Rng rng(6);
  BackboneConfig bb;
  bb.width = 8;
  bb.heads = 2;
  MopeConfig mc;
  mc.num_experts = 5;
  mc.rank = 2;
  std::vector<EncoderLayer> layers;
  for (int l = 0; l < 2; ++l) {
    EncoderLayer layer = EncoderLayer::initialize(bb, mc, rng);
    for (auto& u : layer.adapter.up) u = Tensor::parameter(random_matrix(8, 2, rng));
    layers.push_back(layer);
  }
  const Index m = 4;
  const Matrix x = random_matrix(1 + m, 8, rng);
  const std::vector<Index> perm{0, 3, 1, 4, 2};  // CLS stays first
  Matrix xp(1 + m, 8);
  for (Index i = 0; i <= m; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  const Matrix y = encoder_forward(Tensor::constant(x), layers, 1, EncoderOptions{2, bb.ln_eps, true}).tokens.value();
  const Matrix yp = encoder_forward(Tensor::constant(xp), layers, 1, EncoderOptions{2, bb.ln_eps, true}).tokens.value();
  for (Index i = 0; i <= m; ++i) {
    EXPECT_LT((yp.row(i) - y.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Model, BaselineSwitchIsBitIdenticalAtInit) {
  ModelConfig mc;
  AcrModel model = AcrModel::initialize(mc, 3);
  Rng rng(7);
  const Index batch = 3;
  Matrix patches(batch * mc.backbone.num_patches(), mc.backbone.patch_dim());
  for (Index i = 0; i < patches.size(); ++i) patches.data()[i] = rng.uniform();
  const ForwardResult acr = model.forward(patches, batch, ForwardMode::Inference);
  model.set_mope_enabled(false);
  const ForwardResult vit = model.forward(patches, batch, ForwardMode::Inference);
  EXPECT_EQ((acr.tokens.value() - vit.tokens.value()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((acr.a_hat.value() - vit.a_hat.value()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, ParameterNamesAreUnique) {
  const AcrModel model = AcrModel::initialize(ModelConfig{}, 0);
  std::set<std::string> names;
  for (const auto& [name, t] : model.named_parameters()) {
    EXPECT_TRUE(names.insert(name).second) << name;
    EXPECT_TRUE(t.requires_grad()) << name;
  }
}

TEST(BackboneConfig, Validation) {
  BackboneConfig bb;
  EXPECT_NO_THROW(bb.validate());
  bb.heads = 3;
  EXPECT_THROW(bb.validate(), ArgumentError);
  bb = BackboneConfig{};
  bb.patch_size = 5;
  EXPECT_THROW(bb.validate(), ArgumentError);
}

}  // namespace
}  // namespace acr
