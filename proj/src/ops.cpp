#include "acr/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "acr/error.hpp"
#include "acr/kernels.hpp"

namespace acr {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ArgumentError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
  }
}

const Matrix& parent_value(const detail::Node& n, std::size_t i) { return n.parents[i]->value; }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    const Matrix& av = parent_value(self, 0);
    const Matrix& bv = parent_value(self, 1);
    if (self.parents[0]->requires_grad) accumulate_grad(self.parents[0], self.grad * bv.transpose());
    if (self.parents[1]->requires_grad) accumulate_grad(self.parents[1], av.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ArgumentError("matmul_nt: inner dimensions differ");
  Matrix out = a.value() * b.value().transpose();
  return Tensor::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    const Matrix& av = parent_value(self, 0);
    const Matrix& bv = parent_value(self, 1);
    if (self.parents[0]->requires_grad) accumulate_grad(self.parents[0], self.grad * bv);
    if (self.parents[1]->requires_grad) accumulate_grad(self.parents[1], self.grad.transpose() * av);
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return Tensor::from_op(std::move(out), {a},
                         [](detail::Node& self) { accumulate_grad(self.parents[0], self.grad.transpose()); });
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    accumulate_grad(self.parents[0], self.grad);
    accumulate_grad(self.parents[1], self.grad);
  });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return Tensor::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    accumulate_grad(self.parents[0], self.grad);
    accumulate_grad(self.parents[1], -self.grad);
  });
}

Tensor operator-(const Tensor& a) { return -1.0 * a; }

Tensor operator*(double s, const Tensor& a) {
  Matrix out = s * a.value();
  return Tensor::from_op(std::move(out), {a},
                         [s](detail::Node& self) { accumulate_grad(self.parents[0], s * self.grad); });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  return Tensor::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    accumulate_grad(self.parents[0], self.grad.cwiseProduct(parent_value(self, 1)));
    accumulate_grad(self.parents[1], self.grad.cwiseProduct(parent_value(self, 0)));
  });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "divide");
  Matrix out = a.value().cwiseQuotient(b.value());
  return Tensor::from_op(std::move(out), {a, b}, [](detail::Node& self) {
    const Matrix& bv = parent_value(self, 1);
    accumulate_grad(self.parents[0], self.grad.cwiseQuotient(bv));
    if (self.parents[1]->requires_grad) {
      accumulate_grad(self.parents[1],
                      -self.grad.cwiseProduct(self.value).cwiseQuotient(bv));
    }
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  Matrix out = a.value().array() + s;
  return Tensor::from_op(std::move(out), {a},
                         [](detail::Node& self) { accumulate_grad(self.parents[0], self.grad); });
}

Tensor log(const Tensor& a) {
  Matrix out = a.value().array().log();
  return Tensor::from_op(std::move(out), {a}, [](detail::Node& self) {
    accumulate_grad(self.parents[0], self.grad.cwiseQuotient(parent_value(self, 0)));
  });
}

Tensor log_floor(const Tensor& a, double floor) {
  if (!(floor > 0)) throw ArgumentError("log_floor: floor must be positive");
  Matrix out = a.value().array().max(floor).log();
  return Tensor::from_op(std::move(out), {a}, [floor](detail::Node& self) {
    const Matrix& av = parent_value(self, 0);
    Matrix g = (av.array() > floor).select(self.grad.array() / av.array(), 0.0);
    accumulate_grad(self.parents[0], g);
  });
}

Tensor sqrt(const Tensor& a) {
  Matrix out = a.value().array().sqrt();
  return Tensor::from_op(std::move(out), {a}, [](detail::Node& self) {
    Matrix g = (self.value.array() > 0.0).select(self.grad.array() / (2.0 * self.value.array()), 0.0);
    accumulate_grad(self.parents[0], g);
  });
}

Tensor xlogx(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out = (av.array() > 0.0).select(av.array() * av.array().log(), 0.0);
  return Tensor::from_op(std::move(out), {a}, [](detail::Node& self) {
    const Matrix& x = parent_value(self, 0);
    Matrix g = (x.array() > 0.0).select(self.grad.array() * (x.array().log() + 1.0), 0.0);
    accumulate_grad(self.parents[0], g);
  });
}

Tensor square(const Tensor& a) { return hadamard(a, a); }

Tensor gelu(const Tensor& a) {
  // Exact form: x * Phi(x).
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
  return Tensor::from_op(std::move(out), {a}, [](detail::Node& self) {
    const Matrix& xv = parent_value(self, 0);
    Matrix d = xv.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
      return cdf + v * pdf;
    });
    accumulate_grad(self.parents[0], self.grad.cwiseProduct(d));
  });
}

Tensor broadcast(const Tensor& a, Index rows, Index cols) {
  const Index ar = a.rows();
  const Index ac = a.cols();
  if (!((ar == 1 || ar == rows) && (ac == 1 || ac == cols))) {
    throw ArgumentError("broadcast: incompatible shape");
  }
  Matrix out = a.value().replicate(rows / ar, cols / ac);
  return Tensor::from_op(std::move(out), {a}, [ar, ac](detail::Node& self) {
    Matrix g = self.grad;
    if (ar == 1 && g.rows() != 1) g = g.colwise().sum().eval();
    if (ac == 1 && g.cols() != 1) g = g.rowwise().sum().eval();
    accumulate_grad(self.parents[0], g);
  });
}

Tensor reshape(const Tensor& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw ArgumentError("reshape: size mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  const Index ar = a.rows();
  const Index ac = a.cols();
  return Tensor::from_op(std::move(out), {a}, [ar, ac](detail::Node& self) {
    accumulate_grad(self.parents[0], Eigen::Map<const Matrix>(self.grad.data(), ar, ac));
  });
}

Tensor gather_rows(const Tensor& a, std::span<const Index> rows) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) throw ArgumentError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = av.row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  const Index total = av.rows();
  return Tensor::from_op(std::move(out), {a}, [idx = std::move(idx), total](detail::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    Matrix g = Matrix::Zero(total, self.grad.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    accumulate_grad(self.parents[0], g);
  });
}

Tensor scatter_rows(const Tensor& a, std::span<const Index> rows, Index total_rows) {
  const Matrix& av = a.value();
  if (static_cast<Index>(rows.size()) != av.rows()) throw ArgumentError("scatter_rows: row count differs");
  Matrix out = Matrix::Zero(total_rows, av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= total_rows) throw ArgumentError("scatter_rows: index out of range");
    out.row(rows[i]) += av.row(static_cast<Index>(i));
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return Tensor::from_op(std::move(out), {a}, [idx = std::move(idx)](detail::Node& self) {
    Matrix g(static_cast<Index>(idx.size()), self.grad.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(static_cast<Index>(i)) = self.grad.row(idx[i]);
    accumulate_grad(self.parents[0], g);
  });
}

Tensor repeat_rows(const Tensor& a, Index times) {
  if (times < 1) throw ArgumentError("repeat_rows: times must be positive");
  const Matrix& av = a.value();
  Matrix out(av.rows() * times, av.cols());
  for (Index r = 0; r < av.rows(); ++r) out.middleRows(r * times, times) = av.row(r).replicate(times, 1);
  return Tensor::from_op(std::move(out), {a}, [times](detail::Node& self) {
    const Index n = self.grad.rows() / times;
    Matrix g(n, self.grad.cols());
    for (Index r = 0; r < n; ++r) g.row(r) = self.grad.middleRows(r * times, times).colwise().sum();
    accumulate_grad(self.parents[0], g);
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ArgumentError("concat_rows: column count differs");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Tensor::from_op(std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                         [offsets = std::move(offsets)](detail::Node& self) {
                           for (std::size_t i = 0; i < self.parents.size(); ++i) {
                             const auto& p = self.parents[i];
                             accumulate_grad(p, self.grad.middleRows(offsets[i], p->value.rows()));
                           }
                         });
}

Tensor block_transpose(const Tensor& a, Index blocks) {
  const Matrix& av = a.value();
  if (blocks < 1 || av.rows() % blocks != 0) throw ArgumentError("block_transpose: rows not divisible by blocks");
  const Index r = av.rows() / blocks;
  const Index c = av.cols();
  Matrix out(blocks * c, r);
  for (Index b = 0; b < blocks; ++b) out.middleRows(b * c, c) = av.middleRows(b * r, r).transpose();
  return Tensor::from_op(std::move(out), {a}, [blocks, r, c](detail::Node& self) {
    Matrix g(blocks * r, c);
    for (Index b = 0; b < blocks; ++b) g.middleRows(b * r, r) = self.grad.middleRows(b * c, c).transpose();
    accumulate_grad(self.parents[0], g);
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Index r = a.rows();
  const Index c = a.cols();
  return Tensor::from_op(std::move(out), {a}, [r, c](detail::Node& self) {
    accumulate_grad(self.parents[0], Matrix::Constant(r, c, self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ArgumentError("mean: empty tensor");
  return (1.0 / n) * sum(a);
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ArgumentError("mean_rows: empty tensor");
  Matrix out = a.value().colwise().mean();
  const Index r = a.rows();
  return Tensor::from_op(std::move(out), {a}, [r](detail::Node& self) {
    accumulate_grad(self.parents[0], (self.grad / static_cast<double>(r)).replicate(r, 1));
  });
}

Tensor sum_cols(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  const Index c = a.cols();
  return Tensor::from_op(std::move(out), {a},
                         [c](detail::Node& self) { accumulate_grad(self.parents[0], self.grad.replicate(1, c)); });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Matrix& xv = x.value();
  const Index n = xv.rows();
  const Index c = xv.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    throw ArgumentError("layer_norm_rows: gain/bias must be 1 x cols");
  }
  Matrix normalized(n, c);
  Vector inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    normalized.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (normalized.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return Tensor::from_op(std::move(out), {x, gain, bias},
                         [normalized, inv_std](detail::Node& self) {
                           const Matrix& g = self.grad;
                           const RowVector gamma = self.parents[1]->value.row(0);
                           if (self.parents[0]->requires_grad) {
                             Matrix dxhat = g.array().rowwise() * gamma.array();
                             const auto c = static_cast<double>(g.cols());
                             Matrix dx(g.rows(), g.cols());
                             for (Index i = 0; i < g.rows(); ++i) {
                               const double m1 = dxhat.row(i).sum() / c;
                               const double m2 = dxhat.row(i).dot(normalized.row(i)) / c;
                               dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - normalized.row(i).array() * m2);
                             }
                             accumulate_grad(self.parents[0], dx);
                           }
                           accumulate_grad(self.parents[1], g.cwiseProduct(normalized).colwise().sum());
                           accumulate_grad(self.parents[2], g.colwise().sum());
                         });
}

Tensor softmax_rows(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (Index i = 0; i < av.rows(); ++i) out.row(i) = masked_softmax(av.row(i), 1.0);
  return Tensor::from_op(std::move(out), {a}, [](detail::Node& self) {
    const Matrix& p = self.value;
    const Vector inner = self.grad.cwiseProduct(p).rowwise().sum();
    Matrix g = p.cwiseProduct(self.grad - inner.replicate(1, p.cols()));
    accumulate_grad(self.parents[0], g);
  });
}

Tensor cross_entropy(const Tensor& scores, std::span<const Index> labels) {
  const Matrix& s = scores.value();
  if (static_cast<Index>(labels.size()) != s.rows()) throw ArgumentError("cross_entropy: one label per row required");
  if (s.rows() == 0) throw ArgumentError("cross_entropy: empty batch");
  Matrix probs(s.rows(), s.cols());
  double total = 0;
  for (Index i = 0; i < s.rows(); ++i) {
    const Index y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= s.cols()) throw ArgumentError("cross_entropy: label out of range");
    const double peak = s.row(i).maxCoeff();
    const double lse = peak + std::log((s.row(i).array() - peak).exp().sum());
    total += lse - s(i, y);
    probs.row(i) = (s.row(i).array() - lse).exp();
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(s.rows());
  std::vector<Index> y(labels.begin(), labels.end());
  return Tensor::from_op(std::move(out), {scores}, [probs, y = std::move(y)](detail::Node& self) {
    Matrix g = probs;
    for (std::size_t i = 0; i < y.size(); ++i) g(static_cast<Index>(i), y[i]) -= 1.0;
    g *= self.grad(0, 0) / static_cast<double>(y.size());
    accumulate_grad(self.parents[0], g);
  });
}

Tensor multi_head_attention(const Tensor& qkv, Index batch, Index tokens, Index heads) {
  const Matrix& x = qkv.value();
  if (x.rows() != batch * tokens || x.cols() % 3 != 0) throw ArgumentError("multi_head_attention: bad qkv shape");
  const Index d = x.cols() / 3;
  if (heads < 1 || d % heads != 0) throw ArgumentError("multi_head_attention: width not divisible by heads");
  const Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // probabilities for every (image, head), kept for the backward pass
  auto probs = std::make_shared<std::vector<Matrix>>(static_cast<std::size_t>(batch * heads));
  Matrix out(batch * tokens, d);
  for (Index b = 0; b < batch; ++b) {
    for (Index h = 0; h < heads; ++h) {
      const auto q = x.block(b * tokens, h * dh, tokens, dh);
      const auto k = x.block(b * tokens, d + h * dh, tokens, dh);
      const auto v = x.block(b * tokens, 2 * d + h * dh, tokens, dh);
      Matrix s = (q * k.transpose()) * scale;
      for (Index i = 0; i < tokens; ++i) {
        const double peak = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - peak).exp();
        s.row(i) /= s.row(i).sum();
      }
      out.block(b * tokens, h * dh, tokens, dh).noalias() = s * v;
      (*probs)[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }
  return Tensor::from_op(std::move(out), {qkv}, [=](detail::Node& self) {
    const Matrix& xv = self.parents[0]->value;
    const Matrix& go = self.grad;
    Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
    for (Index b = 0; b < batch; ++b) {
      for (Index h = 0; h < heads; ++h) {
        const Matrix& p = (*probs)[static_cast<std::size_t>(b * heads + h)];
        const auto q = xv.block(b * tokens, h * dh, tokens, dh);
        const auto k = xv.block(b * tokens, d + h * dh, tokens, dh);
        const auto v = xv.block(b * tokens, 2 * d + h * dh, tokens, dh);
        const auto dout = go.block(b * tokens, h * dh, tokens, dh);
        gx.block(b * tokens, 2 * d + h * dh, tokens, dh).noalias() = p.transpose() * dout;
        Matrix dp = dout * v.transpose();
        const Vector inner = dp.cwiseProduct(p).rowwise().sum();
        Matrix ds = p.cwiseProduct(dp - inner.replicate(1, tokens)) * scale;
        gx.block(b * tokens, h * dh, tokens, dh).noalias() = ds * k;
        gx.block(b * tokens, d + h * dh, tokens, dh).noalias() = ds.transpose() * q;
      }
    }
    accumulate_grad(self.parents[0], gx);
  });
}

TopkSoftmaxResult topk_softmax_rows(const Tensor& logits, Index k, double tau) {
  if (!(tau > 0)) throw ArgumentError("topk_softmax_rows: tau must be positive");
  const Matrix& g = logits.value();
  Matrix w = Matrix::Zero(g.rows(), g.cols());
  Selection selected(static_cast<std::size_t>(g.rows()));
  for (Index i = 0; i < g.rows(); ++i) {
    w.row(i) = masked_softmax(topk_mask(g.row(i), k), tau);
    selected[static_cast<std::size_t>(i)] = topk_indices(g.row(i), k);
  }
  auto sel = std::make_shared<const Selection>(selected);
  Tensor out = Tensor::from_op(std::move(w), {logits}, [sel, tau](detail::Node& self) {
    const Matrix& p = self.value;
    Matrix dg = Matrix::Zero(p.rows(), p.cols());
    for (Index i = 0; i < p.rows(); ++i) {
      const auto& s = (*sel)[static_cast<std::size_t>(i)];
      double inner = 0;
      for (Index e : s) inner += p(i, e) * self.grad(i, e);
      for (Index e : s) dg(i, e) = p(i, e) * (self.grad(i, e) - inner) / tau;
    }
    accumulate_grad(self.parents[0], dg);
  });
  return {std::move(out), std::move(selected)};
}

TopjMaskResult gumbel_topj_rows(const Tensor& logits, Index j, double tau, GumbelMode mode, const Matrix& noise) {
  if (!(tau > 0)) throw ArgumentError("gumbel_topj_rows: tau must be positive");
  const Matrix& lv = logits.value();
  if (j < 1 || j > lv.cols()) throw ArgumentError("gumbel_topj_rows: j=" + std::to_string(j) + " out of range");
  Selection selected(static_cast<std::size_t>(lv.rows()));
  if (mode == GumbelMode::Hard) {
    Matrix mask = Matrix::Zero(lv.rows(), lv.cols());
    for (Index i = 0; i < lv.rows(); ++i) {
      auto& s = selected[static_cast<std::size_t>(i)];
      s = topk_indices(lv.row(i), j);
      for (Index m : s) mask(i, m) = 1.0;
    }
    return {Tensor::constant(std::move(mask)), std::move(selected)};
  }
  if (noise.rows() != lv.rows() || noise.cols() != lv.cols()) throw ArgumentError("gumbel_topj_rows: noise shape");
  const Matrix perturbed = lv + noise;
  Matrix soft = Matrix::Zero(lv.rows(), lv.cols());
  Matrix hard = Matrix::Zero(lv.rows(), lv.cols());
  const auto scale = static_cast<double>(j);
  for (Index i = 0; i < lv.rows(); ++i) {
    auto& s = selected[static_cast<std::size_t>(i)];
    s = topk_indices(perturbed.row(i), j);
    soft.row(i) = scale * masked_softmax(topk_mask(perturbed.row(i), j), tau);
    for (Index m : s) hard(i, m) = 1.0;
  }
  auto sel = std::make_shared<const Selection>(selected);
  Matrix forward = mode == GumbelMode::StraightThrough ? hard : soft;
  Tensor out = Tensor::from_op(std::move(forward), {logits}, [sel, soft, tau, scale](detail::Node& self) {
    Matrix dl = Matrix::Zero(soft.rows(), soft.cols());
    for (Index i = 0; i < soft.rows(); ++i) {
      const auto& s = (*sel)[static_cast<std::size_t>(i)];
      double inner = 0;
      for (Index m : s) inner += soft(i, m) / scale * self.grad(i, m);
      for (Index m : s) dl(i, m) = soft(i, m) * (self.grad(i, m) - inner) / tau;
    }
    accumulate_grad(self.parents[0], dl);
  });
  return {std::move(out), std::move(selected)};
}

Tensor gumbel_st(const Tensor& logits, double tau, GumbelMode mode, Rng& rng) {
  if (logits.rows() != 1) throw ArgumentError("gumbel_st: expects a 1 x M row");
  if (!(tau > 0.0)) throw ArgumentError("gumbel_st: tau must be positive");
  if (mode == GumbelMode::Hard) {
    Matrix hard = Matrix::Zero(1, logits.cols());
    hard(0, argmax(logits.value().row(0))) = 1.0;
    return Tensor::constant(std::move(hard));
  }
  Matrix noise(1, logits.cols());
  for (Index m = 0; m < noise.cols(); ++m) noise(0, m) = rng.gumbel();
  const Tensor soft = softmax_rows((1.0 / tau) * (logits + Tensor::constant(noise)));
  if (mode == GumbelMode::Soft) return soft;
  Matrix hard = Matrix::Zero(1, logits.cols());
  hard(0, argmax((logits.value() + noise).row(0))) = 1.0;
  // Forward value is the one-hot sample; the gradient is that of `soft`.
  return Tensor::from_op(std::move(hard), {soft},
                         [](detail::Node& self) { accumulate_grad(self.parents[0], self.grad); });
}

}  // namespace acr
