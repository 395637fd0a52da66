#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "polyroom/autograd.hpp"

namespace polyroom::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kShape, std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw Error(ErrorKind::kShape, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

// Adds g into input i's gradient when that input participates.
template <typename F>
void accumulate(Node& self, std::size_t i, F&& body) {
  Node& x = in(self, i);
  if (x.requires_grad) body(x.grad_buffer());
}

template <typename F>
Tensor unary(const char* op, const Tensor& a, F&& forward_fn, std::function<double(double x, double y)> deriv) {
  std::vector<double> out(a.numel());
  const auto src = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward_fn(src[i]);
  return make_result(op, a.shape(), std::move(out), {a}, [deriv](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      const auto& x = in(self, 0).value;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(x[i], self.value[i]);
    });
  });
}

// (outer, axis, inner) decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      accumulate(self, k, [&](std::vector<double>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = in(self, 0).value;
    const auto& bv = in(self, 1).value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    });
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  if (x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw Error(ErrorKind::kShape, "add_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  }
  const std::size_t n = bias.dim(0);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.data()[i % n];
  return make_result("add_bias", x.shape(), std::move(out), {x, bias}, [n](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    });
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw Error(ErrorKind::kShape, "reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), std::vector<double>(a.data().begin(), a.data().end()), {a},
                     [](Node& self) {
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                       });
                     });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  return permute(a, {1, 0});
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
  const std::size_t r = a.rank();
  if (order.size() != r) throw Error(ErrorKind::kShape, "permute: order rank mismatch");
  std::vector<char> used(r, 0);
  for (std::size_t o : order) {
    if (o >= r || used[o]) throw Error(ErrorKind::kShape, "permute: invalid axis order");
    used[o] = 1;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.dim(order[i]);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * a.dim(i);
  // src_index[k] = flat input offset of output element k.
  const std::size_t n = a.numel();
  auto src_index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(r, 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += counter[i] * in_strides[order[i]];
    (*src_index)[k] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a.data()[(*src_index)[k]];
  return make_result("permute", std::move(out_shape), std::move(out), {a}, [src_index](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t k = 0; k < self.grad.size(); ++k) g[(*src_index)[k]] += self.grad[k];
    });
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorKind::kShape, "concat of nothing");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw Error(ErrorKind::kShape, "concat axis out of range");
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw Error(ErrorKind::kShape, "concat rank mismatch");
    total += s[axis];
    s[axis] = shape[axis];
    if (s != shape) throw Error(ErrorKind::kShape, "concat shape mismatch off-axis");
  }
  shape[axis] = total;
  const AxisSplit outer_split = split_axis(shape, axis);
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t block = p.dim(axis) * outer_split.inner;
    for (std::size_t o = 0; o < outer_split.outer; ++o) {
      std::copy_n(p.data().begin() + static_cast<long>(o * block), block,
                  out.begin() + static_cast<long>(o * total * outer_split.inner + offset * outer_split.inner));
    }
    offset += p.dim(axis);
  }
  return make_result("concat", shape, std::move(out), parts, [offsets, outer_split, total, axis](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      accumulate(self, k, [&](std::vector<double>& g) {
        const std::size_t block = in(self, k).shape[axis] * outer_split.inner;
        for (std::size_t o = 0; o < outer_split.outer; ++o) {
          const std::size_t base = o * total * outer_split.inner + offsets[k] * outer_split.inner;
          for (std::size_t i = 0; i < block; ++i) g[o * block + i] += self.grad[base + i];
        }
      });
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || start + length > a.dim(axis)) {
    throw Error(ErrorKind::kShape, "slice out of range on " + shape_str(a.shape()));
  }
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape shape = a.shape();
  shape[axis] = length;
  std::vector<double> out(numel(shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(a.data().begin() + static_cast<long>((o * s.len + start) * s.inner), length * s.inner,
                out.begin() + static_cast<long>(o * length * s.inner));
  }
  return make_result("slice", std::move(shape), std::move(out), {a}, [s, start, length](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < length * s.inner; ++i) {
          g[(o * s.len + start) * s.inner + i] += self.grad[o * length * s.inner + i];
        }
      }
    });
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& rows) {
  if (a.rank() == 0) throw Error(ErrorKind::kShape, "gather_rows on a scalar");
  const std::size_t row_size = a.numel() / a.dim(0);
  for (std::size_t r : rows) {
    if (r >= a.dim(0)) throw Error(ErrorKind::kShape, "gather_rows index out of range");
  }
  Shape shape = a.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * row_size);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy_n(a.data().begin() + static_cast<long>(rows[k] * row_size), row_size,
                out.begin() + static_cast<long>(k * row_size));
  }
  return make_result("gather_rows", std::move(shape), std::move(out), {a}, [rows, row_size](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t i = 0; i < row_size; ++i) g[rows[k] * row_size + i] += self.grad[k * row_size + i];
      }
    });
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) throw Error(ErrorKind::kShape, "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const auto m = static_cast<long>(a.dim(0)), k = static_cast<long>(a.dim(1)), n = static_cast<long>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  return make_result("matmul", {a.dim(0), b.dim(1)}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const ConstMapMat dc(self.grad.data(), m, n);
    accumulate(self, 0, [&](std::vector<double>& g) {
      MapMat(g.data(), m, k).noalias() += dc * ConstMapMat(in(self, 1).value.data(), k, n).transpose();
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      MapMat(g.data(), k, n).noalias() += ConstMapMat(in(self, 0).value.data(), m, k).transpose() * dc;
    });
  });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw Error(ErrorKind::kShape, "bmm " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const auto m = static_cast<long>(a.dim(1)), k = static_cast<long>(a.dim(2)), n = static_cast<long>(b.dim(2));
  std::vector<double> out(batch * static_cast<std::size_t>(m * n));
  for (std::size_t i = 0; i < batch; ++i) {
    MapMat(out.data() + i * m * n, m, n).noalias() =
        ConstMapMat(a.data().data() + i * m * k, m, k) * ConstMapMat(b.data().data() + i * k * n, k, n);
  }
  return make_result("bmm", {batch, a.dim(1), b.dim(2)}, std::move(out), {a, b}, [batch, m, k, n](Node& self) {
    for (std::size_t i = 0; i < batch; ++i) {
      const ConstMapMat dc(self.grad.data() + i * m * n, m, n);
      accumulate(self, 0, [&](std::vector<double>& g) {
        MapMat(g.data() + i * m * k, m, k).noalias() +=
            dc * ConstMapMat(in(self, 1).value.data() + i * k * n, k, n).transpose();
      });
      accumulate(self, 1, [&](std::vector<double>& g) {
        MapMat(g.data() + i * k * n, k, n).noalias() +=
            ConstMapMat(in(self, 0).value.data() + i * m * k, m, k).transpose() * dc;
      });
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear");
  if (x.rank() == 0 || x.shape().back() != weight.dim(0)) {
    throw Error(ErrorKind::kShape, "linear " + shape_str(x.shape()) + " x " + shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(1))) {
    throw Error(ErrorKind::kShape, "linear bias " + shape_str(bias.shape()));
  }
  const auto in_dim = static_cast<long>(weight.dim(0)), out_dim = static_cast<long>(weight.dim(1));
  const auto rows = static_cast<long>(x.numel()) / in_dim;
  Shape shape = x.shape();
  shape.back() = weight.dim(1);
  std::vector<double> out(static_cast<std::size_t>(rows * out_dim));
  MapMat y(out.data(), rows, out_dim);
  y.noalias() = ConstMapMat(x.data().data(), rows, in_dim) * ConstMapMat(weight.data().data(), in_dim, out_dim);
  if (bias.defined()) y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), out_dim);
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result("linear", std::move(shape), std::move(out), std::move(inputs), [rows, in_dim, out_dim](Node& self) {
    const ConstMapMat dy(self.grad.data(), rows, out_dim);
    accumulate(self, 0, [&](std::vector<double>& g) {
      MapMat(g.data(), rows, in_dim).noalias() += dy * ConstMapMat(in(self, 1).value.data(), in_dim, out_dim).transpose();
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      MapMat(g.data(), in_dim, out_dim).noalias() += ConstMapMat(in(self, 0).value.data(), rows, in_dim).transpose() * dy;
    });
    if (self.inputs.size() > 2) {
      accumulate(self, 2, [&](std::vector<double>& g) {
        Eigen::Map<Eigen::RowVectorXd>(g.data(), out_dim) += dy.colwise().sum();
      });
    }
  });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) throw Error(ErrorKind::kShape, "softmax axis out of range");
  const AxisSplit s = split_axis(a.shape(), axis);
  if (s.len == 0) throw Error(ErrorKind::kShape, "softmax over an empty axis");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) peak = std::max(peak, x[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) total += out[base + l * s.inner] = std::exp(x[base + l * s.inner] - peak);
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  return make_result("softmax", a.shape(), std::move(out), {a}, [s](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      const auto& y = self.value;
      const auto& dy = self.grad;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.len * s.inner + i;
          double dotp = 0.0;
          for (std::size_t l = 0; l < s.len; ++l) dotp += dy[base + l * s.inner] * y[base + l * s.inner];
          for (std::size_t l = 0; l < s.len; ++l) {
            const std::size_t idx = base + l * s.inner;
            g[idx] += y[idx] * (dy[idx] - dotp);
          }
        }
      }
    });
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  if (x.rank() == 0 || x.shape().back() != gamma.dim(0) || beta.dim(0) != gamma.dim(0)) {
    throw Error(ErrorKind::kShape, "layer_norm " + shape_str(x.shape()));
  }
  const std::size_t d = gamma.dim(0);
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (xr[i] - mu) * is;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = gamma.data()[i] * h + beta.data()[i];
    }
  }
  return make_result("layer_norm", x.shape(), std::move(out), {x, gamma, beta}, [d, rows, xhat, inv_std](Node& self) {
    const auto& dy = self.grad;
    const auto& gam = in(self, 1).value;
    accumulate(self, 0, [&](std::vector<double>& g) {
      std::vector<double> dh(d);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          dh[i] = dy[r * d + i] * gam[i];
          mean_dh += dh[i];
          mean_dh_h += dh[i] * (*xhat)[r * d + i];
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i) {
          g[r * d + i] += (*inv_std)[r] * (dh[i] - mean_dh - (*xhat)[r * d + i] * mean_dh_h);
        }
      }
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t k = 0; k < dy.size(); ++k) g[k % d] += dy[k] * (*xhat)[k];
    });
    accumulate(self, 2, [&](std::vector<double>& g) {
      for (std::size_t k = 0; k < dy.size(); ++k) g[k % d] += dy[k];
    });
  });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require_rank(q, 3, "attention");
  require_rank(k, 3, "attention");
  require_rank(v, 3, "attention");
  const std::size_t batch = q.dim(0);
  const auto t = static_cast<long>(q.dim(1)), s = static_cast<long>(k.dim(1)), dh = static_cast<long>(q.dim(2));
  if (k.dim(0) != batch || v.dim(0) != batch || k.dim(2) != q.dim(2) || v.dim(1) != k.dim(1) || v.dim(2) != q.dim(2)) {
    throw Error(ErrorKind::kShape, "attention q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) + " v" +
                                       shape_str(v.shape()));
  }
  if (s == 0) throw Error(ErrorKind::kShape, "attention over zero keys");
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t score_elems = batch * static_cast<std::size_t>(t * s);
  AttentionStats& stats = attention_stats();
  ++stats.calls;
  stats.score_elements += score_elems;
  stats.peak_elements = std::max(stats.peak_elements, score_elems);

  auto probs = std::make_shared<std::vector<double>>(score_elems);
  std::vector<double> out(batch * static_cast<std::size_t>(t * dh));
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat p(probs->data() + b * t * s, t, s);
    p.noalias() = inv * ConstMapMat(q.data().data() + b * t * dh, t, dh) *
                  ConstMapMat(k.data().data() + b * s * dh, s, dh).transpose();
    for (long r = 0; r < t; ++r) {
      auto row = p.row(r);
      row.array() = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    MapMat(out.data() + b * t * dh, t, dh).noalias() = p * ConstMapMat(v.data().data() + b * s * dh, s, dh);
  }
  return make_result("attention", q.shape(), std::move(out), {q, k, v}, [batch, t, s, dh, inv, probs](Node& self) {
    RowMat dp(t, s), ds(t, s);
    for (std::size_t b = 0; b < batch; ++b) {
      const ConstMapMat p(probs->data() + b * t * s, t, s);
      const ConstMapMat dout(self.grad.data() + b * t * dh, t, dh);
      const ConstMapMat qm(in(self, 0).value.data() + b * t * dh, t, dh);
      const ConstMapMat km(in(self, 1).value.data() + b * s * dh, s, dh);
      const ConstMapMat vm(in(self, 2).value.data() + b * s * dh, s, dh);
      accumulate(self, 2, [&](std::vector<double>& g) { MapMat(g.data() + b * s * dh, s, dh).noalias() += p.transpose() * dout; });
      if (!in(self, 0).requires_grad && !in(self, 1).requires_grad) continue;
      dp.noalias() = dout * vm.transpose();
      const Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
      ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix();
      accumulate(self, 0, [&](std::vector<double>& g) { MapMat(g.data() + b * t * dh, t, dh).noalias() += inv * ds * km; });
      accumulate(self, 1, [&](std::vector<double>& g) {
        MapMat(g.data() + b * s * dh, s, dh).noalias() += inv * ds.transpose() * qm;
      });
    }
  });
}

Tensor bilinear_sample(const Tensor& grid, const Tensor& points) {
  require_rank(grid, 3, "bilinear_sample");
  const bool grouped = points.rank() == 3;
  if (!grouped && points.rank() != 2) throw Error(ErrorKind::kShape, "bilinear_sample points must be [P,2] or [P,G,2]");
  const std::size_t np = points.dim(0);
  const std::size_t groups = grouped ? points.dim(1) : 1;
  if (points.shape().back() != 2) throw Error(ErrorKind::kShape, "bilinear_sample points need 2 coordinates");
  const std::size_t h = grid.dim(0), w = grid.dim(1), channels = grid.dim(2);
  if (h == 0 || w == 0 || channels % groups != 0) {
    throw Error(ErrorKind::kShape, "bilinear_sample grid " + shape_str(grid.shape()) + " with " + std::to_string(groups) + " groups");
  }
  const std::size_t c = channels / groups;

  // Per (point, group): the four neighbour cells, weights and clamp flags.
  struct Tap {
    std::size_t x0, x1, y0, y1;
    double fx, fy;
    bool free_x, free_y;
  };
  auto taps = std::make_shared<std::vector<Tap>>(np * groups);
  std::vector<double> out(np * groups * c);
  const auto gv = grid.data();
  for (std::size_t p = 0; p < np * groups; ++p) {
    double u = points.data()[p * 2] * static_cast<double>(w) - 0.5;
    double v = points.data()[p * 2 + 1] * static_cast<double>(h) - 0.5;
    const double umax = static_cast<double>(w - 1), vmax = static_cast<double>(h - 1);
    const bool free_x = u >= 0.0 && u <= umax && w > 1;
    const bool free_y = v >= 0.0 && v <= vmax && h > 1;
    u = std::clamp(u, 0.0, umax);
    v = std::clamp(v, 0.0, vmax);
    Tap tap;
    tap.x0 = static_cast<std::size_t>(std::floor(u));
    tap.y0 = static_cast<std::size_t>(std::floor(v));
    tap.x1 = std::min(tap.x0 + 1, w - 1);
    tap.y1 = std::min(tap.y0 + 1, h - 1);
    tap.fx = u - static_cast<double>(tap.x0);
    tap.fy = v - static_cast<double>(tap.y0);
    tap.free_x = free_x;
    tap.free_y = free_y;
    (*taps)[p] = tap;
    const std::size_t g = p % groups;
    const double w00 = (1 - tap.fx) * (1 - tap.fy), w01 = tap.fx * (1 - tap.fy), w10 = (1 - tap.fx) * tap.fy,
                 w11 = tap.fx * tap.fy;
    const double* c00 = gv.data() + (tap.y0 * w + tap.x0) * channels + g * c;
    const double* c01 = gv.data() + (tap.y0 * w + tap.x1) * channels + g * c;
    const double* c10 = gv.data() + (tap.y1 * w + tap.x0) * channels + g * c;
    const double* c11 = gv.data() + (tap.y1 * w + tap.x1) * channels + g * c;
    double* o = out.data() + p * c;
    for (std::size_t ch = 0; ch < c; ++ch) o[ch] = w00 * c00[ch] + w01 * c01[ch] + w10 * c10[ch] + w11 * c11[ch];
  }
  Shape shape = grouped ? Shape{np, groups, c} : Shape{np, c};
  return make_result("bilinear_sample", std::move(shape), std::move(out), {grid, points},
                     [taps, groups, c, channels, w, h](Node& self) {
                       const auto& gv = in(self, 0).value;
                       const auto& dy = self.grad;
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         for (std::size_t p = 0; p < taps->size(); ++p) {
                           const Tap& tap = (*taps)[p];
                           const std::size_t grp = p % groups;
                           const double w00 = (1 - tap.fx) * (1 - tap.fy), w01 = tap.fx * (1 - tap.fy),
                                        w10 = (1 - tap.fx) * tap.fy, w11 = tap.fx * tap.fy;
                           const double* d = dy.data() + p * c;
                           double* g00 = g.data() + (tap.y0 * w + tap.x0) * channels + grp * c;
                           double* g01 = g.data() + (tap.y0 * w + tap.x1) * channels + grp * c;
                           double* g10 = g.data() + (tap.y1 * w + tap.x0) * channels + grp * c;
                           double* g11 = g.data() + (tap.y1 * w + tap.x1) * channels + grp * c;
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             g00[ch] += w00 * d[ch];
                             g01[ch] += w01 * d[ch];
                             g10[ch] += w10 * d[ch];
                             g11[ch] += w11 * d[ch];
                           }
                         }
                       });
                       accumulate(self, 1, [&](std::vector<double>& g) {
                         for (std::size_t p = 0; p < taps->size(); ++p) {
                           const Tap& tap = (*taps)[p];
                           const std::size_t grp = p % groups;
                           const double* d = dy.data() + p * c;
                           const double* c00 = gv.data() + (tap.y0 * w + tap.x0) * channels + grp * c;
                           const double* c01 = gv.data() + (tap.y0 * w + tap.x1) * channels + grp * c;
                           const double* c10 = gv.data() + (tap.y1 * w + tap.x0) * channels + grp * c;
                           const double* c11 = gv.data() + (tap.y1 * w + tap.x1) * channels + grp * c;
                           double du = 0.0, dv = 0.0;
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             du += d[ch] * ((1 - tap.fy) * (c01[ch] - c00[ch]) + tap.fy * (c11[ch] - c10[ch]));
                             dv += d[ch] * ((1 - tap.fx) * (c10[ch] - c00[ch]) + tap.fx * (c11[ch] - c01[ch]));
                           }
                           if (tap.free_x) g[p * 2] += du * static_cast<double>(w);
                           if (tap.free_y) g[p * 2 + 1] += dv * static_cast<double>(h);
                         }
                       });
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t padding) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  require_rank(b, 1, "conv2d");
  const std::size_t ci = x.dim(0), hin = x.dim(1), win = x.dim(2);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != ci || b.dim(0) != co || stride == 0) throw Error(ErrorKind::kShape, "conv2d weight " + shape_str(w.shape()));
  if (hin + 2 * padding < kh || win + 2 * padding < kw) throw Error(ErrorKind::kShape, "conv2d kernel larger than input");
  const std::size_t hout = (hin + 2 * padding - kh) / stride + 1, wout = (win + 2 * padding - kw) / stride + 1;
  const std::size_t patch = ci * kh * kw, cells = hout * wout;

  // im2col, kept for the weight gradient.
  auto cols = std::make_shared<std::vector<double>>(patch * cells, 0.0);
  for (std::size_t c = 0; c < ci; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols->data() + ((c * kh + ky) * kw + kx) * cells;
        for (std::size_t oy = 0; oy < hout; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(hin)) continue;
          for (std::size_t ox = 0; ox < wout; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(win)) continue;
            row[oy * wout + ox] = x.data()[(c * hin + static_cast<std::size_t>(iy)) * win + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
  std::vector<double> out(co * cells);
  MapMat y(out.data(), static_cast<long>(co), static_cast<long>(cells));
  y.noalias() = ConstMapMat(w.data().data(), static_cast<long>(co), static_cast<long>(patch)) *
                ConstMapMat(cols->data(), static_cast<long>(patch), static_cast<long>(cells));
  y.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data().data(), static_cast<long>(co));

  return make_result("conv2d", {co, hout, wout}, std::move(out), {x, w, b},
                     [=](Node& self) {
                       const ConstMapMat dy(self.grad.data(), static_cast<long>(co), static_cast<long>(cells));
                       const ConstMapMat col(cols->data(), static_cast<long>(patch), static_cast<long>(cells));
                       accumulate(self, 1, [&](std::vector<double>& g) {
                         MapMat(g.data(), static_cast<long>(co), static_cast<long>(patch)).noalias() += dy * col.transpose();
                       });
                       accumulate(self, 2, [&](std::vector<double>& g) {
                         Eigen::Map<Eigen::VectorXd>(g.data(), static_cast<long>(co)) += dy.rowwise().sum();
                       });
                       accumulate(self, 0, [&](std::vector<double>& g) {
                         RowMat dcol = ConstMapMat(in(self, 1).value.data(), static_cast<long>(co), static_cast<long>(patch))
                                           .transpose() *
                                       dy;
                         for (std::size_t c = 0; c < ci; ++c) {
                           for (std::size_t ky = 0; ky < kh; ++ky) {
                             for (std::size_t kx = 0; kx < kw; ++kx) {
                               const double* row = dcol.data() + ((c * kh + ky) * kw + kx) * cells;
                               for (std::size_t oy = 0; oy < hout; ++oy) {
                                 const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                                 if (iy < 0 || iy >= static_cast<long>(hin)) continue;
                                 for (std::size_t ox = 0; ox < wout; ++ox) {
                                   const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                                   if (ix < 0 || ix >= static_cast<long>(win)) continue;
                                   g[(c * hin + static_cast<std::size_t>(iy)) * win + static_cast<std::size_t>(ix)] +=
                                       row[oy * wout + ox];
                                 }
                               }
                             }
                           }
                         }
                       });
                     });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result("sum", {}, {total}, {a}, [](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (double& v : g) v += self.grad[0];
    });
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw Error(ErrorKind::kShape, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor l1(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "l1");
  if (x.numel() == 0) throw Error(ErrorKind::kShape, "l1 of empty tensors");
  const double inv_n = 1.0 / static_cast<double>(x.numel());
  double total = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) total += std::abs(x.data()[i] - y.data()[i]);
  return make_result("l1", {}, {total * inv_n}, {x, y}, [inv_n](Node& self) {
    const auto& xv = in(self, 0).value;
    const auto& yv = in(self, 1).value;
    const double g0 = self.grad[0] * inv_n;
    auto sgn = [](double d) { return static_cast<double>((d > 0.0) - (d < 0.0)); };
    accumulate(self, 0, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * sgn(xv[i] - yv[i]);
    });
    accumulate(self, 1, [&](std::vector<double>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= g0 * sgn(xv[i] - yv[i]);
    });
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  if (targets.size() != rows || rows == 0 || classes == 0) throw Error(ErrorKind::kShape, "cross_entropy target count");
  auto probs = std::make_shared<std::vector<double>>(rows * classes);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= classes) {
      throw Error(ErrorKind::kShape, "cross_entropy target out of range");
    }
    const double* z = logits.data().data() + r * classes;
    const double peak = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - peak);
    for (std::size_t c = 0; c < classes; ++c) (*probs)[r * classes + c] = std::exp(z[c] - peak) / denom;
    total += std::log(denom) + peak - z[targets[r]];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  return make_result("cross_entropy", {}, {total * inv}, {logits}, [probs, targets, classes, inv](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      const double g0 = self.grad[0] * inv;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double onehot = static_cast<std::size_t>(targets[k / classes]) == k % classes ? 1.0 : 0.0;
        g[k] += g0 * ((*probs)[k] - onehot);
      }
    });
  });
}

Tensor sinusoidal_embed(const Tensor& coords, std::size_t d, double temperature) {
  require_rank(coords, 2, "sinusoidal_embed");
  if (coords.dim(1) != 2 || d % 4 != 0) throw Error(ErrorKind::kShape, "sinusoidal_embed needs [R,2] and d % 4 == 0");
  const std::size_t rows = coords.dim(0), half = d / 2;
  auto freq = std::make_shared<std::vector<double>>(half);
  for (std::size_t i = 0; i < half; ++i) {
    (*freq)[i] = 2.0 * std::numbers::pi /
                 std::pow(temperature, 2.0 * static_cast<double>(i / 2) / static_cast<double>(half));
  }
  std::vector<double> out(rows * d);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t axis = 0; axis < 2; ++axis) {
      const double c = coords.data()[r * 2 + axis];
      for (std::size_t i = 0; i < half; ++i) {
        const double a = c * (*freq)[i];
        out[r * d + axis * half + i] = (i % 2 == 0) ? std::sin(a) : std::cos(a);
      }
    }
  }
  return make_result("sinusoidal_embed", {rows, d}, std::move(out), {coords}, [freq, rows, d, half](Node& self) {
    accumulate(self, 0, [&](std::vector<double>& g) {
      const auto& cv = in(self, 0).value;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t axis = 0; axis < 2; ++axis) {
          const double c = cv[r * 2 + axis];
          double acc = 0.0;
          for (std::size_t i = 0; i < half; ++i) {
            const double f = (*freq)[i];
            const double dy = self.grad[r * d + axis * half + i];
            acc += (i % 2 == 0) ? dy * f * std::cos(c * f) : -dy * f * std::sin(c * f);
          }
          g[r * 2 + axis] += acc;
        }
      }
    });
  });
}

}  // namespace polyroom::ag
