#include "adprog/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "adprog/error.hpp"

namespace adprog {
namespace {

using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

bool wants_grad(const Node& out, std::size_t input) { return out.inputs[input]->requires_grad; }
std::vector<double>& input_grad(Node& out, std::size_t input) { return out.inputs[input]->grad_buffer(); }
const std::vector<double>& input_value(const Node& out, std::size_t input) { return out.inputs[input]->value; }

// C[m x n] += A[m x k] . B[k x n]. The i-p-j order keeps each C entry's
// partial sums in ascending p, the same order as a plain dot product.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c_row = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a[i * k + p];
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

// C[k x n] += A[m x k]^T . B[m x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* b_row = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a_ip = a[i * k + p];
      double* c_row = c + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

std::vector<double> transposed(std::size_t rows, std::size_t cols, const double* src) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = src[r * cols + c];
  return out;
}

// C[m x n] += A[m x k] . B[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  const std::vector<double> bt = transposed(n, k, b);
  gemm_nn(m, k, n, a, bt.data(), c);
}

template <class Forward, class Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df) {
  std::vector<double> out(x.numel());
  const auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor::from_op(x.shape(), std::move(out), {x}, [df](Node& self) {
    const auto& xv = input_value(self, 0);
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(xv[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int resolved = axis < 0 ? axis + r : axis;
  if (resolved < 0 || resolved >= r) {
    throw ConfigError("softmax axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(resolved);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants_grad(self, k)) continue;
      auto& g = input_grad(self, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (wants_grad(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = input_value(self, 0);
    const auto& bv = input_value(self, 1);
    if (wants_grad(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * factor;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + offset;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank(a, 2, "add_bias");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (bias.numel() != cols) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(a.shape()));
  }
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = a.values()[r * cols + c] + bias.values()[c];
  return Tensor::from_op(a.shape(), std::move(out), {a, bias}, [rows, cols](Node& self) {
    if (wants_grad(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(m, k, n, a.values().data(), b.values().data(), out.data());
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    if (wants_grad(self, 0)) gemm_nt(m, n, k, self.grad.data(), input_value(self, 1).data(), input_grad(self, 0).data());
    if (wants_grad(self, 1)) gemm_tn(m, k, n, input_value(self, 0).data(), self.grad.data(), input_grad(self, 1).data());
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: cannot multiply " + shape_str(a.shape()) + " by transpose of " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(m * n, 0.0);
  gemm_nt(m, k, n, a.values().data(), b.values().data(), out.data());
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    if (wants_grad(self, 0)) gemm_nn(m, n, k, self.grad.data(), input_value(self, 1).data(), input_grad(self, 0).data());
    if (wants_grad(self, 1)) gemm_tn(m, n, k, self.grad.data(), input_value(self, 0).data(), input_grad(self, 1).data());
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  return Tensor::from_op({cols, rows}, transposed(rows, cols, a.values().data()), {a}, [rows, cols](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::from_op(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rank() == 2 ? parts.front().dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != rows) {
      throw DimensionError("concat_cols: " + shape_str(p.shape()) + " does not match " +
                           shape_str(parts.front().shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.begin() + r * widths[k], widths[k], out.begin() + r * total + offset);
    offset += widths[k];
  }
  return Tensor::from_op({rows, total}, std::move(out), parts, [rows, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (wants_grad(self, k)) {
        auto& g = input_grad(self, k);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) g[r * widths[k] + c] += self.grad[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts.front().rank() == 2 ? parts.front().dim(1) : 0;
  std::vector<std::size_t> sizes;
  std::size_t rows = 0;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(1) != cols) {
      throw DimensionError("concat_rows: " + shape_str(p.shape()) + " does not match " +
                           shape_str(parts.front().shape()));
    }
    rows += p.dim(0);
    sizes.push_back(p.numel());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return Tensor::from_op({rows, cols}, std::move(out), parts, [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (wants_grad(self, k)) {
        auto& g = input_grad(self, k);
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (begin >= end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t width = end - begin;
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(a.values().begin() + r * cols + begin, width, out.begin() + r * width);
  return Tensor::from_op({rows, width}, std::move(out), {a}, [rows, cols, begin, width](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) g[r * cols + begin + c] += self.grad[r * width + c];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (begin >= end || end > rows) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for " + shape_str(a.shape()));
  }
  std::vector<double> out(a.values().begin() + begin * cols, a.values().begin() + end * cols);
  return Tensor::from_op({end - begin, cols}, std::move(out), {a}, [begin, cols](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return Tensor::from_op({1}, {total}, {a}, [](Node& self) {
    auto& g = input_grad(self, 0);
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "softmax") return Activation::softmax;
  if (name == "swish") return Activation::swish;
  if (name == "gelu") return Activation::gelu;
  throw ConfigError("unknown activation kind: " + std::string(name));
}

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
    case Activation::swish: return "swish";
    case Activation::gelu: return "gelu";
  }
  throw ConfigError("unknown activation kind");
}

Tensor activate(const Tensor& x, Activation kind, int axis) {
  switch (kind) {
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
    case Activation::swish: return swish(x);
    case Activation::gelu: return gelu(x);
    case Activation::softmax:
      if (axis == kNoAxis) throw ConfigError("softmax requires an axis");
      return softmax(x, axis);
  }
  throw ConfigError("unknown activation kind");
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor swish(const Tensor& x) {
  return unary(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s + v * s * (1.0 - s);
      });
}

Tensor gelu(const Tensor& x) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(kC * (v + kA * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= x.dim(i);
  for (std::size_t i = ax + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(ax);
  std::vector<double> out(x.numel());
  const auto in = x.values();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t q = 0; q < inner; ++q) {
      const std::size_t base = o * len * inner + q;
      double peak = in[base];
      for (std::size_t l = 1; l < len; ++l) peak = std::max(peak, in[base + l * inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        out[base + l * inner] = std::exp(in[base + l * inner] - peak);
        total += out[base + l * inner];
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  }
  return Tensor::from_op(x.shape(), std::move(out), {x}, [outer, inner, len](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t q = 0; q < inner; ++q) {
        const std::size_t base = o * len * inner + q;
        double dot = 0.0;
        for (std::size_t l = 0; l < len; ++l) dot += self.grad[base + l * inner] * self.value[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t i = base + l * inner;
          g[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double factor = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(rng) ? factor : 0.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
  return Tensor::from_op(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

namespace {

struct ConvGeometry {
  std::size_t c_in, h, w, c_out, kh, kw, stride, pad, out_h, out_w;
  std::size_t patch() const { return c_in * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
};

// cols[(c, ky, kx) x (oy, ox)] gathers the receptive fields; zero padding.
std::vector<double> im2col(const ConvGeometry& g, const double* input) {
  std::vector<double> cols(g.patch() * g.pixels(), 0.0);
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = cols.data() + ((c * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            row[oy * g.out_w + ox] = input[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)];
          }
        }
      }
  return cols;
}

void col2im(const ConvGeometry& g, const double* cols, double* input_grad) {
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = cols + ((c * g.kh + ky) * g.kw + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            input_grad[(c * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += row[oy * g.out_w + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  if (kernels.dim(1) != input.dim(0)) {
    throw DimensionError("conv2d: kernels " + shape_str(kernels.shape()) + " expect " +
                         std::to_string(kernels.dim(1)) + " input channels, input is " + shape_str(input.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(2), kernels.dim(3),
                 stride, padding, 0, 0};
  const std::size_t padded_h = g.h + 2 * padding, padded_w = g.w + 2 * padding;
  if (g.kh > padded_h || g.kw > padded_w) {
    throw ConfigError("conv2d: kernel " + shape_str(kernels.shape()) + " exceeds padded input " +
                      std::to_string(padded_h) + "x" + std::to_string(padded_w));
  }
  g.out_h = (padded_h - g.kh) / stride + 1;
  g.out_w = (padded_w - g.kw) / stride + 1;
  const std::vector<double> cols = im2col(g, input.values().data());
  std::vector<double> out(g.c_out * g.pixels(), 0.0);
  gemm_nn(g.c_out, g.patch(), g.pixels(), kernels.values().data(), cols.data(), out.data());
  return Tensor::from_op({g.c_out, g.out_h, g.out_w}, std::move(out), {input, kernels}, [g](Node& self) {
    if (wants_grad(self, 1)) {
      const std::vector<double> cols_again = im2col(g, input_value(self, 0).data());
      gemm_nt(g.c_out, g.pixels(), g.patch(), self.grad.data(), cols_again.data(), input_grad(self, 1).data());
    }
    if (wants_grad(self, 0)) {
      std::vector<double> dcols(g.patch() * g.pixels(), 0.0);
      gemm_tn(g.c_out, g.patch(), g.pixels(), input_value(self, 1).data(), self.grad.data(), dcols.data());
      col2im(g, dcols.data(), input_grad(self, 0).data());
    }
  });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 3, "add_channel_bias");
  const std::size_t channels = x.dim(0), plane = x.dim(1) * x.dim(2);
  if (bias.numel() != channels) {
    throw DimensionError("add_channel_bias: bias " + shape_str(bias.shape()) + " vs " + shape_str(x.shape()));
  }
  std::vector<double> out(x.numel());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = x.values()[c * plane + i] + bias.values()[c];
  return Tensor::from_op(x.shape(), std::move(out), {x, bias}, [channels, plane](Node& self) {
    if (wants_grad(self, 0)) {
      auto& g = input_grad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self, 1)) {
      auto& g = input_grad(self, 1);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) g[c] += self.grad[c * plane + i];
    }
  });
}

namespace {

struct Sample {
  std::size_t lo, hi;
  double frac;
};

// Corner-aligned: output index 0 maps to input 0 and the last output index
// to the last input index. A single output sample takes the center.
std::vector<Sample> bilinear_samples(std::size_t in, std::size_t out) {
  std::vector<Sample> samples(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = out == 1 ? 0.5 * static_cast<double>(in - 1)
                                : static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    samples[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return samples;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw ConfigError("bilinear_resize: target extent must be at least 1x1");
  const std::size_t channels = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (out_h == h && out_w == w) return reshape(input, input.shape());
  const auto ys = bilinear_samples(h, out_h);
  const auto xs = bilinear_samples(w, out_w);
  std::vector<double> out(channels * out_h * out_w);
  const auto in = input.values();
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = in.data() + c * h * w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Sample& sy = ys[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Sample& sx = xs[ox];
        const double top = (1.0 - sx.frac) * plane[sy.lo * w + sx.lo] + sx.frac * plane[sy.lo * w + sx.hi];
        const double bottom = (1.0 - sx.frac) * plane[sy.hi * w + sx.lo] + sx.frac * plane[sy.hi * w + sx.hi];
        out[(c * out_h + oy) * out_w + ox] = (1.0 - sy.frac) * top + sy.frac * bottom;
      }
    }
  }
  return Tensor::from_op({channels, out_h, out_w}, std::move(out), {input},
                         [channels, h, w, out_h, out_w, ys, xs](Node& self) {
                           auto& g = input_grad(self, 0);
                           for (std::size_t c = 0; c < channels; ++c) {
                             double* plane = g.data() + c * h * w;
                             for (std::size_t oy = 0; oy < out_h; ++oy) {
                               const Sample& sy = ys[oy];
                               for (std::size_t ox = 0; ox < out_w; ++ox) {
                                 const Sample& sx = xs[ox];
                                 const double d = self.grad[(c * out_h + oy) * out_w + ox];
                                 plane[sy.lo * w + sx.lo] += d * (1.0 - sy.frac) * (1.0 - sx.frac);
                                 plane[sy.lo * w + sx.hi] += d * (1.0 - sy.frac) * sx.frac;
                                 plane[sy.hi * w + sx.lo] += d * sy.frac * (1.0 - sx.frac);
                                 plane[sy.hi * w + sx.hi] += d * sy.frac * sx.frac;
                               }
                             }
                           }
                         });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: affine parameters do not match " + shape_str(x.shape()));
  }
  std::vector<double> out(x.numel()), xhat(x.numel()), inv_std(rows);
  const auto in = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += in[r * d + c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in[r * d + c] - mu) * (in[r * d + c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (in[r * d + c] - mu) * inv_std[r];
      out[r * d + c] = xhat[r * d + c] * gamma.values()[c] + beta.values()[c];
    }
  }
  return Tensor::from_op(x.shape(), std::move(out), {x, gamma, beta},
                         [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                           const auto& gam = input_value(self, 1);
                           if (wants_grad(self, 1)) {
                             auto& g = input_grad(self, 1);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c] * xhat[r * d + c];
                           }
                           if (wants_grad(self, 2)) {
                             auto& g = input_grad(self, 2);
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
                           }
                           if (!wants_grad(self, 0)) return;
                           auto& g = input_grad(self, 0);
                           const double inv_d = 1.0 / static_cast<double>(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                             double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                             for (std::size_t c = 0; c < d; ++c) {
                               const double dxhat = self.grad[r * d + c] * gam[c];
                               mean_dxhat += dxhat;
                               mean_dxhat_xhat += dxhat * xhat[r * d + c];
                             }
                             mean_dxhat *= inv_d;
                             mean_dxhat_xhat *= inv_d;
                             for (std::size_t c = 0; c < d; ++c) {
                               const double dxhat = self.grad[r * d + c] * gam[c];
                               g[r * d + c] += inv_std[r] * (dxhat - mean_dxhat - xhat[r * d + c] * mean_dxhat_xhat);
                             }
                           }
                         });
}

Tensor extract_patches(const Tensor& image, std::size_t patch) {
  require_rank(image, 3, "extract_patches");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ConfigError("extract_patches: image " + shape_str(image.shape()) + " is not divisible into " +
                      std::to_string(patch) + "x" + std::to_string(patch) + " patches");
  }
  const std::size_t grid_h = h / patch, grid_w = w / patch, n = grid_h * grid_w;
  const std::size_t width = channels * patch * patch;
  // index[k] is the flat image position of patch-matrix entry k.
  std::vector<std::size_t> index(n * width);
  for (std::size_t py = 0; py < grid_h; ++py)
    for (std::size_t px = 0; px < grid_w; ++px)
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < patch; ++y)
          for (std::size_t x = 0; x < patch; ++x) {
            const std::size_t row = py * grid_w + px;
            const std::size_t col = (c * patch + y) * patch + x;
            index[row * width + col] = (c * h + py * patch + y) * w + px * patch + x;
          }
  std::vector<double> out(index.size());
  for (std::size_t k = 0; k < index.size(); ++k) out[k] = image.values()[index[k]];
  return Tensor::from_op({n, width}, std::move(out), {image}, [index = std::move(index)](Node& self) {
    auto& g = input_grad(self, 0);
    for (std::size_t k = 0; k < index.size(); ++k) g[index[k]] += self.grad[k];
  });
}

}  // namespace adprog
