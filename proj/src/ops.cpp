#include "netrecast/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace netrecast {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
bool wants_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::active() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
#ifndef NDEBUG
  for (T v : t.data()) {
    assert(std::isfinite(v) && op);
  }
#else
  (void)t;
  (void)op;
#endif
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(s));
  }
}

struct ConvGeometry {
  std::int64_t batch, in_c, in_h, in_w;
  std::int64_t out_c, k_h, k_w;
  std::int64_t out_h, out_w;
  int stride, pad;

  std::int64_t patch() const { return in_c * k_h * k_w; }
  std::int64_t plane() const { return out_h * out_w; }
  std::int64_t rows() const { return batch * plane(); }
  std::int64_t padded_h() const { return in_h + 2 * pad; }
  std::int64_t padded_w() const { return in_w + 2 * pad; }
};

// The GEMM operand is laid out one row per output pixel (b, oy, ox) with
// columns ordered (ky, kx, c), so each kernel row of a patch is a contiguous
// copy out of a zero-padded channels-last staging buffer. Weights are
// permuted to the same column order.

template <typename T>
void to_padded_nhwc(const ConvGeometry& g, const T* x, T* xp) {
  const std::int64_t Hp = g.padded_h(), Wp = g.padded_w(), C = g.in_c;
  std::fill(xp, xp + g.batch * Hp * Wp * C, T{0});
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const T* s = x + (b * C + c) * g.in_h * g.in_w;
      for (std::int64_t y = 0; y < g.in_h; ++y) {
        T* d = xp + ((b * Hp + y + g.pad) * Wp + g.pad) * C + c;
        for (std::int64_t xx = 0; xx < g.in_w; ++xx) d[xx * C] = s[y * g.in_w + xx];
      }
    }
  }
}

template <typename T>
void patches_from_padded(const ConvGeometry& g, const T* xp, T* col) {
  const std::int64_t Hp = g.padded_h(), Wp = g.padded_w(), C = g.in_c, K = g.patch();
  const bool contiguous_row = g.stride == 1 || g.k_w == 1;
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
      for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
        T* d = col + ((b * g.out_h + oy) * g.out_w + ox) * K;
        for (std::int64_t ky = 0; ky < g.k_h; ++ky) {
          const T* s = xp + ((b * Hp + oy * g.stride + ky) * Wp + ox * g.stride) * C;
          if (contiguous_row) {
            std::copy(s, s + g.k_w * C, d);
          } else {
            for (std::int64_t kx = 0; kx < g.k_w; ++kx) std::copy(s + kx * C, s + kx * C + C, d + kx * C);
          }
          d += g.k_w * C;
        }
      }
    }
  }
}

template <typename T>
void patches_to_padded_accumulate(const ConvGeometry& g, const T* col, T* dxp) {
  const std::int64_t Hp = g.padded_h(), Wp = g.padded_w(), C = g.in_c, K = g.patch();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
      for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
        const T* s = col + ((b * g.out_h + oy) * g.out_w + ox) * K;
        for (std::int64_t ky = 0; ky < g.k_h; ++ky) {
          T* d = dxp + ((b * Hp + oy * g.stride + ky) * Wp + ox * g.stride) * C;
          for (std::int64_t kx = 0; kx < g.k_w; ++kx) {
            for (std::int64_t c = 0; c < C; ++c) d[kx * C + c] += s[kx * C + c];
          }
          s += g.k_w * C;
        }
      }
    }
  }
}

template <typename T>
void from_padded_nhwc_accumulate(const ConvGeometry& g, const T* xp, T* dx) {
  const std::int64_t Hp = g.padded_h(), Wp = g.padded_w(), C = g.in_c;
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      T* d = dx + (b * C + c) * g.in_h * g.in_w;
      for (std::int64_t y = 0; y < g.in_h; ++y) {
        const T* s = xp + ((b * Hp + y + g.pad) * Wp + g.pad) * C + c;
        for (std::int64_t xx = 0; xx < g.in_w; ++xx) d[y * g.in_w + xx] += s[xx * C];
      }
    }
  }
}

// [Cout, Cin, kh, kw] -> [Cout, (kh, kw, Cin)] and back.
template <typename T>
RowMat<T> permute_weight(const ConvGeometry& g, const T* w) {
  RowMat<T> out(g.out_c, g.patch());
  for (std::int64_t o = 0; o < g.out_c; ++o) {
    for (std::int64_t c = 0; c < g.in_c; ++c) {
      for (std::int64_t ky = 0; ky < g.k_h; ++ky) {
        for (std::int64_t kx = 0; kx < g.k_w; ++kx) {
          out(o, (ky * g.k_w + kx) * g.in_c + c) = w[((o * g.in_c + c) * g.k_h + ky) * g.k_w + kx];
        }
      }
    }
  }
  return out;
}

template <typename T>
void unpermute_weight_accumulate(const ConvGeometry& g, const RowMat<T>& m, T* w) {
  for (std::int64_t o = 0; o < g.out_c; ++o) {
    for (std::int64_t c = 0; c < g.in_c; ++c) {
      for (std::int64_t ky = 0; ky < g.k_h; ++ky) {
        for (std::int64_t kx = 0; kx < g.k_w; ++kx) {
          w[((o * g.in_c + c) * g.k_h + ky) * g.k_w + kx] += m(o, (ky * g.k_w + kx) * g.in_c + c);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(weight.shape(), 4, "conv2d", "weight");
  if (stride < 1 || padding < 0) {
    throw ShapeError("conv2d: stride must be >= 1 and padding >= 0 (stride=" +
                     std::to_string(stride) + ", padding=" + std::to_string(padding) + ")");
  }
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_c = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.out_c = weight.dim(0);
  g.k_h = weight.dim(2);
  g.k_w = weight.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.in_c) {
    throw ShapeError("conv2d: input has Cin=" + std::to_string(g.in_c) + " but weight " +
                     shape_str(weight.shape()) + " expects Cin=" + std::to_string(weight.dim(1)));
  }
  if (g.in_h + 2 * padding < g.k_h || g.in_w + 2 * padding < g.k_w) {
    throw ShapeError("conv2d: padded input " + std::to_string(g.in_h + 2 * padding) + "x" +
                     std::to_string(g.in_w + 2 * padding) + " smaller than kernel " +
                     std::to_string(g.k_h) + "x" + std::to_string(g.k_w));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != g.out_c)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match Cout=" +
                     std::to_string(g.out_c));
  }
  g.out_h = (g.in_h + 2 * padding - g.k_h) / stride + 1;
  g.out_w = (g.in_w + 2 * padding - g.k_w) / stride + 1;

  const std::int64_t P = g.plane();
  const std::int64_t N = g.rows();
  const std::int64_t K = g.patch();

  auto col = std::make_shared<RowMat<T>>(N, K);
  {
    RowMat<T> staged(g.batch * g.padded_h() * g.padded_w(), g.in_c);
    to_padded_nhwc(g, input.data().data(), staged.data());
    patches_from_padded(g, staged.data(), col->data());
  }
  const RowMat<T> wp = permute_weight(g, weight.data().data());
  RowMat<T> out_rows(N, g.out_c);
  out_rows.noalias() = (*col) * wp.transpose();

  Tensor<T> out(Shape{g.batch, g.out_c, g.out_h, g.out_w});
  auto o = out.mutable_data();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t co = 0; co < g.out_c; ++co) {
      const T shift = bias.defined() ? bias.data()[static_cast<std::size_t>(co)] : T{0};
      T* dst = o.data() + (b * g.out_c + co) * P;
      const T* src = out_rows.data() + b * P * g.out_c + co;
      for (std::int64_t p = 0; p < P; ++p) dst[p] = src[p * g.out_c] + shift;
    }
  }
  check_finite(out, "conv2d");

  if (wants_grad<T>({&input, &weight, &bias})) {
    if (!weight.requires_grad()) col.reset();
    Tape<T>::active()->record(out, [input, weight, bias, g, col](std::span<const T> gout) {
      const std::int64_t P = g.plane();
      const std::int64_t N = g.rows();
      const std::int64_t K = g.patch();
      RowMat<T> gm(N, g.out_c);
      for (std::int64_t b = 0; b < g.batch; ++b) {
        for (std::int64_t co = 0; co < g.out_c; ++co) {
          const T* src = gout.data() + (b * g.out_c + co) * P;
          T* dst = gm.data() + b * P * g.out_c + co;
          for (std::int64_t p = 0; p < P; ++p) dst[p * g.out_c] = src[p];
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.grad_buffer();
        for (std::int64_t co = 0; co < g.out_c; ++co) db[static_cast<std::size_t>(co)] += gm.col(co).sum();
      }
      if (weight.requires_grad()) {
        RowMat<T> dw(g.out_c, K);
        dw.noalias() = gm.transpose() * (*col);
        unpermute_weight_accumulate(g, dw, weight.grad_buffer().data());
      }
      if (input.requires_grad()) {
        const RowMat<T> wp = permute_weight(g, weight.data().data());
        RowMat<T> dcol(N, K);
        dcol.noalias() = gm * wp;
        RowMat<T> staged = RowMat<T>::Zero(g.batch * g.padded_h() * g.padded_w(), g.in_c);
        patches_to_padded_accumulate(g, dcol.data(), staged.data());
        from_padded_nhwc_accumulate(g, staged.data(), input.grad_buffer().data());
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormStats<T>& running, Mode mode, double momentum, double epsilon) {
  require_rank(input.shape(), 4, "batchnorm2d", "input");
  const std::int64_t B = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  const std::initializer_list<const Tensor<T>*> per_channel{&gamma, &beta, &running.mean, &running.var};
  for (const Tensor<T>* p : per_channel) {
    if (p->ndim() != 1 || p->dim(0) != C) {
      throw ShapeError("batchnorm2d: per-channel tensor " + shape_str(p->shape()) +
                       " does not match C=" + std::to_string(C));
    }
  }
  const std::int64_t M = B * HW;
  if (mode == Mode::train && M < 2) {
    throw DegenerateVarianceError("batchnorm2d: train mode needs B*H*W >= 2 per channel, got " +
                                  std::to_string(M));
  }

  auto x = input.data();
  std::vector<T> mean(static_cast<std::size_t>(C)), inv_std(static_cast<std::size_t>(C));
  if (mode == Mode::train) {
    auto rm = running.mean.mutable_data();
    auto rv = running.var.mutable_data();
    for (std::int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const T* px = x.data() + (b * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) s += px[i];
      }
      const double mu = s / static_cast<double>(M);
      double ss = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const T* px = x.data() + (b * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) {
          const double d = px[i] - mu;
          ss += d * d;
        }
      }
      const double var = ss / static_cast<double>(M);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + epsilon));
      const double unbiased = var * static_cast<double>(M) / static_cast<double>(M - 1);
      rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * mu);
      rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbiased);
    }
  } else {
    auto rm = running.mean.data();
    auto rv = running.var.data();
    for (std::int64_t c = 0; c < C; ++c) {
      mean[c] = rm[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + epsilon));
    }
  }

  Tensor<T> out(input.shape());
  Tensor<T> xhat(input.shape());
  auto y = out.mutable_data();
  auto xh = xhat.mutable_data();
  auto ga = gamma.data();
  auto be = beta.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const std::int64_t off = (b * C + c) * HW;
      const T mu = mean[c], is = inv_std[c], gc = ga[c], bc = be[c];
      for (std::int64_t i = 0; i < HW; ++i) {
        const T n = (x[off + i] - mu) * is;
        xh[off + i] = n;
        y[off + i] = gc * n + bc;
      }
    }
  }
  check_finite(out, "batchnorm2d");

  if (wants_grad<T>({&input, &gamma, &beta})) {
    Tape<T>::active()->record(out, [input, gamma, beta, xhat, inv_std, mode, B, C, HW](
                                       std::span<const T> gy) {
      auto xh = xhat.data();
      const double M = static_cast<double>(B * HW);
      std::vector<double> sum_dy(static_cast<std::size_t>(C), 0.0), sum_dy_xh(static_cast<std::size_t>(C), 0.0);
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
          const std::int64_t off = (b * C + c) * HW;
          double s = 0.0, sx = 0.0;
          for (std::int64_t i = 0; i < HW; ++i) {
            s += gy[off + i];
            sx += static_cast<double>(gy[off + i]) * xh[off + i];
          }
          sum_dy[c] += s;
          sum_dy_xh[c] += sx;
        }
      }
      if (gamma.requires_grad()) {
        auto dg = gamma.grad_buffer();
        for (std::int64_t c = 0; c < C; ++c) dg[c] += static_cast<T>(sum_dy_xh[c]);
      }
      if (beta.requires_grad()) {
        auto db = beta.grad_buffer();
        for (std::int64_t c = 0; c < C; ++c) db[c] += static_cast<T>(sum_dy[c]);
      }
      if (!input.requires_grad()) return;
      auto dx = input.grad_buffer();
      auto ga = gamma.data();
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < C; ++c) {
          const std::int64_t off = (b * C + c) * HW;
          const T k = ga[c] * inv_std[c];
          if (mode == Mode::train) {
            const T mdy = static_cast<T>(sum_dy[c] / M);
            const T mdyx = static_cast<T>(sum_dy_xh[c] / M);
            for (std::int64_t i = 0; i < HW; ++i) {
              dx[off + i] += k * (gy[off + i] - mdy - xh[off + i] * mdyx);
            }
          } else {
            for (std::int64_t i = 0; i < HW; ++i) dx[off + i] += k * gy[off + i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
  }
  Tensor<T> out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (wants_grad<T>({&a, &b})) {
    Tape<T>::active()->record(out, [a, b](std::span<const T> g) {
      for (const auto* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto d = t->grad_buffer();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] * factor;
  if (wants_grad<T>({&x})) {
    Tape<T>::active()->record(out, [x, factor](std::span<const T> g) {
      auto d = x.grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > T{0} ? in[i] : T{0};
  if (wants_grad<T>({&x})) {
    Tape<T>::active()->record(out, [x, out_values = out](std::span<const T> g) {
      auto d = x.grad_buffer();
      auto y = out_values.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += y[i] > T{0} ? g[i] : T{0};
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  require_rank(first, 4, "concat_channels", "input 0");
  std::int64_t total_c = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    require_rank(s, 4, "concat_channels", "input");
    if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeError("concat_channels: input " + std::to_string(i) + " " + shape_str(s) +
                       " incompatible with " + shape_str(first) + " (B, H, W must match)");
    }
    total_c += s[1];
  }
  const std::int64_t B = first[0], HW = first[2] * first[3];
  Tensor<T> out(Shape{B, total_c, first[2], first[3]});
  auto o = out.mutable_data();
  std::int64_t c_off = 0;
  for (const auto& p : parts) {
    const std::int64_t ci = p.dim(1);
    auto src = p.data();
    for (std::int64_t b = 0; b < B; ++b) {
      std::copy_n(src.data() + b * ci * HW, ci * HW, o.data() + (b * total_c + c_off) * HW);
    }
    c_off += ci;
  }
  bool any = false;
  if (Tape<T>::active() != nullptr) {
    for (const auto& p : parts) any = any || p.requires_grad();
  }
  if (any) {
    std::vector<Tensor<T>> keep(parts.begin(), parts.end());
    Tape<T>::active()->record(out, [keep, B, HW, total_c](std::span<const T> g) {
      std::int64_t c_off = 0;
      for (const auto& p : keep) {
        const std::int64_t ci = p.dim(1);
        if (p.requires_grad()) {
          auto d = p.grad_buffer();
          for (std::int64_t b = 0; b < B; ++b) {
            const T* src = g.data() + (b * total_c + c_off) * HW;
            T* dst = d.data() + b * ci * HW;
            for (std::int64_t i = 0; i < ci * HW; ++i) dst[i] += src[i];
          }
        }
        c_off += ci;
      }
    });
  }
  return out;
}

namespace {
struct PoolGeometry {
  std::int64_t B, C, H, W, Ho, Wo;
  int k, s;
};

PoolGeometry pool_geometry(const Shape& shape, int kernel, int stride, const char* op) {
  require_rank(shape, 4, op, "input");
  if (kernel < 1 || stride < 1) throw ShapeError(std::string(op) + ": kernel and stride must be >= 1");
  if (shape[2] < kernel || shape[3] < kernel) {
    throw ShapeError(std::string(op) + ": input " + shape_str(shape) + " smaller than window " +
                     std::to_string(kernel));
  }
  PoolGeometry g{shape[0], shape[1], shape[2], shape[3], 0, 0, kernel, stride};
  g.Ho = (g.H - kernel) / stride + 1;
  g.Wo = (g.W - kernel) / stride + 1;
  return g;
}
}  // namespace

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& input, int kernel, int stride) {
  const PoolGeometry g = pool_geometry(input.shape(), kernel, stride, "avgpool2d");
  Tensor<T> out(Shape{g.B, g.C, g.Ho, g.Wo});
  auto o = out.mutable_data();
  auto x = input.data();
  const T inv = T{1} / static_cast<T>(kernel * kernel);
  for (std::int64_t bc = 0; bc < g.B * g.C; ++bc) {
    const T* src = x.data() + bc * g.H * g.W;
    T* dst = o.data() + bc * g.Ho * g.Wo;
    for (std::int64_t oy = 0; oy < g.Ho; ++oy) {
      for (std::int64_t ox = 0; ox < g.Wo; ++ox) {
        T acc{0};
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) acc += src[(oy * stride + ky) * g.W + ox * stride + kx];
        }
        dst[oy * g.Wo + ox] = acc * inv;
      }
    }
  }
  if (wants_grad<T>({&input})) {
    Tape<T>::active()->record(out, [input, g, inv](std::span<const T> gy) {
      auto d = input.grad_buffer();
      for (std::int64_t bc = 0; bc < g.B * g.C; ++bc) {
        T* dst = d.data() + bc * g.H * g.W;
        const T* src = gy.data() + bc * g.Ho * g.Wo;
        for (std::int64_t oy = 0; oy < g.Ho; ++oy) {
          for (std::int64_t ox = 0; ox < g.Wo; ++ox) {
            const T v = src[oy * g.Wo + ox] * inv;
            for (int ky = 0; ky < g.k; ++ky) {
              for (int kx = 0; kx < g.k; ++kx) dst[(oy * g.s + ky) * g.W + ox * g.s + kx] += v;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int kernel, int stride) {
  const PoolGeometry g = pool_geometry(input.shape(), kernel, stride, "maxpool2d");
  Tensor<T> out(Shape{g.B, g.C, g.Ho, g.Wo});
  auto o = out.mutable_data();
  auto x = input.data();
  auto argmax = std::make_shared<std::vector<std::int64_t>>(o.size());
  for (std::int64_t bc = 0; bc < g.B * g.C; ++bc) {
    const T* src = x.data() + bc * g.H * g.W;
    for (std::int64_t oy = 0; oy < g.Ho; ++oy) {
      for (std::int64_t ox = 0; ox < g.Wo; ++ox) {
        std::int64_t best = (oy * stride) * g.W + ox * stride;
        for (int ky = 0; ky < kernel; ++ky) {
          for (int kx = 0; kx < kernel; ++kx) {
            const std::int64_t idx = (oy * stride + ky) * g.W + ox * stride + kx;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::int64_t oi = bc * g.Ho * g.Wo + oy * g.Wo + ox;
        o[oi] = src[best];
        (*argmax)[oi] = bc * g.H * g.W + best;
      }
    }
  }
  if (wants_grad<T>({&input})) {
    Tape<T>::active()->record(out, [input, argmax](std::span<const T> gy) {
      auto d = input.grad_buffer();
      for (std::size_t i = 0; i < gy.size(); ++i) d[(*argmax)[i]] += gy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "global_avgpool", "input");
  const std::int64_t B = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  Tensor<T> out(Shape{B, C});
  auto o = out.mutable_data();
  auto x = input.data();
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    T acc{0};
    for (std::int64_t i = 0; i < HW; ++i) acc += x[bc * HW + i];
    o[bc] = acc / static_cast<T>(HW);
  }
  if (wants_grad<T>({&input})) {
    Tape<T>::active()->record(out, [input, B, C, HW](std::span<const T> g) {
      auto d = input.grad_buffer();
      const T inv = T{1} / static_cast<T>(HW);
      for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const T v = g[bc] * inv;
        for (std::int64_t i = 0; i < HW; ++i) d[bc * HW + i] += v;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(input.shape(), 2, "linear", "input");
  require_rank(weight.shape(), 2, "linear", "weight");
  const std::int64_t B = input.dim(0), D = input.dim(1), K = weight.dim(0);
  if (weight.dim(1) != D) {
    throw ShapeError("linear: input feature dim " + std::to_string(D) + " vs weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != K)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match K=" +
                     std::to_string(K));
  }
  Tensor<T> out(Shape{B, K});
  MatMap<T> y(out.mutable_data().data(), B, K);
  ConstMatMap<T> x(input.data().data(), B, D);
  ConstMatMap<T> w(weight.data().data(), K, D);
  y.noalias() = x * w.transpose();
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t k = 0; k < K; ++k) y(b, k) += bv[k];
    }
  }
  check_finite(out, "linear");
  if (wants_grad<T>({&input, &weight, &bias})) {
    Tape<T>::active()->record(out, [input, weight, bias, B, D, K](std::span<const T> g) {
      ConstMatMap<T> gm(g.data(), B, K);
      if (input.requires_grad()) {
        MatMap<T> dx(input.grad_buffer().data(), B, D);
        ConstMatMap<T> w(weight.data().data(), K, D);
        dx.noalias() += gm * w;
      }
      if (weight.requires_grad()) {
        MatMap<T> dw(weight.grad_buffer().data(), K, D);
        ConstMatMap<T> x(input.data().data(), B, D);
        dw.noalias() += gm.transpose() * x;
      }
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.grad_buffer();
        for (std::int64_t k = 0; k < K; ++k) db[k] += gm.col(k).sum();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  if (wants_grad<T>({&x})) {
    Tape<T>::active()->record(out, [x](std::span<const T> g) {
      auto d = x.grad_buffer();
      for (auto& v : d) v += g[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& prediction, const Tensor<T>& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + shape_str(prediction.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  const auto n = static_cast<double>(prediction.numel());
  if (n == 0) throw ShapeError("mse_loss: empty tensors");
  auto p = prediction.data();
  auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / n));
  if (wants_grad<T>({&prediction})) {
    Tape<T>::active()->record(out, [prediction, target, n](std::span<const T> g) {
      auto d = prediction.grad_buffer();
      auto p = prediction.data();
      auto t = target.data();
      const T k = static_cast<T>(2.0 / n) * g[0];
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += k * (p[i] - t[i]);
    });
  }
  return out;
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "cross_entropy", "logits");
  const std::int64_t B = logits.dim(0), K = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != B) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(B));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= K) {
      throw LabelError("cross_entropy: label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " outside [0, " + std::to_string(K) + ")");
    }
  }
  auto z = logits.data();
  auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(B * K));
  double loss = 0.0;
  for (std::int64_t b = 0; b < B; ++b) {
    const T* row = z.data() + b * K;
    const T mx = *std::max_element(row, row + K);
    double denom = 0.0;
    for (std::int64_t k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k] - mx));
    const double log_denom = std::log(denom);
    for (std::int64_t k = 0; k < K; ++k) {
      (*probs)[b * K + k] = static_cast<T>(std::exp(static_cast<double>(row[k] - mx) - log_denom));
    }
    loss += log_denom - static_cast<double>(row[labels[b]] - mx);
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(B)));
  if (wants_grad<T>({&logits})) {
    std::vector<int> ys(labels.begin(), labels.end());
    Tape<T>::active()->record(out, [logits, probs, ys, B, K](std::span<const T> g) {
      auto d = logits.grad_buffer();
      const T k = g[0] / static_cast<T>(B);
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t c = 0; c < K; ++c) {
          const T target = (c == ys[b]) ? T{1} : T{0};
          d[b * K + c] += k * ((*probs)[b * K + c] - target);
        }
      }
    });
  }
  return out;
}

#define NETRECAST_INSTANTIATE_OPS(T)                                                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);  \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                 BatchNormStats<T>&, Mode, double, double);                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                             \
  template Tensor<T> avgpool2d(const Tensor<T>&, int, int);                                   \
  template Tensor<T> maxpool2d(const Tensor<T>&, int, int);                                   \
  template Tensor<T> global_avgpool(const Tensor<T>&);                                        \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);

NETRECAST_INSTANTIATE_OPS(float)
NETRECAST_INSTANTIATE_OPS(double)

}  // namespace netrecast
