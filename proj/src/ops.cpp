#include "dimnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dimnas {
namespace {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct SamePadding {
  Index out;
  Index before;
};

SamePadding same_padding(Index in, Index k, Index stride) {
  const Index out = (in + stride - 1) / stride;
  const Index total = std::max<Index>((out - 1) * stride + k - in, 0);
  return {out, total / 2};
}

// Spatial geometry shared by conv and pool; rank-1 inputs are a single row.
struct Window {
  Index batch, channels, h, w;
  Index kh, kw, sh, sw;
  Index ho, wo, pad_top, pad_left;

  Index in_plane() const { return h * w; }
  Index out_plane() const { return ho * wo; }
};

Window make_window(const Shape& x, Index k, Index stride) {
  Window g{};
  g.batch = x.batch();
  g.channels = x.channels();
  g.h = x.height();
  g.w = x.width();
  const bool two_d = x.spatial_rank() == 2;
  g.kh = two_d ? k : 1;
  g.kw = k;
  g.sh = two_d ? stride : 1;
  g.sw = stride;
  const auto rows = same_padding(g.h, g.kh, g.sh);
  const auto cols = same_padding(g.w, g.kw, g.sw);
  g.ho = rows.out;
  g.wo = cols.out;
  g.pad_top = rows.before;
  g.pad_left = cols.before;
  return g;
}

void require_feature_map(const Shape& s, const char* op) {
  if (s.spatial_rank() != 1 && s.spatial_rank() != 2) {
    throw ShapeError(std::string(op) + ": spatial rank must be 1 or 2, got " + s.str());
  }
}

template <typename Scalar>
void im2col(const Scalar* x, const Window& g, Matrix<Scalar>& col) {
  const Index k = g.channels * g.kh * g.kw;
  const Index p = g.out_plane();
  col.resize(k, g.batch * p);
  for (Index n = 0; n < g.batch; ++n) {
    for (Index oy = 0; oy < g.ho; ++oy) {
      for (Index ox = 0; ox < g.wo; ++ox) {
        Scalar* dst = col.data() + (n * p + oy * g.wo + ox) * k;
        for (Index c = 0; c < g.channels; ++c) {
          const Scalar* plane = x + (n * g.channels + c) * g.in_plane();
          for (Index ky = 0; ky < g.kh; ++ky) {
            const Index iy = oy * g.sh - g.pad_top + ky;
            const bool row_ok = iy >= 0 && iy < g.h;
            for (Index kx = 0; kx < g.kw; ++kx) {
              const Index ix = ox * g.sw - g.pad_left + kx;
              *dst++ = (row_ok && ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : Scalar(0);
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_sample(const Matrix<Scalar>& dcol, const Window& g, Index n, Scalar* dx) {
  const Index k = g.channels * g.kh * g.kw;
  for (Index oy = 0; oy < g.ho; ++oy) {
    for (Index ox = 0; ox < g.wo; ++ox) {
      const Scalar* src = dcol.data() + (oy * g.wo + ox) * k;
      for (Index c = 0; c < g.channels; ++c) {
        Scalar* plane = dx + (n * g.channels + c) * g.in_plane();
        for (Index ky = 0; ky < g.kh; ++ky) {
          const Index iy = oy * g.sh - g.pad_top + ky;
          const bool row_ok = iy >= 0 && iy < g.h;
          for (Index kx = 0; kx < g.kw; ++kx, ++src) {
            const Index ix = ox * g.sw - g.pad_left + kx;
            if (row_ok && ix >= 0 && ix < g.w) plane[iy * g.w + ix] += *src;
          }
        }
      }
    }
  }
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

}  // namespace

template <typename Scalar>
ConvParams<Scalar> ConvParams<Scalar>::zeros(int rank, Index in_channels, Index out_channels,
                                             Index kernel_size, Index stride) {
  if (kernel_size != 1 && kernel_size != 3 && kernel_size != 5) {
    throw ShapeError("kernel size must be 1, 3 or 5, got " + std::to_string(kernel_size));
  }
  if (stride < 1) throw ShapeError("stride must be positive");
  ConvParams p;
  if (rank == 1) {
    p.kernel = Tensor<Scalar>::zeros(Shape{out_channels, in_channels, kernel_size});
  } else if (rank == 2) {
    p.kernel = Tensor<Scalar>::zeros(Shape{out_channels, in_channels, kernel_size, kernel_size});
  } else {
    throw ShapeError("convolution rank must be 1 or 2, got " + std::to_string(rank));
  }
  p.bias = Tensor<Scalar>::zeros(Shape{1, out_channels, 1});
  p.kernel.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  p.stride = stride;
  return p;
}

template <typename Scalar>
NormParams<Scalar> NormParams<Scalar>::identity(Index channels) {
  NormParams p;
  p.gamma = Tensor<Scalar>::full(Shape{1, channels, 1}, Scalar(1));
  p.beta = Tensor<Scalar>::zeros(Shape{1, channels, 1});
  p.gamma.set_requires_grad(true);
  p.beta.set_requires_grad(true);
  p.running_mean = Array::Zero(channels);
  p.running_var = Array::Ones(channels);
  return p;
}

template <typename Scalar>
Tensor<Scalar> conv(const Tensor<Scalar>& x, const ConvParams<Scalar>& p) {
  const Shape& xs = x.shape();
  require_feature_map(xs, "conv");
  const Shape& ks = p.kernel.shape();
  if (ks.spatial_rank() != xs.spatial_rank()) {
    throw ShapeError("conv: kernel " + ks.str() + " does not match input rank of " + xs.str());
  }
  if (ks[1] != xs.channels()) {
    throw ShapeError("conv: input has " + std::to_string(xs.channels()) +
                     " channels but kernel expects " + std::to_string(ks[1]) + " (kernel " +
                     ks.str() + ", input " + xs.str() + ")");
  }
  if (ks.spatial_rank() == 2 && ks[2] != ks[3]) throw ShapeError("conv: rank-2 kernels must be square");
  if (p.bias.numel() != ks[0]) throw ShapeError("conv: bias size does not match out channels");

  const Index cout = ks[0];
  const Window g = make_window(xs, ks.width(), p.stride);
  const Index k = g.channels * g.kh * g.kw;
  const Index plane = g.out_plane();

  auto col = std::make_shared<Matrix<Scalar>>();
  im2col(x.value().data(), g, *col);

  Eigen::Map<const RowMatrix<Scalar>> weights(p.kernel.value().data(), cout, k);
  Eigen::Map<const Vector<Scalar>> bias(p.bias.value().data(), cout);
  typename Tensor<Scalar>::Array out(g.batch * cout * plane);
  for (Index n = 0; n < g.batch; ++n) {
    Eigen::Map<RowMatrix<Scalar>> y(out.data() + n * cout * plane, cout, plane);
    y.noalias() = weights * col->middleCols(n * plane, plane);
    y.colwise() += bias;
  }

  const Shape out_shape = xs.with_channels(cout).with_spatial(g.ho, g.wo);
  Tensor<Scalar> kernel = p.kernel;
  return Tensor<Scalar>::make_result(
      out_shape, std::move(out), {x, p.kernel, p.bias},
      [g, cout, k, plane, col, kernel](const auto& grad, auto& grads) {
        Eigen::Map<const RowMatrix<Scalar>> weights(kernel.value().data(), cout, k);
        Matrix<Scalar> dcol;
        for (Index n = 0; n < g.batch; ++n) {
          Eigen::Map<const RowMatrix<Scalar>> dy(grad.data() + n * cout * plane, cout, plane);
          if (grads[1]) {
            Eigen::Map<RowMatrix<Scalar>> dw(grads[1]->data(), cout, k);
            dw.noalias() += dy * col->middleCols(n * plane, plane).transpose();
          }
          if (grads[2]) {
            Eigen::Map<Vector<Scalar>> db(grads[2]->data(), cout);
            db += dy.rowwise().sum();
          }
          if (grads[0]) {
            dcol.noalias() = weights.transpose() * dy;
            col2im_sample(dcol, g, n, grads[0]->data());
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> downsample(const Tensor<Scalar>& x, const ConvParams<Scalar>& p) {
  if (p.stride != 2) throw ShapeError("downsample: expected stride 2, got " + std::to_string(p.stride));
  return conv(x, p);
}

template <typename Scalar>
Tensor<Scalar> pool(const Tensor<Scalar>& x, PoolKind kind, Index kernel_size) {
  const Shape& xs = x.shape();
  require_feature_map(xs, "pool");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ShapeError("pool: kernel size must be odd");
  const Window g = make_window(xs, kernel_size, 1);
  const Index planes = g.batch * g.channels;
  const Scalar* in = x.value().data();
  typename Tensor<Scalar>::Array out(xs.numel());

  if (kind == PoolKind::Max) {
    auto source = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(xs.numel()));
    for (Index pl = 0; pl < planes; ++pl) {
      const Index base = pl * g.in_plane();
      for (Index oy = 0; oy < g.ho; ++oy) {
        for (Index ox = 0; ox < g.wo; ++ox) {
          Scalar best = -std::numeric_limits<Scalar>::infinity();
          Index best_at = -1;
          for (Index ky = 0; ky < g.kh; ++ky) {
            const Index iy = oy - g.pad_top + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (Index kx = 0; kx < g.kw; ++kx) {
              const Index ix = ox - g.pad_left + kx;
              if (ix < 0 || ix >= g.w) continue;
              const Index at = base + iy * g.w + ix;
              if (best_at < 0 || in[at] > best) {
                best = in[at];
                best_at = at;
              }
            }
          }
          const Index o = base + oy * g.wo + ox;
          out(o) = best;
          (*source)[static_cast<std::size_t>(o)] = best_at;
        }
      }
    }
    return Tensor<Scalar>::make_result(xs, std::move(out), {x},
                                       [source](const auto& grad, auto& grads) {
                                         if (!grads[0]) return;
                                         auto& dx = *grads[0];
                                         for (Index o = 0; o < grad.size(); ++o) {
                                           dx((*source)[static_cast<std::size_t>(o)]) += grad(o);
                                         }
                                       });
  }

  // Average over valid (unpadded) cells only.
  auto window_sum = [g](const Scalar* src, Index base, Index oy, Index ox, Index& count) {
    Scalar acc = 0;
    count = 0;
    for (Index ky = 0; ky < g.kh; ++ky) {
      const Index iy = oy - g.pad_top + ky;
      if (iy < 0 || iy >= g.h) continue;
      for (Index kx = 0; kx < g.kw; ++kx) {
        const Index ix = ox - g.pad_left + kx;
        if (ix < 0 || ix >= g.w) continue;
        acc += src[base + iy * g.w + ix];
        ++count;
      }
    }
    return acc;
  };
  for (Index pl = 0; pl < planes; ++pl) {
    const Index base = pl * g.in_plane();
    for (Index oy = 0; oy < g.ho; ++oy) {
      for (Index ox = 0; ox < g.wo; ++ox) {
        Index count = 0;
        const Scalar acc = window_sum(in, base, oy, ox, count);
        out(base + oy * g.wo + ox) = acc / static_cast<Scalar>(count);
      }
    }
  }
  return Tensor<Scalar>::make_result(
      xs, std::move(out), {x}, [g, planes](const auto& grad, auto& grads) {
        if (!grads[0]) return;
        auto& dx = *grads[0];
        for (Index pl = 0; pl < planes; ++pl) {
          const Index base = pl * g.in_plane();
          for (Index oy = 0; oy < g.ho; ++oy) {
            for (Index ox = 0; ox < g.wo; ++ox) {
              const Index y0 = std::max<Index>(oy - g.pad_top, 0);
              const Index y1 = std::min<Index>(oy - g.pad_top + g.kh, g.h);
              const Index x0 = std::max<Index>(ox - g.pad_left, 0);
              const Index x1 = std::min<Index>(ox - g.pad_left + g.kw, g.w);
              const Scalar share = grad(base + oy * g.wo + ox) / static_cast<Scalar>((y1 - y0) * (x1 - x0));
              for (Index iy = y0; iy < y1; ++iy) {
                for (Index ix = x0; ix < x1; ++ix) dx(base + iy * g.w + ix) += share;
              }
            }
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "add");
  return Tensor<Scalar>::make_result(a.shape(), a.value() + b.value(), {a, b},
                                     [](const auto& grad, auto& grads) {
                                       if (grads[0]) *grads[0] += grad;
                                       if (grads[1]) *grads[1] += grad;
                                     });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> input = x;
  return Tensor<Scalar>::make_result(x.shape(), x.value().max(Scalar(0)), {x},
                                     [input](const auto& grad, auto& grads) {
                                       if (!grads[0]) return;
                                       *grads[0] += (input.value() > Scalar(0)).select(grad, Scalar(0));
                                     });
}

template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, NormParams<Scalar>& p, bool training) {
  using Array = typename Tensor<Scalar>::Array;
  const Shape& xs = x.shape();
  require_feature_map(xs, "batch_norm");
  const Index channels = xs.channels();
  if (p.channels() != channels) {
    throw ShapeError("batch_norm: " + std::to_string(p.channels()) + " norm channels vs input " +
                     xs.str());
  }
  const Index batch = xs.batch();
  const Index plane = xs.spatial_size();
  const Index count = batch * plane;
  const Scalar* in = x.value().data();

  Array mean(channels), inv_std(channels);
  if (training) {
    for (Index c = 0; c < channels; ++c) {
      double acc = 0;
      for (Index n = 0; n < batch; ++n) {
        const Scalar* src = in + (n * channels + c) * plane;
        for (Index i = 0; i < plane; ++i) acc += src[i];
      }
      const double m = acc / static_cast<double>(count);
      double sq = 0;
      for (Index n = 0; n < batch; ++n) {
        const Scalar* src = in + (n * channels + c) * plane;
        for (Index i = 0; i < plane; ++i) sq += (src[i] - m) * (src[i] - m);
      }
      const double var = sq / static_cast<double>(count);
      mean(c) = static_cast<Scalar>(m);
      inv_std(c) = static_cast<Scalar>(1.0 / std::sqrt(var + static_cast<double>(p.epsilon)));
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      p.running_mean(c) = p.momentum * p.running_mean(c) + (Scalar(1) - p.momentum) * static_cast<Scalar>(m);
      p.running_var(c) = p.momentum * p.running_var(c) + (Scalar(1) - p.momentum) * static_cast<Scalar>(unbiased);
    }
  } else {
    mean = p.running_mean;
    inv_std = (p.running_var + p.epsilon).sqrt().inverse();
  }

  auto normalized = std::make_shared<Array>(xs.numel());
  Array out(xs.numel());
  const Scalar* gamma = p.gamma.value().data();
  const Scalar* beta = p.beta.value().data();
  for (Index n = 0; n < batch; ++n) {
    for (Index c = 0; c < channels; ++c) {
      const Index base = (n * channels + c) * plane;
      for (Index i = 0; i < plane; ++i) {
        const Scalar xhat = (in[base + i] - mean(c)) * inv_std(c);
        (*normalized)(base + i) = xhat;
        out(base + i) = gamma[c] * xhat + beta[c];
      }
    }
  }

  Tensor<Scalar> gamma_t = p.gamma;
  return Tensor<Scalar>::make_result(
      xs, std::move(out), {x, p.gamma, p.beta},
      [normalized, inv_std, gamma_t, training, batch, channels, plane, count](const auto& grad,
                                                                              auto& grads) {
        const Scalar* gamma = gamma_t.value().data();
        for (Index c = 0; c < channels; ++c) {
          Scalar sum_dy = 0, sum_dy_xhat = 0;
          for (Index n = 0; n < batch; ++n) {
            const Index base = (n * channels + c) * plane;
            for (Index i = 0; i < plane; ++i) {
              sum_dy += grad(base + i);
              sum_dy_xhat += grad(base + i) * (*normalized)(base + i);
            }
          }
          if (grads[1]) (*grads[1])(c) += sum_dy_xhat;
          if (grads[2]) (*grads[2])(c) += sum_dy;
          if (!grads[0]) continue;
          auto& dx = *grads[0];
          const Scalar g = gamma[c] * inv_std(c);
          if (!training) {
            for (Index n = 0; n < batch; ++n) {
              const Index base = (n * channels + c) * plane;
              for (Index i = 0; i < plane; ++i) dx(base + i) += g * grad(base + i);
            }
            continue;
          }
          const Scalar m = static_cast<Scalar>(count);
          for (Index n = 0; n < batch; ++n) {
            const Index base = (n * channels + c) * plane;
            for (Index i = 0; i < plane; ++i) {
              dx(base + i) += g / m *
                              (m * grad(base + i) - sum_dy - (*normalized)(base + i) * sum_dy_xhat);
            }
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> upsample(const Tensor<Scalar>& x) {
  const Shape& xs = x.shape();
  require_feature_map(xs, "upsample");
  const bool two_d = xs.spatial_rank() == 2;
  const Index h = xs.height(), w = xs.width();
  const Index ho = two_d ? 2 * h : 1, wo = 2 * w;
  const Index planes = xs.batch() * xs.channels();
  const Shape out_shape = xs.with_spatial(ho, wo);
  typename Tensor<Scalar>::Array out(out_shape.numel());
  const Scalar* in = x.value().data();
  for (Index pl = 0; pl < planes; ++pl) {
    for (Index oy = 0; oy < ho; ++oy) {
      const Index iy = two_d ? oy / 2 : 0;
      for (Index ox = 0; ox < wo; ++ox) out(pl * ho * wo + oy * wo + ox) = in[pl * h * w + iy * w + ox / 2];
    }
  }
  return Tensor<Scalar>::make_result(
      out_shape, std::move(out), {x}, [two_d, h, w, ho, wo, planes](const auto& grad, auto& grads) {
        if (!grads[0]) return;
        auto& dx = *grads[0];
        for (Index pl = 0; pl < planes; ++pl) {
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = two_d ? oy / 2 : 0;
            for (Index ox = 0; ox < wo; ++ox) dx(pl * h * w + iy * w + ox / 2) += grad(pl * ho * wo + oy * wo + ox);
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> softmax_channels(const Tensor<Scalar>& x) {
  const Shape& xs = x.shape();
  require_feature_map(xs, "softmax_channels");
  const Index batch = xs.batch(), channels = xs.channels(), plane = xs.spatial_size();
  auto probs = std::make_shared<typename Tensor<Scalar>::Array>(xs.numel());
  const Scalar* in = x.value().data();
  for (Index n = 0; n < batch; ++n) {
    for (Index i = 0; i < plane; ++i) {
      const Index base = n * channels * plane + i;
      Scalar top = in[base];
      for (Index c = 1; c < channels; ++c) top = std::max(top, in[base + c * plane]);
      Scalar norm = 0;
      for (Index c = 0; c < channels; ++c) {
        const Scalar e = std::exp(in[base + c * plane] - top);
        (*probs)(base + c * plane) = e;
        norm += e;
      }
      for (Index c = 0; c < channels; ++c) (*probs)(base + c * plane) /= norm;
    }
  }
  return Tensor<Scalar>::make_result(
      xs, *probs, {x}, [probs, batch, channels, plane](const auto& grad, auto& grads) {
        if (!grads[0]) return;
        auto& dx = *grads[0];
        const auto& p = *probs;
        for (Index n = 0; n < batch; ++n) {
          for (Index i = 0; i < plane; ++i) {
            const Index base = n * channels * plane + i;
            Scalar inner = 0;
            for (Index c = 0; c < channels; ++c) inner += p(base + c * plane) * grad(base + c * plane);
            for (Index c = 0; c < channels; ++c) {
              dx(base + c * plane) += p(base + c * plane) * (grad(base + c * plane) - inner);
            }
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  typename Tensor<Scalar>::Array out(1);
  out(0) = x.value().sum();
  return Tensor<Scalar>::make_result(Shape{1, 1, 1}, std::move(out), {x},
                                     [](const auto& grad, auto& grads) {
                                       if (grads[0]) *grads[0] += grad(0);
                                     });
}

template <typename Scalar>
Tensor<Scalar> dot(const Tensor<Scalar>& x, const Eigen::Array<Scalar, Eigen::Dynamic, 1>& weights) {
  if (weights.size() != x.numel()) throw ShapeError("dot: weight count does not match " + x.shape().str());
  typename Tensor<Scalar>::Array out(1);
  out(0) = (x.value() * weights).sum();
  auto w = std::make_shared<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(weights);
  return Tensor<Scalar>::make_result(Shape{1, 1, 1}, std::move(out), {x},
                                     [w](const auto& grad, auto& grads) {
                                       if (grads[0]) *grads[0] += grad(0) * *w;
                                     });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  return Tensor<Scalar>::make_result(x.shape(), x.value() * factor, {x},
                                     [factor](const auto& grad, auto& grads) {
                                       if (grads[0]) *grads[0] += factor * grad;
                                     });
}

template <typename Scalar>
std::vector<std::uint8_t> argmax_channels(const Tensor<Scalar>& x) {
  const Shape& xs = x.shape();
  const Index batch = xs.batch(), channels = xs.channels(), plane = xs.spatial_size();
  if (channels > 255) throw ShapeError("argmax_channels: too many classes");
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(batch * plane));
  const Scalar* in = x.value().data();
  for (Index n = 0; n < batch; ++n) {
    for (Index i = 0; i < plane; ++i) {
      const Index base = n * channels * plane + i;
      Index best = 0;
      for (Index c = 1; c < channels; ++c) {
        if (in[base + c * plane] > in[base + best * plane]) best = c;
      }
      labels[static_cast<std::size_t>(n * plane + i)] = static_cast<std::uint8_t>(best);
    }
  }
  return labels;
}

#define DIMNAS_INSTANTIATE_OPS(S)                                                         \
  template struct ConvParams<S>;                                                          \
  template struct NormParams<S>;                                                          \
  template Tensor<S> conv(const Tensor<S>&, const ConvParams<S>&);                        \
  template Tensor<S> downsample(const Tensor<S>&, const ConvParams<S>&);                  \
  template Tensor<S> pool(const Tensor<S>&, PoolKind, Index);                             \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                             \
  template Tensor<S> relu(const Tensor<S>&);                                              \
  template Tensor<S> batch_norm(const Tensor<S>&, NormParams<S>&, bool);                  \
  template Tensor<S> upsample(const Tensor<S>&);                                          \
  template Tensor<S> softmax_channels(const Tensor<S>&);                                  \
  template Tensor<S> sum(const Tensor<S>&);                                               \
  template Tensor<S> dot(const Tensor<S>&, const Eigen::Array<S, Eigen::Dynamic, 1>&);    \
  template Tensor<S> scale(const Tensor<S>&, S);                                          \
  template std::vector<std::uint8_t> argmax_channels(const Tensor<S>&);

DIMNAS_INSTANTIATE_OPS(float)
DIMNAS_INSTANTIATE_OPS(double)

}  // namespace dimnas
