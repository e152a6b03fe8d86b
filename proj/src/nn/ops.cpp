#include "stepcount/nn/ops.h"

#include <Eigen/Core>

#include <algorithm>
#include <limits>

#include "stepcount/errors.h"

namespace stepcount::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, ho, wo, pad, stride;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t positions() const { return ho * wo; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const auto P = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * P;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : src[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const auto P = g.positions();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * P;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
          const T* src = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias, Conv2dOptions opts) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  require(xv.rank() == 4, "conv2d: input must be N x C x H x W, got " + shape_string(xv.shape()));
  require(wv.rank() == 4, "conv2d: weight must be O x C x kh x kw, got " + shape_string(wv.shape()));
  require(xv.dim(1) == wv.dim(1), "conv2d: channel mismatch " + shape_string(xv.shape()) +
                                      " vs " + shape_string(wv.shape()));
  require(opts.stride >= 1, "conv2d: stride must be >= 1");
  ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3),
                 0, 0, opts.padding, opts.stride};
  require(g.h + 2 * g.pad >= g.kh && g.w + 2 * g.pad >= g.kw, "conv2d: kernel larger than padded input");
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  if (bias.valid()) {
    require(tape.value(bias).size() == g.o, "conv2d: bias length must equal output channels");
  }

  Tensor<T> out({g.n, g.o, g.ho, g.wo});
  std::vector<T> cols(g.patch() * g.positions());
  ConstMatMap<T> wmat(wv.data(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.patch()));
  const std::size_t in_stride = g.c * g.h * g.w;
  const std::size_t out_stride = g.o * g.positions();
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(xv.data() + n * in_stride, g, cols.data());
    ConstMatMap<T> cm(cols.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.positions()));
    MatMap<T> om(out.data() + n * out_stride, static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.positions()));
    om.noalias() = wmat * cm;
    if (bias.valid()) {
      const T* b = tape.value(bias).data();
      for (std::size_t o = 0; o < g.o; ++o) om.row(static_cast<Eigen::Index>(o)).array() += b[o];
    }
  }

  const bool has_bias = bias.valid();
  return tape.record(std::move(out), {x, weight, has_bias ? bias : weight},
      [x, weight, bias, has_bias, g, in_stride, out_stride](Tape<T>& t, Var self) {
        const Tensor<T>& dy = t.grad(self);
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& wv = t.value(weight);
        const auto O = static_cast<Eigen::Index>(g.o);
        const auto K = static_cast<Eigen::Index>(g.patch());
        const auto P = static_cast<Eigen::Index>(g.positions());
        ConstMatMap<T> wmat(wv.data(), O, K);
        const bool need_w = t.requires_grad(weight);
        const bool need_x = t.requires_grad(x);
        const bool need_b = has_bias && t.requires_grad(bias);
        std::vector<T> cols(g.patch() * g.positions());
        RowMat<T> dcols;
        RowMat<T> dw_acc = RowMat<T>::Zero(O, K);
        for (std::size_t n = 0; n < g.n; ++n) {
          ConstMatMap<T> dym(dy.data() + n * out_stride, O, P);
          if (need_w) {
            im2col(xv.data() + n * in_stride, g, cols.data());
            ConstMatMap<T> cm(cols.data(), K, P);
            dw_acc.noalias() += dym * cm.transpose();
          }
          if (need_x) {
            dcols.noalias() = wmat.transpose() * dym;
            col2im_add(dcols.data(), g, t.grad(x).data() + n * in_stride);
          }
          if (need_b) {
            T* db = t.grad(bias).data();
            // Plain loop: Eigen's vectorised sum() peels by address alignment,
            // which would make the result depend on where dy happens to live.
            for (Eigen::Index o = 0; o < O; ++o) {
              const T* row = dym.data() + o * P;
              T acc = T(0);
              for (Eigen::Index p = 0; p < P; ++p) acc += row[p];
              db[o] += acc;
            }
          }
        }
        if (need_w) {
          MatMap<T> dw(t.grad(weight).data(), O, K);
          dw += dw_acc;
        }
      });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return tape.record(std::move(out), {x}, [x](Tape<T>& t, Var self) {
    const Tensor<T>& dy = t.grad(self);
    const Tensor<T>& xv = t.value(x);
    Tensor<T>& dx = t.grad(x);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > T(0)) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var avg_pool2d(Tape<T>& tape, Var x, std::size_t kernel, std::size_t stride) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 4, "avg_pool2d: input must be N x C x H x W");
  require(kernel >= 1 && stride >= 1, "avg_pool2d: kernel and stride must be >= 1");
  const std::size_t nc = xv.dim(0) * xv.dim(1);
  const std::size_t h = xv.dim(2);
  const std::size_t w = xv.dim(3);
  require(h >= kernel && w >= kernel, "avg_pool2d: input smaller than kernel");
  const std::size_t ho = (h - kernel) / stride + 1;
  const std::size_t wo = (w - kernel) / stride + 1;
  const T scale = T(1) / static_cast<T>(kernel * kernel);
  Tensor<T> out({xv.dim(0), xv.dim(1), ho, wo});
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        T acc = T(0);
        for (std::size_t a = 0; a < kernel; ++a) {
          for (std::size_t b = 0; b < kernel; ++b) acc += src[(i * stride + a) * w + j * stride + b];
        }
        dst[i * wo + j] = acc * scale;
      }
    }
  }
  return tape.record(std::move(out), {x}, [x, nc, h, w, ho, wo, kernel, stride, scale](Tape<T>& t, Var self) {
    const Tensor<T>& dy = t.grad(self);
    Tensor<T>& dx = t.grad(x);
    for (std::size_t p = 0; p < nc; ++p) {
      const T* g = dy.data() + p * ho * wo;
      T* d = dx.data() + p * h * w;
      for (std::size_t i = 0; i < ho; ++i) {
        for (std::size_t j = 0; j < wo; ++j) {
          const T v = g[i * wo + j] * scale;
          for (std::size_t a = 0; a < kernel; ++a) {
            for (std::size_t b = 0; b < kernel; ++b) d[(i * stride + a) * w + j * stride + b] += v;
          }
        }
      }
    }
  });
}

template <typename T>
Var global_mean_max_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require(xv.rank() == 4, "global_mean_max_pool: input must be N x C x H x W");
  const std::size_t n = xv.dim(0);
  const std::size_t c = xv.dim(1);
  const std::size_t hw = xv.dim(2) * xv.dim(3);
  require(hw > 0, "global_mean_max_pool: empty spatial extent");
  Tensor<T> out({n, 2 * c});
  std::vector<std::size_t> argmax(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      const T* src = xv.data() + (i * c + k) * hw;
      T sum = T(0);
      std::size_t best = 0;
      for (std::size_t p = 0; p < hw; ++p) {
        sum += src[p];
        if (src[p] > src[best]) best = p;
      }
      out[i * 2 * c + k] = sum / static_cast<T>(hw);
      out[i * 2 * c + c + k] = src[best];
      argmax[i * c + k] = best;
    }
  }
  return tape.record(std::move(out), {x}, [x, n, c, hw, argmax = std::move(argmax)](Tape<T>& t, Var self) {
    const Tensor<T>& dy = t.grad(self);
    Tensor<T>& dx = t.grad(x);
    const T inv = T(1) / static_cast<T>(hw);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        T* d = dx.data() + (i * c + k) * hw;
        const T gm = dy[i * 2 * c + k] * inv;
        for (std::size_t p = 0; p < hw; ++p) d[p] += gm;
        d[argmax[i * c + k]] += dy[i * 2 * c + c + k];
      }
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(weight);
  require(xv.rank() == 2, "linear: input must be N x in, got " + shape_string(xv.shape()));
  require(wv.rank() == 2 && wv.dim(1) == xv.dim(1),
          "linear: weight " + shape_string(wv.shape()) + " incompatible with input " + shape_string(xv.shape()));
  const std::size_t n = xv.dim(0);
  const std::size_t in = xv.dim(1);
  const std::size_t out_dim = wv.dim(0);
  const bool has_bias = bias.valid();
  if (has_bias) require(tape.value(bias).size() == out_dim, "linear: bias length mismatch");
  Tensor<T> out({n, out_dim});
  for (std::size_t i = 0; i < n; ++i) {
    const T* xr = xv.data() + i * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const T* wr = wv.data() + o * in;
      T acc = has_bias ? tape.value(bias)[o] : T(0);
      for (std::size_t k = 0; k < in; ++k) acc += wr[k] * xr[k];
      out[i * out_dim + o] = acc;
    }
  }
  return tape.record(std::move(out), {x, weight, has_bias ? bias : weight},
      [x, weight, bias, has_bias, n, in, out_dim](Tape<T>& t, Var self) {
        const Tensor<T>& dy = t.grad(self);
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& wv = t.value(weight);
        if (t.requires_grad(x)) {
          Tensor<T>& dx = t.grad(x);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < out_dim; ++o) {
              const T g = dy[i * out_dim + o];
              const T* wr = wv.data() + o * in;
              T* d = dx.data() + i * in;
              for (std::size_t k = 0; k < in; ++k) d[k] += g * wr[k];
            }
          }
        }
        if (t.requires_grad(weight)) {
          Tensor<T>& dw = t.grad(weight);
          for (std::size_t i = 0; i < n; ++i) {
            const T* xr = xv.data() + i * in;
            for (std::size_t o = 0; o < out_dim; ++o) {
              const T g = dy[i * out_dim + o];
              T* d = dw.data() + o * in;
              for (std::size_t k = 0; k < in; ++k) d[k] += g * xr[k];
            }
          }
        }
        if (has_bias && t.requires_grad(bias)) {
          Tensor<T>& db = t.grad(bias);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t o = 0; o < out_dim; ++o) db[o] += dy[i * out_dim + o];
          }
        }
      });
}

template <typename T>
Var mse_loss(Tape<T>& tape, Var prediction, const Tensor<T>& target) {
  const Tensor<T>& pv = tape.value(prediction);
  require(pv.size() == target.size() && !target.empty(),
          "mse_loss: prediction " + shape_string(pv.shape()) + " vs target " + shape_string(target.shape()));
  Tensor<T> out({1}, mse<T>(pv.values(), target.values()));
  return tape.record(std::move(out), {prediction}, [prediction, target](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    const Tensor<T>& pv = t.value(prediction);
    Tensor<T>& dp = t.grad(prediction);
    const T scale = T(2) / static_cast<T>(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) dp[i] += g * scale * (pv[i] - target[i]);
  });
}

template <typename T>
T mse(std::span<const T> prediction, std::span<const T> target) {
  require(prediction.size() == target.size() && !target.empty(), "mse: length mismatch or empty");
  T acc = T(0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T d = prediction[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<T>(target.size());
}

#define STEPCOUNT_INSTANTIATE_OPS(T)                                                  \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, Conv2dOptions);                     \
  template Var relu<T>(Tape<T>&, Var);                                                \
  template Var avg_pool2d<T>(Tape<T>&, Var, std::size_t, std::size_t);                \
  template Var global_mean_max_pool<T>(Tape<T>&, Var);                                \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                    \
  template Var mse_loss<T>(Tape<T>&, Var, const Tensor<T>&);                          \
  template T mse<T>(std::span<const T>, std::span<const T>);

STEPCOUNT_INSTANTIATE_OPS(float)
STEPCOUNT_INSTANTIATE_OPS(double)

#undef STEPCOUNT_INSTANTIATE_OPS

}  // namespace stepcount::nn
