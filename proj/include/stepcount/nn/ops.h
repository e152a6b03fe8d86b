#pragma once

#include "stepcount/nn/tensor.h"

namespace stepcount::nn {

struct Conv2dOptions {
  std::size_t padding = 0;
  std::size_t stride = 1;
};

// Cross-correlation. x: N x C x H x W, weight: O x C x kh x kw, bias: O (optional).
// Output: N x O x ((H + 2p - kh)/s + 1) x ((W + 2p - kw)/s + 1).
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var weight, Var bias, Conv2dOptions opts = {});

template <typename T>
Var relu(Tape<T>& tape, Var x);

// Non-overlapping-or-strided average pooling on N x C x H x W; trailing rows or
// columns that do not fill a kernel are dropped.
template <typename T>
Var avg_pool2d(Tape<T>& tape, Var x, std::size_t kernel = 2, std::size_t stride = 2);

// N x C x H x W -> N x 2C: per-channel mean over H*W followed by per-channel max.
template <typename T>
Var global_mean_max_pool(Tape<T>& tape, Var x);

// x: N x in, weight: out x in, bias: out. Rows are computed independently, so
// a row's output does not depend on the batch it is in.
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias);

// Mean squared error over all elements; returns a 1-element tensor.
template <typename T>
Var mse_loss(Tape<T>& tape, Var prediction, const Tensor<T>& target);

template <typename T>
T mse(std::span<const T> prediction, std::span<const T> target);

}  // namespace stepcount::nn
