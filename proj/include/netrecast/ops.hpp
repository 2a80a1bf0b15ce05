#pragma once

#include <span>

#include "netrecast/autograd.hpp"
#include "netrecast/tensor.hpp"

namespace netrecast {

enum class Mode { train, eval };

// Differentiable layer operations. Every op records itself on the active
// Tape<T> when one of its inputs requires a gradient; without an active tape
// they run as plain inference kernels. Shape violations throw ShapeError
// with the offending extents in the message.

// Cross-correlation (no kernel flip). input [B,Cin,H,W], weight
// [Cout,Cin,kH,kW], optional bias [Cout]; output [B,Cout,H',W'] with
// H' = (H + 2*padding - kH) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, int stride, int padding) {
  return conv2d(input, weight, Tensor<T>{}, stride, padding);
}

// Running statistics owned by a batch-norm layer; updated in train mode as
// running = (1 - momentum) * running + momentum * batch, with the unbiased
// batch variance.
template <typename T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;
};

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormStats<T>& running, Mode mode, double momentum = 0.1,
                      double epsilon = 1e-5);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Concatenate [B,Ci,H,W] tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& input, int kernel, int stride);

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int kernel, int stride);

// [B,C,H,W] -> [B,C]
template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& input);

// input [B,D], weight [K,D], optional bias [K] -> [B,K]
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Mean of squared differences over all elements. `target` is treated as a
// constant: no gradient flows into it.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& prediction, const Tensor<T>& target);

// Mean over the batch of -log softmax(logits)[label]. logits [B,K].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace netrecast
