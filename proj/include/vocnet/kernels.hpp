#pragma once

// Forward and backward kernels for the dense operators used by both networks.
//
// Convolutions are cross-correlations (no kernel flip). Batched inputs are
// rank 3 [N, C, L]; a rank-2 [C, L] input is treated as a batch of one and
// returns a rank-2 result. Kernel layouts follow the usual deep-learning
// convention: conv1d kernels are [C_out, C_in, K], conv1d_transpose kernels
// are [C_in, C_out, K]. An empty bias tensor means "no bias".

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "vocnet/errors.hpp"
#include "vocnet/tensor.hpp"

namespace vocnet {

inline Index conv1d_output_length(Index length, Index kernel, Index stride,
                                  Index padding) {
  return (length + 2 * padding - kernel) / stride + 1;
}

inline Index conv1d_transpose_output_length(Index length, Index kernel,
                                            Index stride, Index padding) {
  return (length - 1) * stride - 2 * padding + kernel;
}

namespace detail {

struct BatchLayout {
  Index batch;
  Index channels;
  Index length;
  bool batched;
};

template <typename Scalar>
BatchLayout batch_layout(const BasicTensor<Scalar>& t, const char* op) {
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2), true};
  if (t.rank() == 2) return {1, t.dim(0), t.dim(1), false};
  throw DimensionError(std::string(op) + ": expected [C x L] or [N x C x L] input, got " +
                       shape_string(t.shape()));
}

inline Shape batch_shape(const BatchLayout& layout, Index channels, Index length) {
  if (layout.batched) return {layout.batch, channels, length};
  return {channels, length};
}

[[noreturn]] inline void shape_mismatch(const char* op, const Shape& a,
                                        const Shape& b, const std::string& why) {
  throw DimensionError(std::string(op) + ": " + why + " (input " +
                       shape_string(a) + ", kernels " + shape_string(b) + ")");
}

// Geometry of a strided, zero-padded 1D correlation.
struct ConvGeometry {
  Index channels;    // input channels
  Index length;      // input length
  Index kernel;
  Index stride;
  Index padding;
  Index out_length;
};

// cols[(c, k), t] = x[c, t * stride + k - padding], zero outside [0, length).
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g,
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols) {
  cols.setZero(g.channels * g.kernel, g.out_length);
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* xc = x + c * g.length;
    for (Index k = 0; k < g.kernel; ++k) {
      Scalar* row = cols.data() + (c * g.kernel + k) * g.out_length;
      for (Index t = 0; t < g.out_length; ++t) {
        const Index pos = t * g.stride + k - g.padding;
        if (pos >= 0 && pos < g.length) row[t] = xc[pos];
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto a [channels, length] buffer.
template <typename Scalar>
void col2im(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols,
            const ConvGeometry& g, Scalar* x) {
  for (Index c = 0; c < g.channels; ++c) {
    Scalar* xc = x + c * g.length;
    for (Index k = 0; k < g.kernel; ++k) {
      const Scalar* row = cols.data() + (c * g.kernel + k) * g.out_length;
      for (Index t = 0; t < g.out_length; ++t) {
        const Index pos = t * g.stride + k - g.padding;
        if (pos >= 0 && pos < g.length) xc[pos] += row[t];
      }
    }
  }
}

template <typename Scalar>
void check_bias(const BasicTensor<Scalar>& bias, Index channels, const char* op) {
  if (bias.size() != 0 && (bias.rank() != 1 || bias.dim(0) != channels)) {
    throw DimensionError(std::string(op) + ": bias " + shape_string(bias.shape()) +
                         " does not match " + std::to_string(channels) +
                         " output channels");
  }
}

}  // namespace detail

template <typename Scalar>
struct ConvGradients {
  BasicTensor<Scalar> input;
  BasicTensor<Scalar> kernels;
  BasicTensor<Scalar> bias;
};

template <typename Scalar>
BasicTensor<Scalar> conv1d(const BasicTensor<Scalar>& input,
                           const BasicTensor<Scalar>& kernels,
                           const BasicTensor<Scalar>& bias, Index stride,
                           Index padding) {
  using RowMatrix = typename BasicTensor<Scalar>::RowMatrix;
  const auto in = detail::batch_layout(input, "conv1d");
  if (kernels.rank() != 3) {
    detail::shape_mismatch("conv1d", input.shape(), kernels.shape(), "kernels must be rank 3");
  }
  if (kernels.dim(1) != in.channels) {
    detail::shape_mismatch("conv1d", input.shape(), kernels.shape(),
                           "input channels differ");
  }
  if (stride < 1 || padding < 0) {
    throw DimensionError("conv1d: stride must be >= 1 and padding >= 0");
  }
  const Index out_channels = kernels.dim(0);
  const Index k = kernels.dim(2);
  if (k > in.length + 2 * padding) {
    detail::shape_mismatch("conv1d", input.shape(), kernels.shape(),
                           "kernel longer than padded input");
  }
  detail::check_bias(bias, out_channels, "conv1d");

  const detail::ConvGeometry g{in.channels, in.length, k, stride, padding,
                               conv1d_output_length(in.length, k, stride, padding)};
  BasicTensor<Scalar> out(detail::batch_shape(in, out_channels, g.out_length));
  const auto w = kernels.matrix(out_channels, in.channels * k);
  RowMatrix cols;
  for (Index n = 0; n < in.batch; ++n) {
    detail::im2col(input.data() + n * in.channels * in.length, g, cols);
    Eigen::Map<RowMatrix> y(out.data() + n * out_channels * g.out_length,
                            out_channels, g.out_length);
    y.noalias() = w * cols;
    if (bias.size() != 0) y.colwise() += bias.array().matrix();
  }
  return out;
}

template <typename Scalar>
ConvGradients<Scalar> conv1d_backward(const BasicTensor<Scalar>& input,
                                      const BasicTensor<Scalar>& kernels,
                                      const BasicTensor<Scalar>& grad_output,
                                      Index stride, Index padding) {
  using RowMatrix = typename BasicTensor<Scalar>::RowMatrix;
  const auto in = detail::batch_layout(input, "conv1d");
  const Index out_channels = kernels.dim(0);
  const Index k = kernels.dim(2);
  const detail::ConvGeometry g{in.channels, in.length, k, stride, padding,
                               conv1d_output_length(in.length, k, stride, padding)};

  ConvGradients<Scalar> grads{BasicTensor<Scalar>(input.shape()),
                              BasicTensor<Scalar>(kernels.shape()),
                              BasicTensor<Scalar>({out_channels})};
  auto dw = grads.kernels.matrix(out_channels, in.channels * k);
  const auto w = kernels.matrix(out_channels, in.channels * k);
  RowMatrix cols;
  RowMatrix dcols;
  for (Index n = 0; n < in.batch; ++n) {
    detail::im2col(input.data() + n * in.channels * in.length, g, cols);
    Eigen::Map<const RowMatrix> dy(grad_output.data() + n * out_channels * g.out_length,
                                   out_channels, g.out_length);
    dw.noalias() += dy * cols.transpose();
    grads.bias.array() += dy.rowwise().sum().array();
    dcols.noalias() = w.transpose() * dy;
    detail::col2im(dcols, g, grads.input.data() + n * in.channels * in.length);
  }
  return grads;
}

template <typename Scalar>
BasicTensor<Scalar> conv1d_transpose(const BasicTensor<Scalar>& input,
                                     const BasicTensor<Scalar>& kernels,
                                     const BasicTensor<Scalar>& bias,
                                     Index stride, Index padding) {
  using RowMatrix = typename BasicTensor<Scalar>::RowMatrix;
  const auto in = detail::batch_layout(input, "conv1d_transpose");
  if (kernels.rank() != 3) {
    detail::shape_mismatch("conv1d_transpose", input.shape(), kernels.shape(),
                           "kernels must be rank 3");
  }
  if (kernels.dim(0) != in.channels) {
    detail::shape_mismatch("conv1d_transpose", input.shape(), kernels.shape(),
                           "input channels differ");
  }
  if (stride < 1 || padding < 0) {
    throw DimensionError("conv1d_transpose: stride must be >= 1 and padding >= 0");
  }
  const Index out_channels = kernels.dim(1);
  const Index k = kernels.dim(2);
  const Index out_length = conv1d_transpose_output_length(in.length, k, stride, padding);
  if (out_length < 1) {
    detail::shape_mismatch("conv1d_transpose", input.shape(), kernels.shape(),
                           "non-positive output length");
  }
  detail::check_bias(bias, out_channels, "conv1d_transpose");

  // The transposed op scatters through the geometry of the forward conv that
  // maps [out_channels, out_length] back to [in.channels, in.length].
  const detail::ConvGeometry g{out_channels, out_length, k, stride, padding, in.length};
  BasicTensor<Scalar> out(detail::batch_shape(in, out_channels, out_length));
  const auto w = kernels.matrix(in.channels, out_channels * k);
  RowMatrix cols;
  for (Index n = 0; n < in.batch; ++n) {
    Eigen::Map<const RowMatrix> x(input.data() + n * in.channels * in.length,
                                  in.channels, in.length);
    cols.noalias() = w.transpose() * x;
    Scalar* y = out.data() + n * out_channels * out_length;
    detail::col2im(cols, g, y);
    if (bias.size() != 0) {
      Eigen::Map<RowMatrix> ym(y, out_channels, out_length);
      ym.colwise() += bias.array().matrix();
    }
  }
  return out;
}

template <typename Scalar>
ConvGradients<Scalar> conv1d_transpose_backward(const BasicTensor<Scalar>& input,
                                                const BasicTensor<Scalar>& kernels,
                                                const BasicTensor<Scalar>& grad_output,
                                                Index stride, Index padding) {
  using RowMatrix = typename BasicTensor<Scalar>::RowMatrix;
  const auto in = detail::batch_layout(input, "conv1d_transpose");
  const Index out_channels = kernels.dim(1);
  const Index k = kernels.dim(2);
  const Index out_length = conv1d_transpose_output_length(in.length, k, stride, padding);
  const detail::ConvGeometry g{out_channels, out_length, k, stride, padding, in.length};

  ConvGradients<Scalar> grads{BasicTensor<Scalar>(input.shape()),
                              BasicTensor<Scalar>(kernels.shape()),
                              BasicTensor<Scalar>({out_channels})};
  auto dw = grads.kernels.matrix(in.channels, out_channels * k);
  const auto w = kernels.matrix(in.channels, out_channels * k);
  RowMatrix dcols;
  for (Index n = 0; n < in.batch; ++n) {
    const Scalar* dy = grad_output.data() + n * out_channels * out_length;
    detail::im2col(dy, g, dcols);
    Eigen::Map<const RowMatrix> x(input.data() + n * in.channels * in.length,
                                  in.channels, in.length);
    Eigen::Map<RowMatrix> dx(grads.input.data() + n * in.channels * in.length,
                             in.channels, in.length);
    dx.noalias() = w * dcols;
    dw.noalias() += x * dcols.transpose();
    Eigen::Map<const RowMatrix> dym(dy, out_channels, out_length);
    grads.bias.array() += dym.rowwise().sum().array();
  }
  return grads;
}

template <typename Scalar>
BasicTensor<Scalar> avg_pool1d(const BasicTensor<Scalar>& input, Index window) {
  const auto in = detail::batch_layout(input, "avg_pool1d");
  if (window < 1) throw DimensionError("avg_pool1d: window must be >= 1");
  if (window > in.length) {
    throw DimensionError("avg_pool1d: window " + std::to_string(window) +
                         " exceeds length " + std::to_string(in.length) +
                         " (empty output)");
  }
  const Index out_length = in.length / window;
  BasicTensor<Scalar> out(detail::batch_shape(in, in.channels, out_length));
  const Index rows = in.batch * in.channels;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(window);
  for (Index r = 0; r < rows; ++r) {
    const Scalar* x = input.data() + r * in.length;
    Scalar* y = out.data() + r * out_length;
    for (Index t = 0; t < out_length; ++t) {
      Scalar acc = 0;
      for (Index j = 0; j < window; ++j) acc += x[t * window + j];
      y[t] = acc * scale;
    }
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> avg_pool1d_backward(const Shape& input_shape,
                                        const BasicTensor<Scalar>& grad_output,
                                        Index window) {
  BasicTensor<Scalar> grad(input_shape);
  const auto in = detail::batch_layout(grad, "avg_pool1d");
  const Index out_length = in.length / window;
  const Index rows = in.batch * in.channels;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(window);
  for (Index r = 0; r < rows; ++r) {
    const Scalar* dy = grad_output.data() + r * out_length;
    Scalar* dx = grad.data() + r * in.length;
    for (Index t = 0; t < out_length; ++t) {
      for (Index j = 0; j < window; ++j) dx[t * window + j] = dy[t] * scale;
    }
  }
  return grad;
}

// y = x W^T + b for x of shape [N] or [B, N], W of shape [M, N].
template <typename Scalar>
BasicTensor<Scalar> linear(const BasicTensor<Scalar>& input,
                           const BasicTensor<Scalar>& weight,
                           const BasicTensor<Scalar>& bias) {
  if (weight.rank() != 2 || (input.rank() != 1 && input.rank() != 2) ||
      input.dim(input.rank() - 1) != weight.dim(1)) {
    throw DimensionError("linear: input " + shape_string(input.shape()) +
                         " incompatible with weight " + shape_string(weight.shape()));
  }
  const Index m = weight.dim(0);
  detail::check_bias(bias, m, "linear");
  const Index rows = input.rank() == 2 ? input.dim(0) : 1;
  Shape shape = input.rank() == 2 ? Shape{rows, m} : Shape{m};
  BasicTensor<Scalar> out(shape);
  auto y = out.matrix(rows, m);
  y.noalias() = input.matrix(rows, weight.dim(1)) * weight.matrix().transpose();
  if (bias.size() != 0) y.rowwise() += bias.array().matrix().transpose();
  return out;
}

// Row-wise softmax over the last axis, stabilized by max subtraction.
template <typename Scalar>
BasicTensor<Scalar> softmax(const BasicTensor<Scalar>& input) {
  if (input.size() == 0) throw DimensionError("softmax: empty input");
  const Index cols = input.dim(input.rank() - 1);
  const Index rows = input.size() / cols;
  BasicTensor<Scalar> out(input.shape());
  auto y = out.matrix(rows, cols);
  const auto x = input.matrix(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Scalar peak = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - peak).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  return out;
}

}  // namespace vocnet
