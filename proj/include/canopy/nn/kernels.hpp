#pragma once

#include <cstdint>
#include <vector>

#include "canopy/nn/tensor.hpp"

// Layer kernels in two interchangeable implementations:
//   nn::kernels    OpenMP over batch samples; convolution runs as chunked
//                  im2col + BLAS GEMM
//   nn::reference  plain serial loops, kept as the oracle for the fast path
//
// Conventions shared by both:
//   conv2d     same padding, stride 1, odd square kernel.
//              x [N,Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] -> y [N,Cout,H,W]
//   maxpool2   2x2 windows; argmax records the flat input index picked per
//              output (first maximum in window order wins)
//   upsample_concat  nearest 2x upsample of x, then channel concat with skip
// Backward kernels accumulate into gradient outputs that already have the
// right shape. Null gradient pointers are skipped.
namespace canopy::nn {

namespace kernels {

template <class T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& y);
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>& dweight, Tensor<T>& dbias);

template <class T>
void maxpool2_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint32_t>& argmax);
template <class T>
void maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, Tensor<T>& dx);

template <class T>
void upsample_concat_forward(const Tensor<T>& x, const Tensor<T>& skip, Tensor<T>& y);
template <class T>
void upsample_concat_backward(const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dskip);

template <class T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y);
template <class T>
void relu_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx);
template <class T>
void sigmoid_forward(const Tensor<T>& x, Tensor<T>& y);
template <class T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx);

}  // namespace kernels

namespace reference {

template <class T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& y);
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>& dweight, Tensor<T>& dbias);

template <class T>
void maxpool2_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint32_t>& argmax);
template <class T>
void maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, Tensor<T>& dx);

template <class T>
void upsample_concat_forward(const Tensor<T>& x, const Tensor<T>& skip, Tensor<T>& y);
template <class T>
void upsample_concat_backward(const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dskip);

template <class T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y);
template <class T>
void relu_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx);
template <class T>
void sigmoid_forward(const Tensor<T>& x, Tensor<T>& y);
template <class T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx);

}  // namespace reference

// Output shapes; these validate each layer's preconditions and throw
// ShapeError on violation.
Shape conv2d_output_shape(const Shape& x, const Shape& weight, const Shape& bias);
Shape maxpool2_output_shape(const Shape& x);
Shape upsample_concat_output_shape(const Shape& x, const Shape& skip);

}  // namespace canopy::nn
