#include <sstream>

#include "canopy/nn/kernels.hpp"
#include "canopy/nn/tensor.hpp"

namespace canopy::nn {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ')';
  return out.str();
}

Shape conv2d_output_shape(const Shape& x, const Shape& weight, const Shape& bias) {
  if (x.size() != 4 || weight.size() != 4 || bias.size() != 1) {
    throw ShapeError("conv2d: expected x NCHW, weight [Cout,Cin,k,k], bias [Cout]; got " +
                     to_string(x) + ", " + to_string(weight) + ", " + to_string(bias));
  }
  if (weight[1] != x[1]) {
    throw ShapeError("conv2d: input has " + std::to_string(x[1]) + " channels, kernel expects " +
                     std::to_string(weight[1]));
  }
  if (weight[2] != weight[3] || weight[2] % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + to_string(weight));
  }
  if (bias[0] != weight[0]) throw ShapeError("conv2d: bias length does not match Cout");
  return {x[0], weight[0], x[2], x[3]};
}

Shape maxpool2_output_shape(const Shape& x) {
  if (x.size() != 4) throw ShapeError("maxpool2: expected NCHW, got " + to_string(x));
  if (x[2] % 2 != 0 || x[3] % 2 != 0) {
    throw ShapeError("maxpool2: spatial dims must be even, got " + to_string(x));
  }
  return {x[0], x[1], x[2] / 2, x[3] / 2};
}

Shape upsample_concat_output_shape(const Shape& x, const Shape& skip) {
  if (x.size() != 4 || skip.size() != 4) {
    throw ShapeError("upsample_concat: expected NCHW tensors");
  }
  if (x[0] != skip[0] || skip[2] != 2 * x[2] || skip[3] != 2 * x[3]) {
    throw ShapeError("upsample_concat: skip " + to_string(skip) + " is not twice " + to_string(x));
  }
  return {x[0], x[1] + skip[1], skip[2], skip[3]};
}

}  // namespace canopy::nn
