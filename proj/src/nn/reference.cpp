#include <cmath>

#include "canopy/nn/kernels.hpp"

namespace canopy::nn::reference {

template <class T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& y) {
  const Shape out = conv2d_output_shape(x.shape(), weight.shape(), bias.shape());
  y = Tensor<T>(out);
  const std::ptrdiff_t N = out[0], Cout = out[1], H = out[2], W = out[3];
  const std::ptrdiff_t Cin = x.dim(1), k = weight.dim(2), pad = k / 2;
  for (std::ptrdiff_t n = 0; n < N; ++n) {
    for (std::ptrdiff_t co = 0; co < Cout; ++co) {
      for (std::ptrdiff_t h = 0; h < H; ++h) {
        for (std::ptrdiff_t w = 0; w < W; ++w) {
          T acc = bias[co];
          for (std::ptrdiff_t ci = 0; ci < Cin; ++ci) {
            for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t ih = h + ky - pad;
              if (ih < 0 || ih >= H) continue;
              for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t iw = w + kx - pad;
                if (iw < 0 || iw >= W) continue;
                acc += weight.at(co, ci, ky, kx) * x.at(n, ci, ih, iw);
              }
            }
          }
          y.at(n, co, h, w) = acc;
        }
      }
    }
  }
}

template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>& dweight, Tensor<T>& dbias) {
  const Shape out = conv2d_output_shape(x.shape(), weight.shape(), dbias.shape());
  if (dy.shape() != out) throw ShapeError("conv2d_backward: dy shape mismatch");
  const std::ptrdiff_t N = out[0], Cout = out[1], H = out[2], W = out[3];
  const std::ptrdiff_t Cin = x.dim(1), k = weight.dim(2), pad = k / 2;
  for (std::ptrdiff_t n = 0; n < N; ++n) {
    for (std::ptrdiff_t co = 0; co < Cout; ++co) {
      for (std::ptrdiff_t h = 0; h < H; ++h) {
        for (std::ptrdiff_t w = 0; w < W; ++w) {
          const T g = dy.at(n, co, h, w);
          dbias[co] += g;
          for (std::ptrdiff_t ci = 0; ci < Cin; ++ci) {
            for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t ih = h + ky - pad;
              if (ih < 0 || ih >= H) continue;
              for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t iw = w + kx - pad;
                if (iw < 0 || iw >= W) continue;
                dweight.at(co, ci, ky, kx) += g * x.at(n, ci, ih, iw);
                if (dx) dx->at(n, ci, ih, iw) += g * weight.at(co, ci, ky, kx);
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void maxpool2_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint32_t>& argmax) {
  const Shape out = maxpool2_output_shape(x.shape());
  y = Tensor<T>(out);
  argmax.assign(y.size(), 0);
  const std::size_t W = x.dim(3);
  std::size_t o = 0;
  for (std::size_t n = 0; n < out[0]; ++n) {
    for (std::size_t c = 0; c < out[1]; ++c) {
      for (std::size_t h = 0; h < out[2]; ++h) {
        for (std::size_t w = 0; w < out[3]; ++w, ++o) {
          const std::size_t base = ((n * x.dim(1) + c) * x.dim(2) + 2 * h) * W + 2 * w;
          const std::size_t cand[4] = {base, base + 1, base + W, base + W + 1};
          std::size_t best = cand[0];
          for (std::size_t i = 1; i < 4; ++i) {
            if (x[cand[i]] > x[best]) best = cand[i];
          }
          y[o] = x[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
}

template <class T>
void maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, Tensor<T>& dx) {
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
}

template <class T>
void upsample_concat_forward(const Tensor<T>& x, const Tensor<T>& skip, Tensor<T>& y) {
  const Shape out = upsample_concat_output_shape(x.shape(), skip.shape());
  y = Tensor<T>(out);
  const std::size_t c1 = x.dim(1);
  for (std::size_t n = 0; n < out[0]; ++n) {
    for (std::size_t c = 0; c < out[1]; ++c) {
      for (std::size_t h = 0; h < out[2]; ++h) {
        for (std::size_t w = 0; w < out[3]; ++w) {
          y.at(n, c, h, w) = c < c1 ? x.at(n, c, h / 2, w / 2) : skip.at(n, c - c1, h, w);
        }
      }
    }
  }
}

template <class T>
void upsample_concat_backward(const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dskip) {
  if (!dx && !dskip) return;
  const std::size_t c1 = dskip ? dy.dim(1) - dskip->dim(1) : dx->dim(1);
  for (std::size_t n = 0; n < dy.dim(0); ++n) {
    for (std::size_t c = 0; c < dy.dim(1); ++c) {
      for (std::size_t h = 0; h < dy.dim(2); ++h) {
        for (std::size_t w = 0; w < dy.dim(3); ++w) {
          const T g = dy.at(n, c, h, w);
          if (c < c1) {
            if (dx) dx->at(n, c, h / 2, w / 2) += g;
          } else if (dskip) {
            dskip->at(n, c - c1, h, w) += g;
          }
        }
      }
    }
  }
}

template <class T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y) {
  y = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
}

template <class T>
void relu_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > T{0}) dx[i] += dy[i];
  }
}

template <class T>
void sigmoid_forward(const Tensor<T>& x, Tensor<T>& y) {
  y = Tensor<T>(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = T{1} / (T{1} + std::exp(-x[i]));
}

template <class T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (T{1} - y[i]);
}

#define CANOPY_INSTANTIATE(T)                                                                       \
  template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&); \
  template void conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*, \
                                   Tensor<T>&, Tensor<T>&);                                         \
  template void maxpool2_forward<T>(const Tensor<T>&, Tensor<T>&, std::vector<std::uint32_t>&);     \
  template void maxpool2_backward<T>(const Tensor<T>&, const std::vector<std::uint32_t>&, Tensor<T>&); \
  template void upsample_concat_forward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);        \
  template void upsample_concat_backward<T>(const Tensor<T>&, Tensor<T>*, Tensor<T>*);              \
  template void relu_forward<T>(const Tensor<T>&, Tensor<T>&);                                      \
  template void relu_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                   \
  template void sigmoid_forward<T>(const Tensor<T>&, Tensor<T>&);                                   \
  template void sigmoid_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);

CANOPY_INSTANTIATE(float)
CANOPY_INSTANTIATE(double)

}  // namespace canopy::nn::reference
