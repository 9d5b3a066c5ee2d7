#include <cblas.h>

#include <algorithm>
#include <cmath>

#include "canopy/nn/kernels.hpp"

namespace canopy::nn::kernels {
namespace {

using idx = std::ptrdiff_t;

// Pixels per im2col chunk, and a cap on the column buffer so wide layers
// fall back to smaller chunks.
constexpr idx kChunkPixels = 1024;
constexpr idx kMaxColumnElements = idx{1} << 23;

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, idx m, idx n, idx k, float alpha, const float* a,
          idx lda, const float* b, idx ldb, float beta, float* c, idx ldc) {
  cblas_sgemm(CblasRowMajor, ta, tb, int(m), int(n), int(k), alpha, a, int(lda), b, int(ldb), beta, c,
              int(ldc));
}

void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, idx m, idx n, idx k, double alpha, const double* a,
          idx lda, const double* b, idx ldb, double beta, double* c, idx ldc) {
  cblas_dgemm(CblasRowMajor, ta, tb, int(m), int(n), int(k), alpha, a, int(lda), b, int(ldb), beta, c,
              int(ldc));
}

struct ConvDims {
  idx N, Cin, Cout, H, W, k, pad, K, HW, chunk_rows;
};

ConvDims dims_of(const Shape& x, const Shape& weight) {
  ConvDims d{};
  d.N = idx(x[0]);
  d.Cin = idx(x[1]);
  d.H = idx(x[2]);
  d.W = idx(x[3]);
  d.Cout = idx(weight[0]);
  d.k = idx(weight[2]);
  d.pad = d.k / 2;
  d.K = d.Cin * d.k * d.k;
  d.HW = d.H * d.W;
  // Chunks are whole image rows so im2col reduces to contiguous copies.
  const idx pixels = std::clamp(kMaxColumnElements / std::max<idx>(d.K, 1), idx{64}, kChunkPixels);
  d.chunk_rows = std::clamp(pixels / std::max<idx>(d.W, 1), idx{1}, d.H);
  return d;
}

// Fills col[K, np] with the receptive fields of output rows [h0, h0 + nh)
// of one sample, np = nh * W.
template <class T>
void im2col(const T* x, const ConvDims& d, idx h0, idx nh, T* col) {
  const idx np = nh * d.W;
  for (idx ci = 0; ci < d.Cin; ++ci) {
    const T* plane = x + ci * d.HW;
    for (idx ky = 0; ky < d.k; ++ky) {
      for (idx kx = 0; kx < d.k; ++kx) {
        T* row = col + ((ci * d.k + ky) * d.k + kx) * np;
        const idx shift = kx - d.pad;
        const idx w0 = std::max<idx>(0, -shift), w1 = std::min(d.W, d.W - shift);
        for (idx h = h0; h < h0 + nh; ++h, row += d.W) {
          const idx ih = h + ky - d.pad;
          if (ih < 0 || ih >= d.H) {
            std::fill_n(row, d.W, T{0});
            continue;
          }
          std::fill_n(row, w0, T{0});
          std::copy_n(plane + ih * d.W + w0 + shift, w1 - w0, row + w0);
          std::fill_n(row + w1, d.W - w1, T{0});
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvDims& d, idx h0, idx nh, T* dx) {
  const idx np = nh * d.W;
  for (idx ci = 0; ci < d.Cin; ++ci) {
    T* plane = dx + ci * d.HW;
    for (idx ky = 0; ky < d.k; ++ky) {
      for (idx kx = 0; kx < d.k; ++kx) {
        const T* row = col + ((ci * d.k + ky) * d.k + kx) * np;
        const idx shift = kx - d.pad;
        const idx w0 = std::max<idx>(0, -shift), w1 = std::min(d.W, d.W - shift);
        for (idx h = h0; h < h0 + nh; ++h, row += d.W) {
          const idx ih = h + ky - d.pad;
          if (ih < 0 || ih >= d.H) continue;
          T* dst = plane + ih * d.W + shift;
          for (idx w = w0; w < w1; ++w) dst[w] += row[w];
        }
      }
    }
  }
}

}  // namespace

template <class T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Tensor<T>& y) {
  const Shape out = conv2d_output_shape(x.shape(), weight.shape(), bias.shape());
  if (y.shape() != out) y = Tensor<T>(out);
  const ConvDims d = dims_of(x.shape(), weight.shape());
  const bool pointwise = d.k == 1;

#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : std::size_t(d.K * d.chunk_rows * d.W));
#pragma omp for schedule(static)
    for (idx n = 0; n < d.N; ++n) {
      const T* xs = x.data() + n * d.Cin * d.HW;
      T* ys = y.data() + n * d.Cout * d.HW;
      for (idx co = 0; co < d.Cout; ++co) std::fill_n(ys + co * d.HW, d.HW, bias[co]);
      if (pointwise) {
        gemm(CblasNoTrans, CblasNoTrans, d.Cout, d.HW, d.Cin, T{1}, weight.data(), d.K, xs, d.HW, T{1}, ys,
             d.HW);
        continue;
      }
      for (idx h0 = 0; h0 < d.H; h0 += d.chunk_rows) {
        const idx nh = std::min(d.chunk_rows, d.H - h0), np = nh * d.W, p0 = h0 * d.W;
        im2col(xs, d, h0, nh, col.data());
        gemm(CblasNoTrans, CblasNoTrans, d.Cout, np, d.K, T{1}, weight.data(), d.K, col.data(), np, T{1},
             ys + p0, d.HW);
      }
    }
  }
}

template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>* dx,
                     Tensor<T>& dweight, Tensor<T>& dbias) {
  const Shape out = conv2d_output_shape(x.shape(), weight.shape(), dbias.shape());
  if (dy.shape() != out) throw ShapeError("conv2d_backward: dy shape mismatch");
  const ConvDims d = dims_of(x.shape(), weight.shape());
  const bool pointwise = d.k == 1;
  const idx wsize = d.Cout * d.K;

  // Per-sample weight/bias gradients, summed in sample order afterwards so
  // the result does not depend on the thread count. Weight gradients are
  // accumulated transposed ([K, Cout]); BLAS runs that shape faster.
  std::vector<T> dw_per(std::size_t(d.N * wsize), T{0});
  std::vector<T> db_per(std::size_t(d.N * d.Cout), T{0});

#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : std::size_t(d.K * d.chunk_rows * d.W));
    std::vector<T> dcol(pointwise || !dx ? 0 : std::size_t(d.K * d.chunk_rows * d.W));
#pragma omp for schedule(static)
    for (idx n = 0; n < d.N; ++n) {
      const T* xs = x.data() + n * d.Cin * d.HW;
      const T* dys = dy.data() + n * d.Cout * d.HW;
      T* dws = dw_per.data() + n * wsize;
      T* dbs = db_per.data() + n * d.Cout;
      for (idx co = 0; co < d.Cout; ++co) {
        T acc{0};
        const T* row = dys + co * d.HW;
        for (idx p = 0; p < d.HW; ++p) acc += row[p];
        dbs[co] = acc;
      }
      T* dxs = dx ? dx->data() + n * d.Cin * d.HW : nullptr;
      if (pointwise) {
        gemm(CblasNoTrans, CblasTrans, d.Cin, d.Cout, d.HW, T{1}, xs, d.HW, dys, d.HW, T{0}, dws, d.Cout);
        if (dxs) {
          gemm(CblasTrans, CblasNoTrans, d.Cin, d.HW, d.Cout, T{1}, weight.data(), d.K, dys, d.HW, T{1}, dxs,
               d.HW);
        }
        continue;
      }
      for (idx h0 = 0; h0 < d.H; h0 += d.chunk_rows) {
        const idx nh = std::min(d.chunk_rows, d.H - h0), np = nh * d.W, p0 = h0 * d.W;
        im2col(xs, d, h0, nh, col.data());
        gemm(CblasNoTrans, CblasTrans, d.K, d.Cout, np, T{1}, col.data(), np, dys + p0, d.HW, T{1}, dws, d.Cout);
        if (dxs) {
          gemm(CblasTrans, CblasNoTrans, d.K, np, d.Cout, T{1}, weight.data(), d.K, dys + p0, d.HW, T{0},
               dcol.data(), np);
          col2im_add(dcol.data(), d, h0, nh, dxs);
        }
      }
    }
  }
  for (idx n = 0; n < d.N; ++n) {
    const T* dws = dw_per.data() + n * wsize;
    for (idx co = 0; co < d.Cout; ++co) {
      for (idx kk = 0; kk < d.K; ++kk) dweight[std::size_t(co * d.K + kk)] += dws[kk * d.Cout + co];
    }
    for (idx co = 0; co < d.Cout; ++co) dbias[std::size_t(co)] += db_per[std::size_t(n * d.Cout + co)];
  }
}

template <class T>
void maxpool2_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint32_t>& argmax) {
  const Shape out = maxpool2_output_shape(x.shape());
  if (y.shape() != out) y = Tensor<T>(out);
  argmax.resize(y.size());
  const idx planes = idx(out[0] * out[1]), oh = idx(out[2]), ow = idx(out[3]), W = idx(x.dim(3));
#pragma omp parallel for schedule(static)
  for (idx pl = 0; pl < planes; ++pl) {
    for (idx h = 0; h < oh; ++h) {
      for (idx w = 0; w < ow; ++w) {
        const idx o = (pl * oh + h) * ow + w;
        const idx base = (pl * 2 * oh + 2 * h) * W + 2 * w;
        idx best = base;
        if (x[std::size_t(base + 1)] > x[std::size_t(best)]) best = base + 1;
        if (x[std::size_t(base + W)] > x[std::size_t(best)]) best = base + W;
        if (x[std::size_t(base + W + 1)] > x[std::size_t(best)]) best = base + W + 1;
        y[std::size_t(o)] = x[std::size_t(best)];
        argmax[std::size_t(o)] = std::uint32_t(best);
      }
    }
  }
}

template <class T>
void maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, Tensor<T>& dx) {
  // Windows do not overlap, so every input cell has at most one writer.
  const idx n = idx(dy.size());
#pragma omp parallel for schedule(static)
  for (idx o = 0; o < n; ++o) dx[argmax[std::size_t(o)]] += dy[std::size_t(o)];
}

template <class T>
void upsample_concat_forward(const Tensor<T>& x, const Tensor<T>& skip, Tensor<T>& y) {
  const Shape out = upsample_concat_output_shape(x.shape(), skip.shape());
  if (y.shape() != out) y = Tensor<T>(out);
  const idx N = idx(out[0]), C = idx(out[1]), c1 = idx(x.dim(1)), H = idx(out[2]), W = idx(out[3]);
  const idx HW = H * W, hw = idx(x.dim(2) * x.dim(3)), w2 = idx(x.dim(3));
#pragma omp parallel for schedule(static)
  for (idx pl = 0; pl < N * C; ++pl) {
    const idx n = pl / C, c = pl % C;
    T* dst = y.data() + pl * HW;
    if (c < c1) {
      const T* src = x.data() + (n * c1 + c) * hw;
      for (idx h = 0; h < H; ++h) {
        for (idx w = 0; w < W; ++w) dst[h * W + w] = src[(h / 2) * w2 + w / 2];
      }
    } else {
      std::copy_n(skip.data() + (n * (C - c1) + (c - c1)) * HW, HW, dst);
    }
  }
}

template <class T>
void upsample_concat_backward(const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dskip) {
  if (!dx && !dskip) return;
  const idx N = idx(dy.dim(0)), C = idx(dy.dim(1)), H = idx(dy.dim(2)), W = idx(dy.dim(3));
  const idx c1 = dskip ? C - idx(dskip->dim(1)) : idx(dx->dim(1));
  const idx HW = H * W, w2 = W / 2;
#pragma omp parallel for schedule(static)
  for (idx pl = 0; pl < N * C; ++pl) {
    const idx n = pl / C, c = pl % C;
    const T* src = dy.data() + pl * HW;
    if (c < c1) {
      if (!dx) continue;
      T* dst = dx->data() + (n * c1 + c) * (HW / 4);
      for (idx h = 0; h < H; ++h) {
        for (idx w = 0; w < W; ++w) dst[(h / 2) * w2 + w / 2] += src[h * W + w];
      }
    } else if (dskip) {
      T* dst = dskip->data() + (n * (C - c1) + (c - c1)) * HW;
      for (idx p = 0; p < HW; ++p) dst[p] += src[p];
    }
  }
}

template <class T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y) {
  if (y.shape() != x.shape()) y = Tensor<T>(x.shape());
  const idx n = idx(x.size());
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < n; ++i) y[std::size_t(i)] = std::max(x[std::size_t(i)], T{0});
}

template <class T>
void relu_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  const idx n = idx(y.size());
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < n; ++i) {
    if (y[std::size_t(i)] > T{0}) dx[std::size_t(i)] += dy[std::size_t(i)];
  }
}

template <class T>
void sigmoid_forward(const Tensor<T>& x, Tensor<T>& y) {
  if (y.shape() != x.shape()) y = Tensor<T>(x.shape());
  const idx n = idx(x.size());
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < n; ++i) y[std::size_t(i)] = T{1} / (T{1} + std::exp(-x[std::size_t(i)]));
}

template <class T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  const idx n = idx(y.size());
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < n; ++i) {
    const T s = y[std::size_t(i)];
    dx[std::size_t(i)] += dy[std::size_t(i)] * s * (T{1} - s);
  }
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

}  // namespace canopy::nn::kernels
