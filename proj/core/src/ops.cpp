#include "slm/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace slm {

BatchNormState BatchNormState::make(int channels) {
  BatchNormState s;
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::full({channels}, 1.0);
  return s;
}

namespace ops {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

bool track(std::initializer_list<const Tensor*> ins) {
  for (const Tensor* t : ins)
    if ((*t).node() && ((*t).node()->requires_grad)) return true;
  return false;
}

Tensor make_out(std::vector<int> shape, std::vector<double> data, bool tracked,
                std::vector<NodePtr> parents, std::function<void(Node&)> bwd) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  if (tracked) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(bwd);
  }
  return out;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Row-major dgemm: C[m x n] (+)= A[m x k] * B[k x n], optional transposes on
// the logical A/B shapes given above.
void gemm(bool ta, bool tb, int m, int n, int k, const double* A, const double* B, double* C,
          double beta) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, 1.0, A, ta ? m : k, B, tb ? k : n, beta, C, n);
}

// Expand one sample [C,H,W] into columns [C*kh*kw, Hout*Wout].
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Hout,
            int Wout, double* col) {
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        double* dst = col + ((static_cast<std::size_t>(c) * kh + i) * kw + j) *
                                static_cast<std::size_t>(Hout) * Wout;
        for (int oy = 0; oy < Hout; ++oy) {
          int iy = oy * stride - pad + i;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wout, 0.0);
            dst += Wout;
            continue;
          }
          const double* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wout; ++ox) {
            int ix = ox * stride - pad + j;
            *dst++ = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add columns [C*kh*kw, Hout*Wout] back into one sample [C,H,W].
void col2im_add(const double* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Hout, int Wout, double* x) {
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const double* src = col + ((static_cast<std::size_t>(c) * kh + i) * kw + j) *
                                      static_cast<std::size_t>(Hout) * Wout;
        for (int oy = 0; oy < Hout; ++oy) {
          int iy = oy * stride - pad + i;
          if (iy < 0 || iy >= H) {
            src += Wout;
            continue;
          }
          double* dst = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wout; ++ox) {
            int ix = ox * stride - pad + j;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
          src += Wout;
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  require(x.shape().size() == 4, "conv2d: input must be [N,C,H,W]");
  require(w.shape().size() == 4, "conv2d: weight must be [K,C,kh,kw]");
  require(b.shape().size() == 1, "conv2d: bias must be [K]");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == C, "conv2d: channel mismatch between input and weight");
  require(b.dim(0) == K, "conv2d: bias length must equal output channels");
  require(kh <= H + 2 * padding && kw <= W + 2 * padding,
          "conv2d: kernel larger than padded input");
  require((H + 2 * padding - kh) % stride == 0 && (W + 2 * padding - kw) % stride == 0,
          "conv2d: output size is not exact for this stride/padding");
  const int Hout = (H + 2 * padding - kh) / stride + 1;
  const int Wout = (W + 2 * padding - kw) / stride + 1;
  const std::size_t ckk = static_cast<std::size_t>(C) * kh * kw;
  const std::size_t ohw = static_cast<std::size_t>(Hout) * Wout;

  std::vector<double> y(static_cast<std::size_t>(N) * K * ohw);
  std::vector<double> col(ckk * ohw);
  for (int n = 0; n < N; ++n) {
    im2col(x.data().data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh, kw, stride,
           padding, Hout, Wout, col.data());
    double* yn = y.data() + static_cast<std::size_t>(n) * K * ohw;
    gemm(false, false, K, static_cast<int>(ohw), static_cast<int>(ckk), w.data().data(),
         col.data(), yn, 0.0);
    for (int k = 0; k < K; ++k) {
      const double bk = b.data()[static_cast<std::size_t>(k)];
      double* row = yn + static_cast<std::size_t>(k) * ohw;
      for (std::size_t i = 0; i < ohw; ++i) row[i] += bk;
    }
  }

  bool tracked = track({&x, &w, &b});
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  auto bwd = [=](Node& out) {
    std::vector<double> col(ckk * ohw);
    std::vector<double> dcol(ckk * ohw);
    for (int n = 0; n < N; ++n) {
      const double* dyn = out.grad.data() + static_cast<std::size_t>(n) * K * ohw;
      im2col(xn->data.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, kh, kw, stride,
             padding, Hout, Wout, col.data());
      // dW += dY * col^T
      gemm(false, true, K, static_cast<int>(ckk), static_cast<int>(ohw), dyn, col.data(),
           wn->grad.data(), 1.0);
      // dcol = W^T * dY, then scatter back to dx
      gemm(true, false, static_cast<int>(ckk), static_cast<int>(ohw), K, wn->data.data(), dyn,
           dcol.data(), 0.0);
      col2im_add(dcol.data(), C, H, W, kh, kw, stride, padding, Hout, Wout,
                 xn->grad.data() + static_cast<std::size_t>(n) * C * H * W);
      for (int k = 0; k < K; ++k) {
        double s = 0.0;
        const double* row = dyn + static_cast<std::size_t>(k) * ohw;
        for (std::size_t i = 0; i < ohw; ++i) s += row[i];
        bn->grad[static_cast<std::size_t>(k)] += s;
      }
    }
  };
  return make_out({N, K, Hout, Wout}, std::move(y), tracked, {xn, wn, bn}, std::move(bwd));
}

Tensor conv_transpose2x2_s2(const Tensor& x, const Tensor& w) {
  require(x.shape().size() == 4, "conv_transpose: input must be [N,C,H,W]");
  require(w.shape().size() == 4 && w.dim(2) == 2 && w.dim(3) == 2,
          "conv_transpose: weight must be [C,K,2,2]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(w.dim(0) == C, "conv_transpose: channel mismatch");
  const int K = w.dim(1);
  const int Ho = 2 * H, Wo = 2 * W;
  const std::size_t hw = static_cast<std::size_t>(H) * W;

  std::vector<double> y(static_cast<std::size_t>(N) * K * Ho * Wo, 0.0);
  for (int n = 0; n < N; ++n) {
    const double* xn_ = x.data().data() + static_cast<std::size_t>(n) * C * hw;
    double* yn = y.data() + static_cast<std::size_t>(n) * K * Ho * Wo;
    for (int c = 0; c < C; ++c) {
      for (int k = 0; k < K; ++k) {
        const double* wk = w.data().data() + (static_cast<std::size_t>(c) * K + k) * 4;
        for (int iy = 0; iy < H; ++iy) {
          for (int ix = 0; ix < W; ++ix) {
            const double v = xn_[(static_cast<std::size_t>(c) * H + iy) * W + ix];
            double* base = yn + (static_cast<std::size_t>(k) * Ho + 2 * iy) * Wo + 2 * ix;
            base[0] += v * wk[0];
            base[1] += v * wk[1];
            base[Wo] += v * wk[2];
            base[Wo + 1] += v * wk[3];
          }
        }
      }
    }
  }

  bool tracked = track({&x, &w});
  auto xn = x.node();
  auto wn = w.node();
  auto bwd = [=](Node& out) {
    for (int n = 0; n < N; ++n) {
      const double* xn_ = xn->data.data() + static_cast<std::size_t>(n) * C * hw;
      double* dx = xn->grad.data() + static_cast<std::size_t>(n) * C * hw;
      const double* dyn = out.grad.data() + static_cast<std::size_t>(n) * K * Ho * Wo;
      for (int c = 0; c < C; ++c) {
        for (int k = 0; k < K; ++k) {
          const double* wk = wn->data.data() + (static_cast<std::size_t>(c) * K + k) * 4;
          double* dwk = wn->grad.data() + (static_cast<std::size_t>(c) * K + k) * 4;
          for (int iy = 0; iy < H; ++iy) {
            for (int ix = 0; ix < W; ++ix) {
              const std::size_t xi = (static_cast<std::size_t>(c) * H + iy) * W + ix;
              const double* gbase = dyn + (static_cast<std::size_t>(k) * Ho + 2 * iy) * Wo + 2 * ix;
              dx[xi] += gbase[0] * wk[0] + gbase[1] * wk[1] + gbase[Wo] * wk[2] +
                        gbase[Wo + 1] * wk[3];
              const double v = xn_[xi];
              dwk[0] += v * gbase[0];
              dwk[1] += v * gbase[1];
              dwk[2] += v * gbase[Wo];
              dwk[3] += v * gbase[Wo + 1];
            }
          }
        }
      }
    }
  };
  return make_out({N, K, Ho, Wo}, std::move(y), tracked, {xn, wn}, std::move(bwd));
}

Tensor max_pool2(const Tensor& x) {
  require(x.shape().size() == 4, "max_pool2: input must be [N,C,H,W]");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % 2 == 0 && W % 2 == 0, "max_pool2: spatial dims must be even");
  const int Ho = H / 2, Wo = W / 2;
  const std::size_t nout = static_cast<std::size_t>(N) * C * Ho * Wo;

  std::vector<double> y(nout);
  auto argmax = std::make_shared<std::vector<std::size_t>>(nout);
  const double* xd = x.data().data();
  std::size_t o = 0;
  for (int nc = 0; nc < N * C; ++nc) {
    const double* plane = xd + static_cast<std::size_t>(nc) * H * W;
    const std::size_t pbase = static_cast<std::size_t>(nc) * H * W;
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox, ++o) {
        // row-major scan of the 2x2 window; first max wins
        std::size_t i0 = static_cast<std::size_t>(2 * oy) * W + 2 * ox;
        std::size_t best = i0;
        double bv = plane[i0];
        for (std::size_t i : {i0 + 1, i0 + W, i0 + W + 1}) {
          if (plane[i] > bv) {
            bv = plane[i];
            best = i;
          }
        }
        y[o] = bv;
        (*argmax)[o] = pbase + best;
      }
    }
  }

  bool tracked = track({&x});
  auto xn = x.node();
  auto bwd = [=](Node& out) {
    for (std::size_t i = 0; i < out.grad.size(); ++i) xn->grad[(*argmax)[i]] += out.grad[i];
  };
  return make_out({N, C, Ho, Wo}, std::move(y), tracked, {xn}, std::move(bwd));
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Mode mode,
                  BatchNormState& state, double momentum, double eps) {
  const auto& sh = x.shape();
  require(sh.size() == 2 || sh.size() == 4, "batch_norm: input must be [N,C] or [N,C,H,W]");
  const int N = sh[0], C = sh[1];
  const std::size_t spatial = sh.size() == 4 ? static_cast<std::size_t>(sh[2]) * sh[3] : 1;
  require(gamma.shape() == std::vector<int>{C} && beta.shape() == std::vector<int>{C},
          "batch_norm: gamma/beta must be [C]");
  require(state.running_mean.dim(0) == C, "batch_norm: state channel mismatch");
  const std::size_t M = static_cast<std::size_t>(N) * spatial;  // elements per channel
  if (mode == Mode::Train)
    require(M > 1, "batch_norm: train mode needs more than one element per channel");

  const double* xd = x.data().data();
  std::vector<double> mean(C), var(C);
  if (mode == Mode::Train) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = xd + (static_cast<std::size_t>(n) * C + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      mean[c] = s / static_cast<double>(M);
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = xd + (static_cast<std::size_t>(n) * C + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          double d = p[i] - mean[c];
          v += d * d;
        }
      }
      var[c] = v / static_cast<double>(M);
      state.running_mean.data()[c] = (1.0 - momentum) * state.running_mean.data()[c] +
                                     momentum * mean[c];
      state.running_var.data()[c] =
          (1.0 - momentum) * state.running_var.data()[c] + momentum * var[c];
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = state.running_mean.data()[c];
      var[c] = state.running_var.data()[c];
    }
  }

  auto inv_std = std::make_shared<std::vector<double>>(C);
  for (int c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + eps);
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> y(x.size());
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
      const double g = gamma.data()[c], bta = beta.data()[c];
      for (std::size_t i = 0; i < spatial; ++i) {
        double h = (xd[base + i] - mean[c]) * (*inv_std)[c];
        (*xhat)[base + i] = h;
        y[base + i] = g * h + bta;
      }
    }
  }

  bool tracked = track({&x, &gamma, &beta});
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  const bool train = mode == Mode::Train;
  auto bwd = [=](Node& out) {
    const double Md = static_cast<double>(M);
    for (int c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int n = 0; n < N; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          sum_dy += out.grad[base + i];
          sum_dy_xhat += out.grad[base + i] * (*xhat)[base + i];
        }
      }
      gn->grad[c] += sum_dy_xhat;
      bn->grad[c] += sum_dy;
      const double g = gn->data[c], is = (*inv_std)[c];
      for (int n = 0; n < N; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * C + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) {
          double dy = out.grad[base + i];
          double dx;
          if (train) {
            dx = g * is * (dy - sum_dy / Md - (*xhat)[base + i] * sum_dy_xhat / Md);
          } else {
            dx = g * is * dy;
          }
          xn->grad[base + i] += dx;
        }
      }
    }
  };
  return make_out(sh, std::move(y), tracked, {xn, gn, bn}, std::move(bwd));
}

Tensor relu(const Tensor& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  bool tracked = track({&x});
  auto xn = x.node();
  auto bwd = [=](Node& out) {
    // derivative at exactly 0 is 0
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      if (xn->data[i] > 0.0) xn->grad[i] += out.grad[i];
  };
  return make_out(x.shape(), std::move(y), tracked, {xn}, std::move(bwd));
}

Tensor sigmoid(const Tensor& x) {
  auto y = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t i = 0; i < y->size(); ++i) (*y)[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  bool tracked = track({&x});
  auto xn = x.node();
  auto bwd = [=](Node& out) {
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      xn->grad[i] += out.grad[i] * (*y)[i] * (1.0 - (*y)[i]);
  };
  return make_out(x.shape(), std::vector<double>(*y), tracked, {xn}, std::move(bwd));
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must satisfy 0 <= p < 1");
  if (mode == Mode::Eval || p == 0.0) {
    // Identity; still recorded so gradients flow through.
    std::vector<double> y = x.data();
    bool tracked = track({&x});
    auto xn = x.node();
    auto bwd = [=](Node& out) {
      for (std::size_t i = 0; i < out.grad.size(); ++i) xn->grad[i] += out.grad[i];
    };
    return make_out(x.shape(), std::move(y), tracked, {xn}, std::move(bwd));
  }
  const double scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double m = rng.bernoulli(p) ? 0.0 : scale;
    (*mask)[i] = m;
    y[i] = x.data()[i] * m;
  }
  bool tracked = track({&x});
  auto xn = x.node();
  auto bwd = [=](Node& out) {
    for (std::size_t i = 0; i < out.grad.size(); ++i) xn->grad[i] += out.grad[i] * (*mask)[i];
  };
  return make_out(x.shape(), std::move(y), tracked, {xn}, std::move(bwd));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.shape().size() == 2, "linear: input must be [N,D]");
  require(w.shape().size() == 2, "linear: weight must be [M,D]");
  require(b.shape().size() == 1, "linear: bias must be [M]");
  const int N = x.dim(0), D = x.dim(1), M = w.dim(0);
  require(w.dim(1) == D, "linear: weight width must equal input features");
  require(b.dim(0) == M, "linear: bias length must equal output features");

  std::vector<double> y(static_cast<std::size_t>(N) * M);
  gemm(false, true, N, M, D, x.data().data(), w.data().data(), y.data(), 0.0);
  for (int n = 0; n < N; ++n)
    for (int m = 0; m < M; ++m) y[static_cast<std::size_t>(n) * M + m] += b.data()[m];

  bool tracked = track({&x, &w, &b});
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  auto bwd = [=](Node& out) {
    // dx = dy * w ; dw = dy^T * x ; db = column sums of dy
    gemm(false, false, N, D, M, out.grad.data(), wn->data.data(), xn->grad.data(), 1.0);
    gemm(true, false, M, D, N, out.grad.data(), xn->data.data(), wn->grad.data(), 1.0);
    for (int n = 0; n < N; ++n)
      for (int m = 0; m < M; ++m) bn->grad[m] += out.grad[static_cast<std::size_t>(n) * M + m];
  };
  return make_out({N, M}, std::move(y), tracked, {xn, wn, bn}, std::move(bwd));
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  require(shape_numel(shape) == x.size(), "reshape: element count mismatch");
  std::vector<double> y = x.data();
  bool tracked = track({&x});
  auto xn = x.node();
  auto bwd = [=](Node& out) {
    for (std::size_t i = 0; i < out.grad.size(); ++i) xn->grad[i] += out.grad[i];
  };
  return make_out(std::move(shape), std::move(y), tracked, {xn}, std::move(bwd));
}

Tensor flatten(const Tensor& x) {
  require(!x.shape().empty(), "flatten: undefined shape");
  const int N = x.dim(0);
  const int D = static_cast<int>(x.size() / static_cast<std::size_t>(N));
  return reshape(x, {N, D});
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 4 && b.shape().size() == 4, "concat: inputs must be NCHW");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat: N/H/W must agree");
  const int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  std::vector<double> y(static_cast<std::size_t>(N) * (Ca + Cb) * hw);
  for (int n = 0; n < N; ++n) {
    std::copy_n(a.data().data() + static_cast<std::size_t>(n) * Ca * hw, Ca * hw,
                y.data() + static_cast<std::size_t>(n) * (Ca + Cb) * hw);
    std::copy_n(b.data().data() + static_cast<std::size_t>(n) * Cb * hw, Cb * hw,
                y.data() + (static_cast<std::size_t>(n) * (Ca + Cb) + Ca) * hw);
  }
  bool tracked = track({&a, &b});
  auto an = a.node();
  auto bn = b.node();
  auto bwd = [=](Node& out) {
    for (int n = 0; n < N; ++n) {
      const double* g = out.grad.data() + static_cast<std::size_t>(n) * (Ca + Cb) * hw;
      double* ga = an->grad.data() + static_cast<std::size_t>(n) * Ca * hw;
      double* gb = bn->grad.data() + static_cast<std::size_t>(n) * Cb * hw;
      for (std::size_t i = 0; i < static_cast<std::size_t>(Ca) * hw; ++i) ga[i] += g[i];
      for (std::size_t i = 0; i < static_cast<std::size_t>(Cb) * hw; ++i)
        gb[i] += g[static_cast<std::size_t>(Ca) * hw + i];
    }
  };
  return make_out({N, Ca + Cb, H, W}, std::move(y), tracked, {an, bn}, std::move(bwd));
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  bool tracked = track({&a, &b});
  auto an = a.node();
  auto bn = b.node();
  auto bwd = [=](Node& out) {
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      an->grad[i] += out.grad[i];
      bn->grad[i] += out.grad[i];
    }
  };
  return make_out(a.shape(), std::move(y), tracked, {an, bn}, std::move(bwd));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  bool tracked = track({&a, &b});
  auto an = a.node();
  auto bn = b.node();
  auto bwd = [=](Node& out) {
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
      an->grad[i] += out.grad[i] * bn->data[i];
      bn->grad[i] += out.grad[i] * an->data[i];
    }
  };
  return make_out(a.shape(), std::move(y), tracked, {an, bn}, std::move(bwd));
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  bool tracked = track({&x});
  auto xn = x.node();
  auto bwd = [=](Node& out) {
    for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += out.grad[0];
  };
  return make_out({1}, {s}, tracked, {xn}, std::move(bwd));
}

Tensor dice_loss(const Tensor& pred, const Tensor& target, double smooth) {
  require(pred.shape() == target.shape(), "dice_loss: shape mismatch");
  double s_pt = 0.0, s_p = 0.0, s_t = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    s_pt += pred.data()[i] * target.data()[i];
    s_p += pred.data()[i];
    s_t += target.data()[i];
  }
  const double denom = s_p + s_t + smooth;
  const double loss = 1.0 - (2.0 * s_pt + smooth) / denom;
  check_finite({loss}, "dice_loss");

  bool tracked = track({&pred});
  auto pn = pred.node();
  auto tn = target.node();
  const double numer = 2.0 * s_pt + smooth;
  auto bwd = [=](Node& out) {
    const double g = out.grad[0];
    for (std::size_t i = 0; i < pn->grad.size(); ++i) {
      pn->grad[i] += g * (numer - 2.0 * tn->data[i] * denom) / (denom * denom);
    }
  };
  return make_out({1}, {loss}, tracked, {pn, tn}, std::move(bwd));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(), "mse_loss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred.data()[i] - target.data()[i];
    s += d * d;
  }
  const double loss = s / n;
  check_finite({loss}, "mse_loss");

  bool tracked = track({&pred});
  auto pn = pred.node();
  auto tn = target.node();
  auto bwd = [=](Node& out) {
    const double g = out.grad[0];
    for (std::size_t i = 0; i < pn->grad.size(); ++i)
      pn->grad[i] += g * 2.0 * (pn->data[i] - tn->data[i]) / n;
  };
  return make_out({1}, {loss}, tracked, {pn, tn}, std::move(bwd));
}

}  // namespace ops
}  // namespace slm
