#pragma once

// Reverse-mode autodiff over dense row-major tensors. One Tape per training
// step; primitives record a backward closure when any input is on the tape.
// Kernels are deterministic: parallel loops only ever write disjoint outputs
// and every reduction runs in a fixed sequential order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "hydroseg/common.hpp"

namespace hydroseg {

inline size_t numel_of(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    require(d >= 1, errkind::bad_argument, "tensor dims must be >= 1");
    n *= size_t(d);
  }
  return n;
}

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;
  int node = -1;  // tape node id; -1 means constant / not recorded

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require(data.size() == numel_of(shape), errkind::shape_mismatch,
            "data length != product(shape)");
  }

  static Tensor full(std::vector<int> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }

  size_t numel() const { return data.size(); }
  int rank() const { return int(shape.size()); }
  int dim(int i) const { return shape[size_t(i)]; }
  T item() const {
    require(numel() == 1, errkind::bad_argument, "item() on non-scalar tensor");
    return data[0];
  }
};

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape == b.shape, errkind::shape_mismatch, std::string(op) + ": shape mismatch");
}

// reflect index (edge-inclusive): -1 -> 0, -2 -> 1, n -> n-1
inline int reflect_index(int i, int n) {
  if (i < 0) i = -i - 1;
  if (i >= n) i = 2 * n - 1 - i;
  return i;
}

template <typename T>
class Tape {
 public:
  using Grad = std::vector<T>;

  Tensor<T> leaf(Tensor<T> t) {
    t.node = new_node(t.numel(), nullptr);
    return t;
  }

  size_t size() const { return nodes_.size(); }

  /// Reverse topological sweep from a recorded scalar loss.
  void backward(const Tensor<T>& loss) {
    require(loss.numel() == 1, errkind::bad_argument, "backward requires a scalar loss");
    require(loss.node >= 0, errkind::bad_argument, "loss is not recorded on this tape");
    grads_.assign(nodes_.size(), Grad{});
    grads_[size_t(loss.node)] = Grad{T(1)};
    for (int i = loss.node; i >= 0; --i) {
      if (grads_[size_t(i)].empty()) continue;  // not on any path to the loss
      if (nodes_[size_t(i)].back) nodes_[size_t(i)].back(grads_[size_t(i)], *this);
    }
  }

  /// Gradient for a recorded tensor; zeros when it never fed the loss.
  Grad grad_of(const Tensor<T>& t) const {
    require(t.node >= 0, errkind::bad_argument, "tensor is not recorded on this tape");
    if (size_t(t.node) < grads_.size() && !grads_[size_t(t.node)].empty())
      return grads_[size_t(t.node)];
    return Grad(nodes_[size_t(t.node)].size, T(0));
  }

  Grad& gbuf(int node) {
    auto& g = grads_[size_t(node)];
    if (g.empty()) g.assign(nodes_[size_t(node)].size, T(0));
    return g;
  }

  // ----- elementwise -----

  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a.data[i] + b.data[i];
    record(out, {a.node, b.node}, [an = a.node, bn = b.node](const Grad& g, Tape& t) {
      if (an >= 0) {
        auto& ga = t.gbuf(an);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn >= 0) {
        auto& gb = t.gbuf(bn);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
    return out;
  }

  Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a.data[i] - b.data[i];
    record(out, {a.node, b.node}, [an = a.node, bn = b.node](const Grad& g, Tape& t) {
      if (an >= 0) {
        auto& ga = t.gbuf(an);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn >= 0) {
        auto& gb = t.gbuf(bn);
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
    return out;
  }

  Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a.data[i] * b.data[i];
    record(out, {a.node, b.node},
           [an = a.node, bn = b.node, ad = a.data, bd = b.data](const Grad& g, Tape& t) {
             if (an >= 0) {
               auto& ga = t.gbuf(an);
               for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
             }
             if (bn >= 0) {
               auto& gb = t.gbuf(bn);
               for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
             }
           });
    return out;
  }

  Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "div");
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a.data[i] / b.data[i];
    record(out, {a.node, b.node},
           [an = a.node, bn = b.node, ad = a.data, bd = b.data](const Grad& g, Tape& t) {
             if (an >= 0) {
               auto& ga = t.gbuf(an);
               for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bd[i];
             }
             if (bn >= 0) {
               auto& gb = t.gbuf(bn);
               for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * ad[i] / (bd[i] * bd[i]);
             }
           });
    return out;
  }

  /// alpha * a + beta
  Tensor<T> affine(const Tensor<T>& a, T alpha, T beta) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = alpha * a.data[i] + beta;
    record(out, {a.node}, [an = a.node, alpha](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += alpha * g[i];
    });
    return out;
  }

  Tensor<T> scalar_mul(const Tensor<T>& a, T c) { return affine(a, c, T(0)); }

  Tensor<T> log(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = std::log(a.data[i]);
    record(out, {a.node}, [an = a.node, ad = a.data](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / ad[i];
    });
    return out;
  }

  /// Values clamped to [lo,hi]; gradient passes only strictly inside.
  Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = std::min(hi, std::max(lo, a.data[i]));
    record(out, {a.node}, [an = a.node, ad = a.data, lo, hi](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < g.size(); ++i)
        if (ad[i] > lo && ad[i] < hi) ga[i] += g[i];
    });
    return out;
  }

  Tensor<T> relu(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a.data[i] > T(0) ? a.data[i] : T(0);
    record(out, {a.node}, [an = a.node, ad = a.data](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < g.size(); ++i)
        if (ad[i] > T(0)) ga[i] += g[i];
    });
    return out;
  }

  Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    const T inv_sqrt2 = T(0.70710678118654752440);
    for (size_t i = 0; i < out.numel(); ++i) {
      T x = a.data[i];
      out.data[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
    }
    record(out, {a.node}, [an = a.node, ad = a.data](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      const T inv_sqrt2 = T(0.70710678118654752440);
      const T inv_sqrt2pi = T(0.39894228040143267794);
      for (size_t i = 0; i < g.size(); ++i) {
        T x = ad[i];
        T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
        ga[i] += g[i] * (cdf + x * pdf);
      }
    });
    return out;
  }

  Tensor<T> sigmoid(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < out.numel(); ++i) {
      T x = a.data[i];
      out.data[i] = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                              : std::exp(x) / (T(1) + std::exp(x));
    }
    record(out, {a.node}, [an = a.node, od = out.data](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * od[i] * (T(1) - od[i]);
    });
    return out;
  }

  // ----- rows over the last axis -----

  Tensor<T> softmax_last(const Tensor<T>& a) {
    require(a.rank() >= 1, errkind::bad_argument, "softmax needs rank >= 1");
    const size_t K = size_t(a.shape.back());
    const size_t rows = a.numel() / K;
    Tensor<T> out(a.shape);
    for (size_t r = 0; r < rows; ++r) {
      const T* x = &a.data[r * K];
      T* y = &out.data[r * K];
      T mx = x[0];
      for (size_t k = 1; k < K; ++k) mx = std::max(mx, x[k]);
      T sum = T(0);
      for (size_t k = 0; k < K; ++k) {
        y[k] = std::exp(x[k] - mx);
        sum += y[k];
      }
      for (size_t k = 0; k < K; ++k) y[k] /= sum;
    }
    record(out, {a.node}, [an = a.node, od = out.data, K](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      const size_t rows = g.size() / K;
      for (size_t r = 0; r < rows; ++r) {
        const T* s = &od[r * K];
        const T* gr = &g[r * K];
        T dot = T(0);
        for (size_t k = 0; k < K; ++k) dot += gr[k] * s[k];
        for (size_t k = 0; k < K; ++k) ga[r * K + k] += s[k] * (gr[k] - dot);
      }
    });
    return out;
  }

  /// LayerNorm over the last axis with learned scale/shift of shape (K).
  Tensor<T> layernorm_last(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta,
                           T eps = T(1e-5)) {
    require(a.rank() >= 1, errkind::bad_argument, "layernorm needs rank >= 1");
    const size_t K = size_t(a.shape.back());
    require(gamma.shape == std::vector<int>{int(K)} && beta.shape == std::vector<int>{int(K)},
            errkind::shape_mismatch, "layernorm scale/shift must have shape (K)");
    const size_t rows = a.numel() / K;
    Tensor<T> out(a.shape);
    std::vector<T> xhat(a.numel());
    std::vector<T> inv_std(rows);
    for (size_t r = 0; r < rows; ++r) {
      const T* x = &a.data[r * K];
      T mu = T(0);
      for (size_t k = 0; k < K; ++k) mu += x[k];
      mu /= T(K);
      T var = T(0);
      for (size_t k = 0; k < K; ++k) var += (x[k] - mu) * (x[k] - mu);
      var /= T(K);
      T inv = T(1) / std::sqrt(var + eps);
      inv_std[r] = inv;
      for (size_t k = 0; k < K; ++k) {
        xhat[r * K + k] = (x[k] - mu) * inv;
        out.data[r * K + k] = gamma.data[k] * xhat[r * K + k] + beta.data[k];
      }
    }
    record(out, {a.node, gamma.node, beta.node},
           [an = a.node, gn = gamma.node, bn = beta.node, gd = gamma.data, xh = std::move(xhat),
            inv = std::move(inv_std), K](const Grad& g, Tape& t) {
             const size_t rows = g.size() / K;
             if (bn >= 0) {
               auto& gb = t.gbuf(bn);
               for (size_t r = 0; r < rows; ++r)
                 for (size_t k = 0; k < K; ++k) gb[k] += g[r * K + k];
             }
             if (gn >= 0) {
               auto& gg = t.gbuf(gn);
               for (size_t r = 0; r < rows; ++r)
                 for (size_t k = 0; k < K; ++k) gg[k] += g[r * K + k] * xh[r * K + k];
             }
             if (an >= 0) {
               auto& ga = t.gbuf(an);
               for (size_t r = 0; r < rows; ++r) {
                 T mean_gy = T(0), mean_gyx = T(0);
                 for (size_t k = 0; k < K; ++k) {
                   T gy = g[r * K + k] * gd[k];
                   mean_gy += gy;
                   mean_gyx += gy * xh[r * K + k];
                 }
                 mean_gy /= T(K);
                 mean_gyx /= T(K);
                 for (size_t k = 0; k < K; ++k) {
                   T gy = g[r * K + k] * gd[k];
                   ga[r * K + k] += inv[r] * (gy - mean_gy - xh[r * K + k] * mean_gyx);
                 }
               }
             }
           });
    return out;
  }

  Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
    require(a.rank() >= 1, errkind::bad_argument, "add_bias needs rank >= 1");
    const size_t K = size_t(a.shape.back());
    require(bias.shape == std::vector<int>{int(K)}, errkind::shape_mismatch,
            "bias must have shape (last_dim)");
    Tensor<T> out(a.shape);
    const size_t rows = a.numel() / K;
    for (size_t r = 0; r < rows; ++r)
      for (size_t k = 0; k < K; ++k) out.data[r * K + k] = a.data[r * K + k] + bias.data[k];
    record(out, {a.node, bias.node}, [an = a.node, bn = bias.node, K](const Grad& g, Tape& t) {
      if (an >= 0) {
        auto& ga = t.gbuf(an);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn >= 0) {
        auto& gb = t.gbuf(bn);
        const size_t rows = g.size() / K;
        for (size_t r = 0; r < rows; ++r)
          for (size_t k = 0; k < K; ++k) gb[k] += g[r * K + k];
      }
    });
    return out;
  }

  // ----- matrix products -----

  /// a: (..., K) flattened to (M, K); w: (K, N). Output (..., N).
  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& w) {
    require(a.rank() >= 1 && w.rank() == 2, errkind::shape_mismatch,
            "matmul expects (...,K) x (K,N)");
    const size_t K = size_t(a.shape.back());
    require(size_t(w.dim(0)) == K, errkind::shape_mismatch, "matmul inner dims differ");
    const size_t N = size_t(w.dim(1));
    const size_t M = a.numel() / K;
    std::vector<int> out_shape(a.shape.begin(), a.shape.end() - 1);
    out_shape.push_back(int(N));
    Tensor<T> out(out_shape);
    const T* A = a.data.data();
    const T* W = w.data.data();
    T* O = out.data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t m = 0; m < int64_t(M); ++m) {
      T* orow = O + size_t(m) * N;
      std::fill(orow, orow + N, T(0));
      const T* arow = A + size_t(m) * K;
      for (size_t k = 0; k < K; ++k) {
        const T av = arow[k];
        const T* wrow = W + k * N;
        for (size_t n = 0; n < N; ++n) orow[n] += av * wrow[n];
      }
    }
    record(out, {a.node, w.node},
           [an = a.node, wn = w.node, ad = a.data, wd = w.data, M, K, N](const Grad& g, Tape& t) {
             if (an >= 0) {
               auto& ga = t.gbuf(an);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
               for (int64_t m = 0; m < int64_t(M); ++m) {
                 T* garow = ga.data() + size_t(m) * K;
                 const T* grow = g.data() + size_t(m) * N;
                 for (size_t k = 0; k < K; ++k) {
                   const T* wrow = wd.data() + k * N;
                   T acc = T(0);
                   for (size_t n = 0; n < N; ++n) acc += grow[n] * wrow[n];
                   garow[k] += acc;
                 }
               }
             }
             if (wn >= 0) {
               auto& gw = t.gbuf(wn);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
               for (int64_t k = 0; k < int64_t(K); ++k) {
                 T* gwrow = gw.data() + size_t(k) * N;
                 for (size_t m = 0; m < M; ++m) {
                   const T av = ad[m * K + size_t(k)];
                   const T* grow = g.data() + m * N;
                   for (size_t n = 0; n < N; ++n) gwrow[n] += av * grow[n];
                 }
               }
             }
           });
    return out;
  }

  /// Batched matmul: (B,M,K) x (B,K,N) -> (B,M,N).
  Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() == 3 && b.rank() == 3, errkind::shape_mismatch, "bmm expects rank-3 inputs");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1), errkind::shape_mismatch,
            "bmm batch/inner dims differ");
    const size_t B = size_t(a.dim(0)), M = size_t(a.dim(1)), K = size_t(a.dim(2)),
                 N = size_t(b.dim(2));
    Tensor<T> out({int(B), int(M), int(N)});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t bi = 0; bi < int64_t(B); ++bi) {
      const T* A = a.data.data() + size_t(bi) * M * K;
      const T* Bm = b.data.data() + size_t(bi) * K * N;
      T* O = out.data.data() + size_t(bi) * M * N;
      for (size_t m = 0; m < M; ++m) {
        T* orow = O + m * N;
        std::fill(orow, orow + N, T(0));
        for (size_t k = 0; k < K; ++k) {
          const T av = A[m * K + k];
          const T* brow = Bm + k * N;
          for (size_t n = 0; n < N; ++n) orow[n] += av * brow[n];
        }
      }
    }
    record(out, {a.node, b.node},
           [an = a.node, bn = b.node, ad = a.data, bd = b.data, B, M, K, N](const Grad& g,
                                                                            Tape& t) {
             if (an >= 0) {
               auto& ga = t.gbuf(an);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
               for (int64_t bi = 0; bi < int64_t(B); ++bi) {
                 const T* grow0 = g.data() + size_t(bi) * M * N;
                 const T* Bm = bd.data() + size_t(bi) * K * N;
                 T* gA = ga.data() + size_t(bi) * M * K;
                 for (size_t m = 0; m < M; ++m)
                   for (size_t k = 0; k < K; ++k) {
                     T acc = T(0);
                     const T* grow = grow0 + m * N;
                     const T* brow = Bm + k * N;
                     for (size_t n = 0; n < N; ++n) acc += grow[n] * brow[n];
                     gA[m * K + k] += acc;
                   }
               }
             }
             if (bn >= 0) {
               auto& gb = t.gbuf(bn);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
               for (int64_t bi = 0; bi < int64_t(B); ++bi) {
                 const T* grow0 = g.data() + size_t(bi) * M * N;
                 const T* A = ad.data() + size_t(bi) * M * K;
                 T* gB = gb.data() + size_t(bi) * K * N;
                 for (size_t k = 0; k < K; ++k)
                   for (size_t m = 0; m < M; ++m) {
                     const T av = A[m * K + k];
                     const T* grow = grow0 + m * N;
                     T* gbrow = gB + k * N;
                     for (size_t n = 0; n < N; ++n) gbrow[n] += av * grow[n];
                   }
               }
             }
           });
    return out;
  }

  // ----- convolutions / pooling / resize (NCHW) -----

  Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                   int pad, bool reflect = true) {
    require(x.rank() == 4 && w.rank() == 4, errkind::shape_mismatch,
            "conv2d expects NCHW input and OIHW weight");
    const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    require(w.dim(1) == Ci, errkind::shape_mismatch, "conv2d channel mismatch");
    require(bias.shape == std::vector<int>{Co}, errkind::shape_mismatch, "conv2d bias shape");
    require(stride >= 1 && pad >= 0, errkind::bad_argument, "conv2d stride/pad invalid");
    require(pad < H + 1 && pad < W + 1 && pad <= H && pad <= W, errkind::bad_argument,
            "conv2d pad too large for input");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    require(Ho >= 1 && Wo >= 1, errkind::shape_mismatch, "conv2d output would be empty");
    Tensor<T> out({N, Co, Ho, Wo});

    auto in_at = [&](const std::vector<T>& xd, int n, int c, int iy, int ix) -> T {
      if (reflect) {
        iy = reflect_index(iy, H);
        ix = reflect_index(ix, W);
      } else if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
        return T(0);
      }
      return xd[((size_t(n) * Ci + c) * H + iy) * W + ix];
    };

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t nc = 0; nc < int64_t(N) * Co; ++nc) {
      const int n = int(nc / Co), co = int(nc % Co);
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          T acc = bias.data[co];
          for (int ci = 0; ci < Ci; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx)
                acc += w.data[((size_t(co) * Ci + ci) * kh + ky) * kw + kx] *
                       in_at(x.data, n, ci, oy * stride - pad + ky, ox * stride - pad + kx);
          out.data[((size_t(n) * Co + co) * Ho + oy) * Wo + ox] = acc;
        }
    }

    record(out, {x.node, w.node, bias.node},
           [xn = x.node, wn = w.node, bn = bias.node, xd = x.data, wd = w.data, N, Ci, H, W, Co,
            kh, kw, Ho, Wo, stride, pad, reflect](const Grad& g, Tape& t) {
             if (bn >= 0) {
               auto& gb = t.gbuf(bn);
               for (int n = 0; n < N; ++n)
                 for (int co = 0; co < Co; ++co) {
                   T acc = T(0);
                   const T* grow = g.data() + ((size_t(n) * Co + co) * Ho) * Wo;
                   for (int i = 0; i < Ho * Wo; ++i) acc += grow[i];
                   gb[co] += acc;
                 }
             }
             if (wn >= 0) {
               auto& gw = t.gbuf(wn);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
               for (int64_t co = 0; co < Co; ++co) {
                 for (int ci = 0; ci < Ci; ++ci)
                   for (int ky = 0; ky < kh; ++ky)
                     for (int kx = 0; kx < kw; ++kx) {
                       T acc = T(0);
                       for (int n = 0; n < N; ++n)
                         for (int oy = 0; oy < Ho; ++oy)
                           for (int ox = 0; ox < Wo; ++ox) {
                             int iy = oy * stride - pad + int(ky);
                             int ix = ox * stride - pad + kx;
                             T xv;
                             if (reflect) {
                               iy = reflect_index(iy, H);
                               ix = reflect_index(ix, W);
                               xv = xd[((size_t(n) * Ci + ci) * H + iy) * W + ix];
                             } else if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                               continue;
                             } else {
                               xv = xd[((size_t(n) * Ci + ci) * H + iy) * W + ix];
                             }
                             acc += g[((size_t(n) * Co + co) * Ho + oy) * Wo + ox] * xv;
                           }
                       gw[((size_t(co) * Ci + ci) * kh + ky) * kw + kx] += acc;
                     }
               }
             }
             if (xn >= 0) {
               auto& gx = t.gbuf(xn);
               // scatter parallelized over batch: slices are disjoint, and
               // reflected-index collisions stay within one n
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
               for (int64_t n = 0; n < N; ++n)
                 for (int co = 0; co < Co; ++co)
                   for (int oy = 0; oy < Ho; ++oy)
                     for (int ox = 0; ox < Wo; ++ox) {
                       const T gv = g[((size_t(n) * Co + co) * Ho + oy) * Wo + ox];
                       for (int ci = 0; ci < Ci; ++ci)
                         for (int ky = 0; ky < kh; ++ky)
                           for (int kx = 0; kx < kw; ++kx) {
                             int iy = oy * stride - pad + ky;
                             int ix = ox * stride - pad + kx;
                             if (reflect) {
                               iy = reflect_index(iy, H);
                               ix = reflect_index(ix, W);
                             } else if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                               continue;
                             }
                             gx[((size_t(n) * Ci + ci) * H + iy) * W + ix] +=
                                 gv * wd[((size_t(co) * Ci + ci) * kh + ky) * kw + kx];
                           }
                     }
             }
           });
    return out;
  }

  /// Depthwise 3x3, stride 1, pad 1. Weight shape (C,3,3).
  Tensor<T> dwconv3x3(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                      bool reflect = true) {
    require(x.rank() == 4, errkind::shape_mismatch, "dwconv expects NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(w.shape == std::vector<int>{C, 3, 3}, errkind::shape_mismatch,
            "dwconv weight must be (C,3,3)");
    require(bias.shape == std::vector<int>{C}, errkind::shape_mismatch, "dwconv bias shape");
    Tensor<T> out({N, C, H, W});
    auto src = [&](int n, int c, int iy, int ix) -> T {
      if (reflect) {
        iy = reflect_index(iy, H);
        ix = reflect_index(ix, W);
      } else if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
        return T(0);
      }
      return x.data[((size_t(n) * C + c) * H + iy) * W + ix];
    };
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
      const int n = int(nc / C), c = int(nc % C);
      for (int y = 0; y < H; ++y)
        for (int xpos = 0; xpos < W; ++xpos) {
          T acc = bias.data[c];
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              acc += w.data[(size_t(c) * 3 + ky) * 3 + kx] * src(n, c, y - 1 + ky, xpos - 1 + kx);
          out.data[((size_t(n) * C + c) * H + y) * W + xpos] = acc;
        }
    }
    record(out, {x.node, w.node, bias.node},
           [xn = x.node, wn = w.node, bn = bias.node, xd = x.data, wd = w.data, N, C, H, W,
            reflect](const Grad& g, Tape& t) {
             auto srcv = [&](int n, int c, int iy, int ix, bool& ok) -> T {
               if (reflect) {
                 iy = reflect_index(iy, H);
                 ix = reflect_index(ix, W);
               } else if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                 ok = false;
                 return T(0);
               }
               ok = true;
               return xd[((size_t(n) * C + c) * H + iy) * W + ix];
             };
             if (bn >= 0) {
               auto& gb = t.gbuf(bn);
               for (int n = 0; n < N; ++n)
                 for (int c = 0; c < C; ++c) {
                   T acc = T(0);
                   const T* grow = g.data() + ((size_t(n) * C + c) * H) * W;
                   for (int i = 0; i < H * W; ++i) acc += grow[i];
                   gb[c] += acc;
                 }
             }
             if (wn >= 0) {
               auto& gw = t.gbuf(wn);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
               for (int64_t c = 0; c < C; ++c)
                 for (int ky = 0; ky < 3; ++ky)
                   for (int kx = 0; kx < 3; ++kx) {
                     T acc = T(0);
                     for (int n = 0; n < N; ++n)
                       for (int y = 0; y < H; ++y)
                         for (int xpos = 0; xpos < W; ++xpos) {
                           bool ok;
                           T xv = srcv(n, int(c), y - 1 + ky, xpos - 1 + kx, ok);
                           if (!ok) continue;
                           acc += g[((size_t(n) * C + c) * H + y) * W + xpos] * xv;
                         }
                     gw[(size_t(c) * 3 + ky) * 3 + kx] += acc;
                   }
             }
             if (xn >= 0) {
               auto& gx = t.gbuf(xn);
               // disjoint (n,c) slices; deterministic under any thread count
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
               for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
                 const int n = int(nc / C), c = int(nc % C);
                 for (int y = 0; y < H; ++y)
                   for (int xpos = 0; xpos < W; ++xpos) {
                     const T gv = g[((size_t(n) * C + c) * H + y) * W + xpos];
                     for (int ky = 0; ky < 3; ++ky)
                       for (int kx = 0; kx < 3; ++kx) {
                         int iy = y - 1 + ky, ix = xpos - 1 + kx;
                         if (reflect) {
                           iy = reflect_index(iy, H);
                           ix = reflect_index(ix, W);
                         } else if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                           continue;
                         }
                         gx[((size_t(n) * C + c) * H + iy) * W + ix] +=
                             gv * wd[(size_t(c) * 3 + ky) * 3 + kx];
                       }
                   }
               }
             }
           });
    return out;
  }

  /// Average pooling, kernel == stride == k; H and W must divide by k.
  Tensor<T> avgpool(const Tensor<T>& x, int k) {
    require(x.rank() == 4, errkind::shape_mismatch, "avgpool expects NCHW");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(k >= 1 && H % k == 0 && W % k == 0, errkind::bad_argument,
            "avgpool needs dims divisible by k");
    if (k == 1) return reshape(x, x.shape);  // no-op passthrough keeps the graph simple
    const int Ho = H / k, Wo = W / k;
    Tensor<T> out({N, C, Ho, Wo});
    const T inv = T(1) / T(k * k);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox) {
            T acc = T(0);
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx)
                acc += x.data[((size_t(n) * C + c) * H + oy * k + dy) * W + ox * k + dx];
            out.data[((size_t(n) * C + c) * Ho + oy) * Wo + ox] = acc * inv;
          }
    record(out, {x.node}, [xn = x.node, N, C, H, W, Ho, Wo, k, inv](const Grad& g, Tape& t) {
      if (xn < 0) return;
      auto& gx = t.gbuf(xn);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
              const T gv = g[((size_t(n) * C + c) * Ho + oy) * Wo + ox] * inv;
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                  gx[((size_t(n) * C + c) * H + oy * k + dy) * W + ox * k + dx] += gv;
            }
    });
    return out;
  }

  /// Bilinear resize with half-pixel centers; same-size resize is the identity.
  Tensor<T> bilinear_resize(const Tensor<T>& x, int Ho, int Wo) {
    require(x.rank() == 4, errkind::shape_mismatch, "bilinear_resize expects NCHW");
    require(Ho >= 1 && Wo >= 1, errkind::bad_argument, "resize target must be >= 1");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out({N, C, Ho, Wo});
    // precompute axis samplers
    std::vector<int> y0(Ho), y1(Ho), x0(Wo), x1(Wo);
    std::vector<T> fy(Ho), fx(Wo);
    auto make_axis = [](int n_in, int n_out, std::vector<int>& i0, std::vector<int>& i1,
                        std::vector<T>& f) {
      for (int o = 0; o < n_out; ++o) {
        double s = (double(o) + 0.5) * double(n_in) / double(n_out) - 0.5;
        int lo = int(std::floor(s));
        double frac = s - lo;
        int hi = lo + 1;
        i0[o] = std::clamp(lo, 0, n_in - 1);
        i1[o] = std::clamp(hi, 0, n_in - 1);
        f[o] = T(frac);
      }
    };
    make_axis(H, Ho, y0, y1, fy);
    make_axis(W, Wo, x0, x1, fx);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
      const size_t base_in = size_t(nc) * H * W;
      const size_t base_out = size_t(nc) * Ho * Wo;
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const T a = x.data[base_in + size_t(y0[oy]) * W + x0[ox]];
          const T b = x.data[base_in + size_t(y0[oy]) * W + x1[ox]];
          const T c = x.data[base_in + size_t(y1[oy]) * W + x0[ox]];
          const T d = x.data[base_in + size_t(y1[oy]) * W + x1[ox]];
          const T top = a + (b - a) * fx[ox];
          const T bot = c + (d - c) * fx[ox];
          out.data[base_out + size_t(oy) * Wo + ox] = top + (bot - top) * fy[oy];
        }
    }
    record(out, {x.node},
           [xn = x.node, N, C, H, W, Ho, Wo, y0, y1, x0, x1, fy, fx](const Grad& g, Tape& t) {
             if (xn < 0) return;
             auto& gx = t.gbuf(xn);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
             for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
               const size_t base_in = size_t(nc) * H * W;
               const size_t base_out = size_t(nc) * Ho * Wo;
               for (int oy = 0; oy < Ho; ++oy)
                 for (int ox = 0; ox < Wo; ++ox) {
                   const T gv = g[base_out + size_t(oy) * Wo + ox];
                   const T wfy = fy[oy], wfx = fx[ox];
                   gx[base_in + size_t(y0[oy]) * W + x0[ox]] += gv * (T(1) - wfy) * (T(1) - wfx);
                   gx[base_in + size_t(y0[oy]) * W + x1[ox]] += gv * (T(1) - wfy) * wfx;
                   gx[base_in + size_t(y1[oy]) * W + x0[ox]] += gv * wfy * (T(1) - wfx);
                   gx[base_in + size_t(y1[oy]) * W + x1[ox]] += gv * wfy * wfx;
                 }
             }
           });
    return out;
  }

  // ----- shape ops -----

  Tensor<T> reshape(const Tensor<T>& a, std::vector<int> new_shape) {
    require(numel_of(new_shape) == a.numel(), errkind::shape_mismatch,
            "reshape changes element count");
    Tensor<T> out(std::move(new_shape), a.data);
    record(out, {a.node}, [an = a.node](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return out;
  }

  Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& axes) {
    const int r = a.rank();
    require(int(axes.size()) == r, errkind::bad_argument, "permute axes rank mismatch");
    std::vector<int> seen(r, 0), out_shape(r);
    for (int i = 0; i < r; ++i) {
      require(axes[i] >= 0 && axes[i] < r && !seen[axes[i]], errkind::bad_argument,
              "permute axes must be a permutation");
      seen[axes[i]] = 1;
      out_shape[i] = a.dim(axes[i]);
    }
    // strides of input, and of output expressed in input axis order
    std::vector<size_t> in_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * size_t(a.dim(i + 1));
    std::vector<size_t> out_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * size_t(out_shape[i + 1]);

    Tensor<T> out(out_shape);
    const size_t n = a.numel();
    std::vector<size_t> map_stride(r);  // stride in output for each input axis
    for (int i = 0; i < r; ++i) map_stride[axes[i]] = out_strides[i];
    for (size_t flat = 0; flat < n; ++flat) {
      size_t rem = flat, oflat = 0;
      for (int i = 0; i < r; ++i) {
        size_t ix = rem / in_strides[i];
        rem %= in_strides[i];
        oflat += ix * map_stride[i];
      }
      out.data[oflat] = a.data[flat];
    }
    record(out, {a.node},
           [an = a.node, in_strides, map_stride, n, r](const Grad& g, Tape& t) {
             if (an < 0) return;
             auto& ga = t.gbuf(an);
             for (size_t flat = 0; flat < n; ++flat) {
               size_t rem = flat, oflat = 0;
               for (int i = 0; i < r; ++i) {
                 size_t ix = rem / in_strides[i];
                 rem %= in_strides[i];
                 oflat += ix * map_stride[i];
               }
               ga[flat] += g[oflat];
             }
           });
    return out;
  }

  Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    require(!parts.empty(), errkind::bad_argument, "concat of nothing");
    const int r = parts[0].rank();
    require(axis >= 0 && axis < r, errkind::bad_argument, "concat axis out of range");
    std::vector<int> out_shape = parts[0].shape;
    int cat_dim = 0;
    for (const auto& p : parts) {
      require(p.rank() == r, errkind::shape_mismatch, "concat rank mismatch");
      for (int i = 0; i < r; ++i)
        if (i != axis)
          require(p.dim(i) == out_shape[i], errkind::shape_mismatch, "concat dim mismatch");
      cat_dim += p.dim(axis);
    }
    out_shape[axis] = cat_dim;
    Tensor<T> out(out_shape);

    size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= size_t(out_shape[i]);
    for (int i = axis + 1; i < r; ++i) inner *= size_t(out_shape[i]);

    std::vector<int> nodes;
    std::vector<size_t> part_rows;  // dim(axis) of each part
    size_t off = 0;
    for (const auto& p : parts) {
      const size_t rows = size_t(p.dim(axis));
      for (size_t o = 0; o < outer; ++o)
        std::copy(p.data.begin() + o * rows * inner, p.data.begin() + (o + 1) * rows * inner,
                  out.data.begin() + (o * size_t(cat_dim) + off) * inner);
      nodes.push_back(p.node);
      part_rows.push_back(rows);
      off += rows;
    }
    record(out, nodes,
           [nodes, part_rows, outer, inner, cat = size_t(cat_dim)](const Grad& g, Tape& t) {
             size_t off = 0;
             for (size_t pi = 0; pi < nodes.size(); ++pi) {
               const size_t rows = part_rows[pi];
               if (nodes[pi] >= 0) {
                 auto& gp = t.gbuf(nodes[pi]);
                 for (size_t o = 0; o < outer; ++o) {
                   const T* src = g.data() + (o * cat + off) * inner;
                   T* dst = gp.data() + o * rows * inner;
                   for (size_t i = 0; i < rows * inner; ++i) dst[i] += src[i];
                 }
               }
               off += rows;
             }
           });
    return out;
  }

  // ----- reductions -----

  Tensor<T> sum_all(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data) acc += v;
    Tensor<T> out({1}, {acc});
    record(out, {a.node}, [an = a.node, n = a.numel()](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < n; ++i) ga[i] += g[0];
    });
    return out;
  }

  Tensor<T> mean_all(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data) acc += v;
    const T inv = T(1) / T(a.numel());
    Tensor<T> out({1}, {acc * inv});
    record(out, {a.node}, [an = a.node, n = a.numel(), inv](const Grad& g, Tape& t) {
      if (an < 0) return;
      auto& ga = t.gbuf(an);
      for (size_t i = 0; i < n; ++i) ga[i] += g[0] * inv;
    });
    return out;
  }

 private:
  struct Node {
    size_t size;
    std::function<void(const Grad&, Tape&)> back;
  };

  int new_node(size_t size, std::function<void(const Grad&, Tape&)> back) {
    nodes_.push_back(Node{size, std::move(back)});
    return int(nodes_.size()) - 1;
  }

  /// Records the op when any input is on the tape; otherwise output stays constant.
  void record(Tensor<T>& out, const std::vector<int>& input_nodes,
              std::function<void(const Grad&, Tape&)> back) {
    bool any = false;
    for (int n : input_nodes) any = any || n >= 0;
    if (any) out.node = new_node(out.numel(), std::move(back));
  }

  std::vector<Node> nodes_;
  std::vector<Grad> grads_;
};

/// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
/// with numeric = central differences of f at x.
template <typename T, typename F>
double gradient_check(F f, const Tensor<T>& x, double eps) {
  require(eps > 0.0, errkind::bad_argument, "gradient_check eps must be > 0");
  Tape<T> tape;
  Tensor<T> xl = tape.leaf(x);
  Tensor<T> loss = f(tape, xl);
  require(loss.numel() == 1, errkind::bad_argument, "gradient_check needs scalar-valued f");
  tape.backward(loss);
  std::vector<T> analytic = tape.grad_of(xl);

  auto eval = [&](size_t i, double v) {
    Tensor<T> xp = x;
    xp.data[i] = T(v);
    Tape<T> t2;
    Tensor<T> xp_leaf = t2.leaf(std::move(xp));
    return double(f(t2, xp_leaf).item());
  };

  double max_rel = 0.0;
  for (size_t i = 0; i < x.numel(); ++i) {
    const double base = double(x.data[i]);
    const double num = (eval(i, base + eps) - eval(i, base - eps)) / (2.0 * eps);
    const double ana = double(analytic[i]);
    const double denom = std::max({std::fabs(ana), std::fabs(num), 1e-8});
    max_rel = std::max(max_rel, std::fabs(ana - num) / denom);
  }
  return max_rel;
}

}  // namespace hydroseg
