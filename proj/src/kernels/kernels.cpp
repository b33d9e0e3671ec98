#include "driv/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "driv/core/error.hpp"

namespace driv::kern {

namespace {

// Zero-pads (N, C, H, W) to (N, C, H+2, W+2).
template <typename T>
Tensor<T> pad1(const Tensor<T>& x) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> xp({n, c, h + 2, w + 2});
  const std::int64_t splane = static_cast<std::int64_t>(h) * w;
  const std::int64_t dplane = static_cast<std::int64_t>(h + 2) * (w + 2);
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
#pragma omp parallel for schedule(static) if (planes * splane > 16384)
  for (std::int64_t pc = 0; pc < planes; ++pc) {
    const T* src = x.data() + pc * splane;
    T* dst = xp.data() + pc * dplane;
    for (int y = 0; y < h; ++y)
      std::copy(src + static_cast<std::int64_t>(y) * w,
                src + static_cast<std::int64_t>(y + 1) * w,
                dst + static_cast<std::int64_t>(y + 1) * (w + 2) + 1);
  }
  return xp;
}

inline double reflect101(double t, int n) {
  if (n <= 1) return 0.0;
  const double period = 2.0 * (n - 1);
  t = std::fabs(t);
  t = std::fmod(t, period);
  if (t > n - 1) t = period - t;
  return t;
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                    Tensor<T>& y) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0);
  if (w.dim(1) != cin || w.dim(2) != 3 || w.dim(3) != 3)
    throw ShapeError("conv2d_forward: weight shape");
  y = Tensor<T>({n, cout, h, wd});

  const Tensor<T> xp = pad1(x);
  const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
  const std::int64_t pplane = static_cast<std::int64_t>(h + 2) * (wd + 2);

#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int co = 0; co < cout; ++co) {
      T* out = y.data() + (static_cast<std::int64_t>(ni) * cout + co) * plane;
      const T bias = b[co];
      for (int yy = 0; yy < h; ++yy) {
        T* orow = out + static_cast<std::int64_t>(yy) * wd;
        for (int xx = 0; xx < wd; ++xx) orow[xx] = bias;
        for (int ci = 0; ci < cin; ++ci) {
          const T* xpl = xp.data() +
                         (static_cast<std::int64_t>(ni) * cin + ci) * pplane;
          const T* wk = w.data() +
                        (static_cast<std::int64_t>(co) * cin + ci) * 9;
          for (int ky = 0; ky < 3; ++ky) {
            const T* row =
                xpl + static_cast<std::int64_t>(yy + ky) * (wd + 2);
            for (int kx = 0; kx < 3; ++kx) {
              const T wv = wk[ky * 3 + kx];
              const T* src = row + kx;
#pragma omp simd
              for (int xx = 0; xx < wd; ++xx) orow[xx] += wv * src[xx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_data(const Tensor<T>& dy, const Tensor<T>& w,
                          Tensor<T>& dx) {
  const int n = dy.dim(0), cout = dy.dim(1), h = dy.dim(2), wd = dy.dim(3);
  const int cin = w.dim(1);
  dx = Tensor<T>({n, cin, h, wd});

  const Tensor<T> dyp = pad1(dy);
  const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
  const std::int64_t pplane = static_cast<std::int64_t>(h + 2) * (wd + 2);

#pragma omp parallel for collapse(2) schedule(static)
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < cin; ++ci) {
      T* out = dx.data() + (static_cast<std::int64_t>(ni) * cin + ci) * plane;
      for (int yy = 0; yy < h; ++yy) {
        T* orow = out + static_cast<std::int64_t>(yy) * wd;
        for (int xx = 0; xx < wd; ++xx) orow[xx] = T(0);
        for (int co = 0; co < cout; ++co) {
          const T* dypl = dyp.data() +
                          (static_cast<std::int64_t>(ni) * cout + co) * pplane;
          const T* wk =
              w.data() + (static_cast<std::int64_t>(co) * cin + ci) * 9;
          for (int ky = 0; ky < 3; ++ky) {
            const T* row =
                dypl + static_cast<std::int64_t>(yy + ky) * (wd + 2);
            for (int kx = 0; kx < 3; ++kx) {
              // correlation with the flipped kernel
              const T wv = wk[(2 - ky) * 3 + (2 - kx)];
              const T* src = row + kx;
#pragma omp simd
              for (int xx = 0; xx < wd; ++xx) orow[xx] += wv * src[xx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weights(const Tensor<T>& x, const Tensor<T>& dy,
                             Tensor<T>& dw, Tensor<T>& db) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = dy.dim(1);
  dw = Tensor<T>({cout, cin, 3, 3});
  db = Tensor<T>({cout});

  const Tensor<T> xp = pad1(x);
  const std::int64_t plane = static_cast<std::int64_t>(h) * wd;
  const std::int64_t pplane = static_cast<std::int64_t>(h + 2) * (wd + 2);

#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    T bsum = T(0);
    for (int ni = 0; ni < n; ++ni) {
      const T* dpl = dy.data() +
                     (static_cast<std::int64_t>(ni) * cout + co) * plane;
      for (std::int64_t i = 0; i < plane; ++i) bsum += dpl[i];
    }
    db[co] = bsum;

    for (int ci = 0; ci < cin; ++ci) {
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          // 8 lanes keep the reduction vectorizable; lane merge order fixed.
          T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
          for (int ni = 0; ni < n; ++ni) {
            const T* dpl = dy.data() +
                           (static_cast<std::int64_t>(ni) * cout + co) * plane;
            const T* xpl = xp.data() +
                           (static_cast<std::int64_t>(ni) * cin + ci) * pplane;
            for (int yy = 0; yy < h; ++yy) {
              const T* drow = dpl + static_cast<std::int64_t>(yy) * wd;
              const T* xrow =
                  xpl + static_cast<std::int64_t>(yy + ky) * (wd + 2) + kx;
              int xx = 0;
              for (; xx + 8 <= wd; xx += 8)
#pragma omp simd
                for (int u = 0; u < 8; ++u) acc[u] += drow[xx + u] * xrow[xx + u];
              for (; xx < wd; ++xx) acc[0] += drow[xx] * xrow[xx];
            }
          }
          const T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
                      ((acc[4] + acc[5]) + (acc[6] + acc[7]));
          dw[((static_cast<std::int64_t>(co) * cin + ci) * 3 + ky) * 3 + kx] =
              s;
        }
      }
    }
  }
}

template <typename T>
void maxpool2x2_forward(const Tensor<T>& x, Tensor<T>& y,
                        Tensor<std::int32_t>& idx) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("maxpool2x2: odd input dimensions");
  const int ho = h / 2, wo = w / 2;
  y = Tensor<T>({n, c, ho, wo});
  idx = Tensor<std::int32_t>({n, c, ho, wo});

  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const std::int64_t in_plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t out_plane = static_cast<std::int64_t>(ho) * wo;
#pragma omp parallel for schedule(static)
  for (std::int64_t pc = 0; pc < planes; ++pc) {
    const T* in = x.data() + pc * in_plane;
    T* out = y.data() + pc * out_plane;
    std::int32_t* ind = idx.data() + pc * out_plane;
    for (int yy = 0; yy < ho; ++yy) {
      for (int xx = 0; xx < wo; ++xx) {
        const int y0 = 2 * yy, x0 = 2 * xx;
        // raster scan; ties keep the first (top-left) element
        std::int32_t best = y0 * w + x0;
        T best_v = in[best];
        const std::int32_t cand[3] = {y0 * w + x0 + 1, (y0 + 1) * w + x0,
                                      (y0 + 1) * w + x0 + 1};
        for (std::int32_t cd : cand) {
          if (in[cd] > best_v) {
            best_v = in[cd];
            best = cd;
          }
        }
        out[static_cast<std::int64_t>(yy) * wo + xx] = best_v;
        ind[static_cast<std::int64_t>(yy) * wo + xx] = best;
      }
    }
  }
}

template <typename T>
void maxpool2x2_backward(const Tensor<T>& dy, const Tensor<std::int32_t>& idx,
                         Tensor<T>& dx) {
  const int n = dy.dim(0), c = dy.dim(1), ho = dy.dim(2), wo = dy.dim(3);
  dx = Tensor<T>({n, c, ho * 2, wo * 2});
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const std::int64_t in_plane = static_cast<std::int64_t>(ho) * wo * 4;
  const std::int64_t out_plane = static_cast<std::int64_t>(ho) * wo;
#pragma omp parallel for schedule(static)
  for (std::int64_t pc = 0; pc < planes; ++pc) {
    const T* g = dy.data() + pc * out_plane;
    const std::int32_t* ind = idx.data() + pc * out_plane;
    T* out = dx.data() + pc * in_plane;
    for (std::int64_t i = 0; i < out_plane; ++i) out[ind[i]] += g[i];
  }
}

template <typename T>
void maxunpool2x2_forward(const Tensor<T>& x, const Tensor<std::int32_t>& idx,
                          Tensor<T>& y) {
  const int n = x.dim(0), c = x.dim(1), ho = x.dim(2), wo = x.dim(3);
  if (!idx.same_shape(Tensor<std::int32_t>({n, c, ho, wo})))
    throw ShapeError("maxunpool2x2: index shape mismatch");
  y = Tensor<T>({n, c, ho * 2, wo * 2});
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const std::int64_t small = static_cast<std::int64_t>(ho) * wo;
#pragma omp parallel for schedule(static)
  for (std::int64_t pc = 0; pc < planes; ++pc) {
    const T* in = x.data() + pc * small;
    const std::int32_t* ind = idx.data() + pc * small;
    T* out = y.data() + pc * small * 4;
    for (std::int64_t i = 0; i < small; ++i) out[ind[i]] = in[i];
  }
}

template <typename T>
void maxunpool2x2_backward(const Tensor<T>& dy, const Tensor<std::int32_t>& idx,
                           Tensor<T>& dx) {
  const int n = dy.dim(0), c = dy.dim(1);
  const int ho = dy.dim(2) / 2, wo = dy.dim(3) / 2;
  dx = Tensor<T>({n, c, ho, wo});
  const std::int64_t planes = static_cast<std::int64_t>(n) * c;
  const std::int64_t small = static_cast<std::int64_t>(ho) * wo;
#pragma omp parallel for schedule(static)
  for (std::int64_t pc = 0; pc < planes; ++pc) {
    const T* g = dy.data() + pc * small * 4;
    const std::int32_t* ind = idx.data() + pc * small;
    T* out = dx.data() + pc * small;
    for (std::int64_t i = 0; i < small; ++i) out[i] = g[ind[i]];
  }
}

template <typename T>
void batchnorm_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                             const Tensor<T>& beta, Tensor<T>& y,
                             Tensor<T>& save_mean, Tensor<T>& save_inv_std,
                             double eps) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  y = Tensor<T>({n, c, h, w});
  save_mean = Tensor<T>({c});
  save_inv_std = Tensor<T>({c});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t m = static_cast<std::int64_t>(n) * plane;

#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    // stats accumulate in double regardless of T
    double sum = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const T* p = x.data() + (static_cast<std::int64_t>(ni) * c + ci) * plane;
      for (std::int64_t i = 0; i < plane; ++i) sum += static_cast<double>(p[i]);
    }
    const double mean = sum / static_cast<double>(m);
    double var = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const T* p = x.data() + (static_cast<std::int64_t>(ni) * c + ci) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const double d = static_cast<double>(p[i]) - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(m);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    save_mean[ci] = static_cast<T>(mean);
    save_inv_std[ci] = static_cast<T>(inv_std);

    const T g = gamma[ci], bt = beta[ci];
    const T mu = static_cast<T>(mean), is = static_cast<T>(inv_std);
    for (int ni = 0; ni < n; ++ni) {
      const T* p = x.data() + (static_cast<std::int64_t>(ni) * c + ci) * plane;
      T* q = y.data() + (static_cast<std::int64_t>(ni) * c + ci) * plane;
#pragma omp simd
      for (std::int64_t i = 0; i < plane; ++i)
        q[i] = g * ((p[i] - mu) * is) + bt;
    }
  }
}

template <typename T>
void batchnorm_forward_infer(const Tensor<T>& x, const Tensor<T>& gamma,
                             const Tensor<T>& beta,
                             const Tensor<T>& running_mean,
                             const Tensor<T>& running_var, Tensor<T>& y,
                             double eps) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  y = Tensor<T>({n, c, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const T g = gamma[ci], bt = beta[ci];
    const T mu = running_mean[ci];
    const T is = static_cast<T>(
        1.0 / std::sqrt(static_cast<double>(running_var[ci]) + eps));
    for (int ni = 0; ni < n; ++ni) {
      const T* p = x.data() + (static_cast<std::int64_t>(ni) * c + ci) * plane;
      T* q = y.data() + (static_cast<std::int64_t>(ni) * c + ci) * plane;
#pragma omp simd
      for (std::int64_t i = 0; i < plane; ++i)
        q[i] = g * ((p[i] - mu) * is) + bt;
    }
  }
}

template <typename T>
void batchnorm_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                        const Tensor<T>& save_mean,
                        const Tensor<T>& save_inv_std, const Tensor<T>& dy,
                        Tensor<T>& dx, Tensor<T>& dgamma, Tensor<T>& dbeta) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  dx = Tensor<T>({n, c, h, w});
  dgamma = Tensor<T>({c});
  dbeta = Tensor<T>({c});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const double m = static_cast<double>(static_cast<std::int64_t>(n) * plane);

#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < c; ++ci) {
    const double mean = save_mean[ci];
    const double inv_std = save_inv_std[ci];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const std::int64_t off =
          (static_cast<std::int64_t>(ni) * c + ci) * plane;
      const T* px = x.data() + off;
      const T* pd = dy.data() + off;
      for (std::int64_t i = 0; i < plane; ++i) {
        const double xh = (static_cast<double>(px[i]) - mean) * inv_std;
        sum_dy += static_cast<double>(pd[i]);
        sum_dy_xhat += static_cast<double>(pd[i]) * xh;
      }
    }
    dbeta[ci] = static_cast<T>(sum_dy);
    dgamma[ci] = static_cast<T>(sum_dy_xhat);

    const double k = static_cast<double>(gamma[ci]) * inv_std;
    const double mean_dy = sum_dy / m;
    const double mean_dy_xhat = sum_dy_xhat / m;
    for (int ni = 0; ni < n; ++ni) {
      const std::int64_t off =
          (static_cast<std::int64_t>(ni) * c + ci) * plane;
      const T* px = x.data() + off;
      const T* pd = dy.data() + off;
      T* pq = dx.data() + off;
#pragma omp simd
      for (std::int64_t i = 0; i < plane; ++i) {
        const double xh = (static_cast<double>(px[i]) - mean) * inv_std;
        pq[i] = static_cast<T>(
            k * (static_cast<double>(pd[i]) - mean_dy - xh * mean_dy_xhat));
      }
    }
  }
}

template <typename T>
void relu_forward_inplace(Tensor<T>& x) {
  T* p = x.data();
  const std::int64_t nel = x.size();
#pragma omp parallel for simd schedule(static) if (nel > 16384)
  for (std::int64_t i = 0; i < nel; ++i) p[i] = p[i] > T(0) ? p[i] : T(0);
}

template <typename T>
void relu_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx) {
  dx = Tensor<T>::zeros_like(dy);
  const T* py = y.data();
  const T* pd = dy.data();
  T* pq = dx.data();
  const std::int64_t nel = y.size();
#pragma omp parallel for simd schedule(static) if (nel > 16384)
  for (std::int64_t i = 0; i < nel; ++i) pq[i] = py[i] > T(0) ? pd[i] : T(0);
}

template <typename T>
void softmax_channels(const Tensor<T>& scores, Tensor<T>& probs) {
  const int n = scores.dim(0), k = scores.dim(1), h = scores.dim(2),
            w = scores.dim(3);
  probs = Tensor<T>({n, k, h, w});
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t rows = static_cast<std::int64_t>(n) * h;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const int ni = static_cast<int>(r / h);
    const int yy = static_cast<int>(r % h);
    const T* in = scores.data() + static_cast<std::int64_t>(ni) * k * plane +
                  static_cast<std::int64_t>(yy) * w;
    T* out = probs.data() + static_cast<std::int64_t>(ni) * k * plane +
             static_cast<std::int64_t>(yy) * w;
    for (int xx = 0; xx < w; ++xx) {
      T mx = in[xx];
      for (int c = 1; c < k; ++c) mx = std::max(mx, in[c * plane + xx]);
      T z = T(0);
      for (int c = 0; c < k; ++c) {
        const T e = std::exp(in[c * plane + xx] - mx);
        out[c * plane + xx] = e;
        z += e;
      }
      const T inv = T(1) / z;
      for (int c = 0; c < k; ++c) out[c * plane + xx] *= inv;
    }
  }
}

template <typename T>
LossStats softmax_kl_loss_grad(const Tensor<T>& scores,
                               const Tensor<std::int8_t>& target_idx,
                               const Tensor<double>& table,
                               const Tensor<T>* weights, Tensor<T>* dscores) {
  const int n = scores.dim(0), k = scores.dim(1), h = scores.dim(2),
            w = scores.dim(3);
  if (target_idx.ndim() != 3 || target_idx.dim(0) != n ||
      target_idx.dim(1) != h || target_idx.dim(2) != w)
    throw ShapeError("softmax_kl: target index shape mismatch");
  if (table.ndim() != 2 || table.dim(1) != k)
    throw ShapeError("softmax_kl: label table shape mismatch");
  const int n_levels = table.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  // Per-level negative entropy sum_c y_c ln y_c (0 ln 0 = 0).
  std::vector<double> neg_entropy(static_cast<std::size_t>(n_levels), 0.0);
  for (int l = 0; l < n_levels; ++l) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) {
      const double yc = table.at(l, c);
      if (yc > 0.0) s += yc * std::log(yc);
    }
    neg_entropy[static_cast<std::size_t>(l)] = s;
  }

  std::int64_t n_valid = 0;
  const std::int8_t* ti = target_idx.data();
  for (std::int64_t i = 0; i < target_idx.size(); ++i)
    if (ti[i] >= 0) ++n_valid;
  if (n_valid == 0) throw Error("softmax_kl: all pixels are void");
  const double inv_valid = 1.0 / static_cast<double>(n_valid);

  if (dscores) *dscores = Tensor<T>({n, k, h, w});
  Tensor<double> loss_buf({n, h, w});

  const std::int64_t rows = static_cast<std::int64_t>(n) * h;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const int ni = static_cast<int>(r / h);
    const int yy = static_cast<int>(r % h);
    const std::int64_t score_off =
        static_cast<std::int64_t>(ni) * k * plane +
        static_cast<std::int64_t>(yy) * w;
    const T* in = scores.data() + score_off;
    T* grad = dscores ? dscores->data() + score_off : nullptr;
    const std::int8_t* tg = target_idx.data() +
                            static_cast<std::int64_t>(ni) * plane +
                            static_cast<std::int64_t>(yy) * w;
    const T* wt = weights ? weights->data() +
                                static_cast<std::int64_t>(ni) * plane +
                                static_cast<std::int64_t>(yy) * w
                          : nullptr;
    double* lb = loss_buf.data() + static_cast<std::int64_t>(ni) * plane +
                 static_cast<std::int64_t>(yy) * w;

    for (int xx = 0; xx < w; ++xx) {
      const int t = tg[xx];
      if (t < 0) {
        lb[xx] = 0.0;
        if (grad)
          for (int c = 0; c < k; ++c) grad[c * plane + xx] = T(0);
        continue;
      }
      double mx = static_cast<double>(in[xx]);
      for (int c = 1; c < k; ++c)
        mx = std::max(mx, static_cast<double>(in[c * plane + xx]));
      double z = 0.0;
      double dot = 0.0;  // sum_c y_c * s_c
      for (int c = 0; c < k; ++c) {
        const double s = static_cast<double>(in[c * plane + xx]);
        z += std::exp(s - mx);
        dot += table.at(t, c) * s;
      }
      const double log_z = std::log(z) + mx;
      const double wp = wt ? static_cast<double>(wt[xx]) : 1.0;
      lb[xx] = wp * (neg_entropy[static_cast<std::size_t>(t)] - dot + log_z);
      if (grad) {
        const double scale = wp * inv_valid;
        for (int c = 0; c < k; ++c) {
          const double p =
              std::exp(static_cast<double>(in[c * plane + xx]) - log_z);
          grad[c * plane + xx] = static_cast<T>(scale * (p - table.at(t, c)));
        }
      }
    }
  }

  // fixed-order serial sum keeps the loss bit-stable
  double total = 0.0;
  const double* lb = loss_buf.data();
  for (std::int64_t i = 0; i < loss_buf.size(); ++i) total += lb[i];

  LossStats st;
  st.loss = total * inv_valid;
  st.n_valid = n_valid;
  return st;
}

template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m,
                 Tensor<T>& v, double lr, double beta1, double beta2,
                 double eps, std::int64_t t) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  T* p = param.data();
  const T* g = grad.data();
  T* pm = m.data();
  T* pv = v.data();
  const std::int64_t nel = param.size();
#pragma omp parallel for simd schedule(static) if (nel > 65536)
  for (std::int64_t i = 0; i < nel; ++i) {
    const double gi = static_cast<double>(g[i]);
    const double mi = beta1 * static_cast<double>(pm[i]) + (1.0 - beta1) * gi;
    const double vi =
        beta2 * static_cast<double>(pv[i]) + (1.0 - beta2) * gi * gi;
    pm[i] = static_cast<T>(mi);
    pv[i] = static_cast<T>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    p[i] = static_cast<T>(static_cast<double>(p[i]) -
                          lr * m_hat / (std::sqrt(v_hat) + eps));
  }
}

std::vector<std::uint8_t> boundary_map(const std::uint8_t* labels, int height,
                                       int width) {
  std::vector<std::uint8_t> out(
      static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0);
#pragma omp parallel for schedule(static) if (height * width > 16384)
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* row = labels + static_cast<std::int64_t>(y) * width;
    std::uint8_t* orow = out.data() + static_cast<std::int64_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      const std::uint8_t v = row[x];
      bool edge = false;
      if (x > 0 && row[x - 1] != v) edge = true;
      if (!edge && x + 1 < width && row[x + 1] != v) edge = true;
      if (!edge && y > 0 && labels[static_cast<std::int64_t>(y - 1) * width + x] != v)
        edge = true;
      if (!edge && y + 1 < height &&
          labels[static_cast<std::int64_t>(y + 1) * width + x] != v)
        edge = true;
      orow[x] = edge ? 1 : 0;
    }
  }
  return out;
}

Tensor<double> chamfer_dt_5x5(const std::vector<std::uint8_t>& boundary,
                              int height, int width,
                              double no_boundary_value) {
  Tensor<double> dist({height, width});
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr double kA = 1.0;   // axial
  constexpr double kB = 1.4;   // diagonal
  constexpr double kC = 2.2;   // knight

  bool any = false;
  for (std::int64_t i = 0; i < dist.size(); ++i) {
    const bool b = boundary[static_cast<std::size_t>(i)] != 0;
    any |= b;
    dist[i] = b ? 0.0 : kInf;
  }
  if (!any) {
    dist.fill(no_boundary_value);
    return dist;
  }

  auto relax = [&](double& d, int y, int x, double w) {
    if (y < 0 || y >= height || x < 0 || x >= width) return;
    const double cand = dist.at(y, x) + w;
    if (cand < d) d = cand;
  };

  // forward pass (top-left to bottom-right)
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double d = dist.at(y, x);
      relax(d, y, x - 1, kA);
      relax(d, y - 1, x, kA);
      relax(d, y - 1, x - 1, kB);
      relax(d, y - 1, x + 1, kB);
      relax(d, y - 2, x - 1, kC);
      relax(d, y - 2, x + 1, kC);
      relax(d, y - 1, x - 2, kC);
      relax(d, y - 1, x + 2, kC);
      dist.at(y, x) = d;
    }
  }
  // backward pass (bottom-right to top-left)
  for (int y = height - 1; y >= 0; --y) {
    for (int x = width - 1; x >= 0; --x) {
      double d = dist.at(y, x);
      relax(d, y, x + 1, kA);
      relax(d, y + 1, x, kA);
      relax(d, y + 1, x + 1, kB);
      relax(d, y + 1, x - 1, kB);
      relax(d, y + 2, x + 1, kC);
      relax(d, y + 2, x - 1, kC);
      relax(d, y + 1, x + 2, kC);
      relax(d, y + 1, x - 2, kC);
      dist.at(y, x) = d;
    }
  }
  return dist;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& src, int out_h, int out_w) {
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  Tensor<T> dst({c, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  const std::int64_t splane = static_cast<std::int64_t>(h) * w;
  const std::int64_t dplane = static_cast<std::int64_t>(out_h) * out_w;
#pragma omp parallel for collapse(2) schedule(static) if (c * dplane > 16384)
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < out_h; ++y) {
      const double fy =
          std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      const T* r0 = src.data() + ci * splane + static_cast<std::int64_t>(y0) * w;
      const T* r1 = src.data() + ci * splane + static_cast<std::int64_t>(y1) * w;
      T* orow = dst.data() + ci * dplane + static_cast<std::int64_t>(y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        const double fx =
            std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double top = (1.0 - wx) * r0[x0] + wx * r0[x1];
        const double bot = (1.0 - wx) * r1[x0] + wx * r1[x1];
        orow[x] = static_cast<T>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return dst;
}

namespace {

// Shared source-coordinate computation for warps.
inline void map_point(const WarpField& f, int x, int y, double& sx,
                      double& sy) {
  double u = x, v = y;
  if (f.displacement) {
    u += f.displacement->at(0, y, x);
    v += f.displacement->at(1, y, x);
  }
  const double* m = f.homography;
  const double d = m[6] * u + m[7] * v + m[8];
  sx = (m[0] * u + m[1] * v + m[2]) / d;
  sy = (m[3] * u + m[4] * v + m[5]) / d;
}

}  // namespace

template <typename T>
Tensor<T> warp_bilinear(const Tensor<T>& src, const WarpField& field,
                        int out_h, int out_w) {
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  Tensor<T> dst({c, out_h, out_w});
  const std::int64_t splane = static_cast<std::int64_t>(h) * w;
  const std::int64_t dplane = static_cast<std::int64_t>(out_h) * out_w;

  // source coordinates once, then all channels sample them
  std::vector<float> sxs(static_cast<std::size_t>(dplane));
  std::vector<float> sys(static_cast<std::size_t>(dplane));
#pragma omp parallel for schedule(static) if (dplane > 16384)
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double sx, sy;
      map_point(field, x, y, sx, sy);
      sxs[static_cast<std::size_t>(y) * out_w + x] =
          static_cast<float>(reflect101(sx, w));
      sys[static_cast<std::size_t>(y) * out_w + x] =
          static_cast<float>(reflect101(sy, h));
    }
  }

#pragma omp parallel for collapse(2) schedule(static) if (c * dplane > 16384)
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < out_h; ++y) {
      const T* plane = src.data() + ci * splane;
      T* orow = dst.data() + ci * dplane + static_cast<std::int64_t>(y) * out_w;
      for (int x = 0; x < out_w; ++x) {
        const double fx = sxs[static_cast<std::size_t>(y) * out_w + x];
        const double fy = sys[static_cast<std::size_t>(y) * out_w + x];
        const int x0 = std::min(static_cast<int>(fx), w - 1);
        const int y0 = std::min(static_cast<int>(fy), h - 1);
        const int x1 = std::min(x0 + 1, w - 1);
        const int y1 = std::min(y0 + 1, h - 1);
        const double wx = fx - x0, wy = fy - y0;
        const double top = (1.0 - wx) * plane[static_cast<std::int64_t>(y0) * w + x0] +
                           wx * plane[static_cast<std::int64_t>(y0) * w + x1];
        const double bot = (1.0 - wx) * plane[static_cast<std::int64_t>(y1) * w + x0] +
                           wx * plane[static_cast<std::int64_t>(y1) * w + x1];
        orow[x] = static_cast<T>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return dst;
}

std::vector<std::uint8_t> warp_nearest_u8(const std::vector<std::uint8_t>& src,
                                          int src_h, int src_w,
                                          const WarpField& field, int out_h,
                                          int out_w) {
  std::vector<std::uint8_t> dst(static_cast<std::size_t>(out_h) *
                                static_cast<std::size_t>(out_w));
#pragma omp parallel for schedule(static) if (out_h * out_w > 16384)
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double sx, sy;
      map_point(field, x, y, sx, sy);
      const int ix = static_cast<int>(std::lround(reflect101(sx, src_w)));
      const int iy = static_cast<int>(std::lround(reflect101(sy, src_h)));
      dst[static_cast<std::size_t>(y) * out_w + x] =
          src[static_cast<std::size_t>(std::clamp(iy, 0, src_h - 1)) * src_w +
              std::clamp(ix, 0, src_w - 1)];
    }
  }
  return dst;
}

std::vector<std::uint8_t> resize_nearest_u8(
    const std::vector<std::uint8_t>& src, int src_h, int src_w, int out_h,
    int out_w) {
  std::vector<std::uint8_t> dst(static_cast<std::size_t>(out_h) *
                                static_cast<std::size_t>(out_w));
  const double sy = static_cast<double>(src_h) / out_h;
  const double sx = static_cast<double>(src_w) / out_w;
#pragma omp parallel for schedule(static) if (out_h * out_w > 65536)
  for (int y = 0; y < out_h; ++y) {
    const int iy = std::min(static_cast<int>((y + 0.5) * sy), src_h - 1);
    for (int x = 0; x < out_w; ++x) {
      const int ix = std::min(static_cast<int>((x + 0.5) * sx), src_w - 1);
      dst[static_cast<std::size_t>(y) * out_w + x] =
          src[static_cast<std::size_t>(iy) * src_w + ix];
    }
  }
  return dst;
}

// explicit instantiations
#define DRIV_INSTANTIATE(T)                                                   \
  template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                  const Tensor<T>&, Tensor<T>&);              \
  template void conv2d_backward_data<T>(const Tensor<T>&, const Tensor<T>&,   \
                                        Tensor<T>&);                          \
  template void conv2d_backward_weights<T>(const Tensor<T>&, const Tensor<T>&,\
                                           Tensor<T>&, Tensor<T>&);           \
  template void maxpool2x2_forward<T>(const Tensor<T>&, Tensor<T>&,           \
                                      Tensor<std::int32_t>&);                 \
  template void maxpool2x2_backward<T>(const Tensor<T>&,                      \
                                       const Tensor<std::int32_t>&,           \
                                       Tensor<T>&);                           \
  template void maxunpool2x2_forward<T>(const Tensor<T>&,                     \
                                        const Tensor<std::int32_t>&,          \
                                        Tensor<T>&);                          \
  template void maxunpool2x2_backward<T>(const Tensor<T>&,                    \
                                         const Tensor<std::int32_t>&,         \
                                         Tensor<T>&);                         \
  template void batchnorm_forward_train<T>(const Tensor<T>&, const Tensor<T>&,\
                                           const Tensor<T>&, Tensor<T>&,      \
                                           Tensor<T>&, Tensor<T>&, double);   \
  template void batchnorm_forward_infer<T>(                                   \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
      const Tensor<T>&, Tensor<T>&, double);                                  \
  template void batchnorm_backward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                      const Tensor<T>&, const Tensor<T>&,     \
                                      const Tensor<T>&, Tensor<T>&,           \
                                      Tensor<T>&, Tensor<T>&);                \
  template void relu_forward_inplace<T>(Tensor<T>&);                          \
  template void relu_backward<T>(const Tensor<T>&, const Tensor<T>&,          \
                                 Tensor<T>&);                                 \
  template void softmax_channels<T>(const Tensor<T>&, Tensor<T>&);            \
  template LossStats softmax_kl_loss_grad<T>(                                 \
      const Tensor<T>&, const Tensor<std::int8_t>&, const Tensor<double>&,    \
      const Tensor<T>*, Tensor<T>*);                                          \
  template void adam_update<T>(Tensor<T>&, const Tensor<T>&, Tensor<T>&,      \
                               Tensor<T>&, double, double, double, double,    \
                               std::int64_t);                                 \
  template Tensor<T> resize_bilinear<T>(const Tensor<T>&, int, int);          \
  template Tensor<T> warp_bilinear<T>(const Tensor<T>&, const WarpField&,     \
                                      int, int);

DRIV_INSTANTIATE(float)
DRIV_INSTANTIATE(double)
#undef DRIV_INSTANTIATE

}  // namespace driv::kern
