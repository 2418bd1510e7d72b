#include "finegrain/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace finegrain::kernels {

namespace {

// Output index range [lo, hi) for which `i + shift` stays inside [0, extent).
inline void valid_range(int extent, int shift, int& lo, int& hi) {
  lo = std::max(0, -shift);
  hi = std::min(extent, extent - shift);
}

// Edge replication along time.
inline int clamp_time(int t, int frames) { return t < 0 ? 0 : (t >= frames ? frames - 1 : t); }

}  // namespace

void Conv3dShape::validate() const {
  if (batch <= 0 || in_channels <= 0 || out_channels <= 0 || frames <= 0 || height <= 0 || width <= 0) {
    throw std::invalid_argument("conv3d: non-positive dimension");
  }
  if (kt % 2 == 0 || kh % 2 == 0 || kw % 2 == 0) {
    throw std::invalid_argument("conv3d: kernel extents must be odd");
  }
}

void PoolShape::validate() const {
  if (pt <= 0 || ph <= 0 || pw <= 0) throw std::invalid_argument("pool: non-positive window");
  if (frames % pt != 0 || height % ph != 0 || width % pw != 0) {
    throw std::invalid_argument("pool: input extent not divisible by window");
  }
}

void set_num_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int num_threads() { return omp_get_max_threads(); }

void conv3d_forward(const Conv3dShape& s, const double* in, const double* weight, double* out) {
  s.validate();
  const int T = s.frames, H = s.height, W = s.width;
  const long plane = long(T) * H * W;
  const int pt = s.kt / 2, ph = s.kh / 2, pw = s.kw / 2;
  const int ksize = s.kt * s.kh * s.kw;

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.batch; ++n) {
    for (int oc = 0; oc < s.out_channels; ++oc) {
      double* o = out + (long(n) * s.out_channels + oc) * plane;
      std::fill(o, o + plane, 0.0);
      for (int ic = 0; ic < s.in_channels; ++ic) {
        const double* x = in + (long(n) * s.in_channels + ic) * plane;
        const double* wk = weight + (long(oc) * s.in_channels + ic) * ksize;
        for (int dt = 0; dt < s.kt; ++dt) {
          for (int dy = 0; dy < s.kh; ++dy) {
            int y0, y1;
            valid_range(H, dy - ph, y0, y1);
            for (int dx = 0; dx < s.kw; ++dx) {
              int x0, x1;
              valid_range(W, dx - pw, x0, x1);
              const double w = wk[(dt * s.kh + dy) * s.kw + dx];
              const long shift = long(dy - ph) * W + (dx - pw);
              for (int t = 0; t < T; ++t) {
                const int ti = clamp_time(t + dt - pt, T);
                for (int y = y0; y < y1; ++y) {
                  double* orow = o + (long(t) * H + y) * W;
                  const double* irow = x + (long(ti) * H + y) * W + shift;
                  for (int xx = x0; xx < x1; ++xx) orow[xx] += w * irow[xx];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward_input(const Conv3dShape& s, const double* grad_out, const double* weight, double* grad_in) {
  s.validate();
  const int T = s.frames, H = s.height, W = s.width;
  const long plane = long(T) * H * W;
  const int pt = s.kt / 2, ph = s.kh / 2, pw = s.kw / 2;
  const int ksize = s.kt * s.kh * s.kw;

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.batch; ++n) {
    for (int ic = 0; ic < s.in_channels; ++ic) {
      double* gi = grad_in + (long(n) * s.in_channels + ic) * plane;
      std::fill(gi, gi + plane, 0.0);
      for (int oc = 0; oc < s.out_channels; ++oc) {
        const double* go = grad_out + (long(n) * s.out_channels + oc) * plane;
        const double* wk = weight + (long(oc) * s.in_channels + ic) * ksize;
        for (int dt = 0; dt < s.kt; ++dt) {
          for (int dy = 0; dy < s.kh; ++dy) {
            int y0, y1;
            valid_range(H, dy - ph, y0, y1);
            for (int dx = 0; dx < s.kw; ++dx) {
              int x0, x1;
              valid_range(W, dx - pw, x0, x1);
              const double w = wk[(dt * s.kh + dy) * s.kw + dx];
              const long shift = long(dy - ph) * W + (dx - pw);
              for (int t = 0; t < T; ++t) {
                const int ti = clamp_time(t + dt - pt, T);
                for (int y = y0; y < y1; ++y) {
                  const double* grow = go + (long(t) * H + y) * W;
                  double* irow = gi + (long(ti) * H + y) * W + shift;
                  for (int xx = x0; xx < x1; ++xx) irow[xx] += w * grow[xx];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv3d_backward_weight(const Conv3dShape& s, const double* in, const double* grad_out, double* grad_weight) {
  s.validate();
  const int T = s.frames, H = s.height, W = s.width;
  const long plane = long(T) * H * W;
  const int pt = s.kt / 2, ph = s.kh / 2, pw = s.kw / 2;
  const int ksize = s.kt * s.kh * s.kw;

#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < s.out_channels; ++oc) {
    for (int ic = 0; ic < s.in_channels; ++ic) {
      double* gw = grad_weight + (long(oc) * s.in_channels + ic) * ksize;
      for (int dt = 0; dt < s.kt; ++dt) {
        for (int dy = 0; dy < s.kh; ++dy) {
          int y0, y1;
          valid_range(H, dy - ph, y0, y1);
          for (int dx = 0; dx < s.kw; ++dx) {
            int x0, x1;
            valid_range(W, dx - pw, x0, x1);
            const long shift = long(dy - ph) * W + (dx - pw);
            double acc = 0.0;
            for (int n = 0; n < s.batch; ++n) {
              const double* x = in + (long(n) * s.in_channels + ic) * plane;
              const double* go = grad_out + (long(n) * s.out_channels + oc) * plane;
              for (int t = 0; t < T; ++t) {
                const int ti = clamp_time(t + dt - pt, T);
                for (int y = y0; y < y1; ++y) {
                  const double* grow = go + (long(t) * H + y) * W;
                  const double* irow = x + (long(ti) * H + y) * W + shift;
                  double row = 0.0;
                  for (int xx = x0; xx < x1; ++xx) row += grow[xx] * irow[xx];
                  acc += row;
                }
              }
            }
            gw[(dt * s.kh + dy) * s.kw + dx] += acc;
          }
        }
      }
    }
  }
}

void avg_pool3d_forward(const PoolShape& s, const double* in, double* out) {
  s.validate();
  const int To = s.out_frames(), Ho = s.out_height(), Wo = s.out_width();
  const double inv = 1.0 / (double(s.pt) * s.ph * s.pw);
  const long in_plane = long(s.frames) * s.height * s.width;
  const long out_plane = long(To) * Ho * Wo;

#pragma omp parallel for schedule(static)
  for (long nc = 0; nc < long(s.batch) * s.channels; ++nc) {
    const double* x = in + nc * in_plane;
    double* o = out + nc * out_plane;
    for (int t = 0; t < To; ++t) {
      for (int y = 0; y < Ho; ++y) {
        for (int xx = 0; xx < Wo; ++xx) {
          double acc = 0.0;
          for (int a = 0; a < s.pt; ++a) {
            for (int b = 0; b < s.ph; ++b) {
              const double* row = x + (long(t * s.pt + a) * s.height + (y * s.ph + b)) * s.width + xx * s.pw;
              for (int c = 0; c < s.pw; ++c) acc += row[c];
            }
          }
          o[(long(t) * Ho + y) * Wo + xx] = acc * inv;
        }
      }
    }
  }
}

void avg_pool3d_backward(const PoolShape& s, const double* grad_out, double* grad_in) {
  s.validate();
  const int Ho = s.out_height(), Wo = s.out_width();
  const double inv = 1.0 / (double(s.pt) * s.ph * s.pw);
  const long in_plane = long(s.frames) * s.height * s.width;
  const long out_plane = long(s.out_frames()) * Ho * Wo;

#pragma omp parallel for schedule(static)
  for (long nc = 0; nc < long(s.batch) * s.channels; ++nc) {
    const double* go = grad_out + nc * out_plane;
    double* gi = grad_in + nc * in_plane;
    for (int t = 0; t < s.frames; ++t) {
      for (int y = 0; y < s.height; ++y) {
        const double* grow = go + (long(t / s.pt) * Ho + y / s.ph) * Wo;
        double* irow = gi + (long(t) * s.height + y) * s.width;
        for (int xx = 0; xx < s.width; ++xx) irow[xx] = grow[xx / s.pw] * inv;
      }
    }
  }
}

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
#pragma omp parallel for schedule(static) if (long(m) * n * k > 32768)
  for (int i = 0; i < m; ++i) {
    double* crow = c + long(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + long(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + long(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
#pragma omp parallel for schedule(static) if (long(m) * n * k > 32768)
  for (int i = 0; i < m; ++i) {
    double* crow = c + long(i) * n;
    const double* arow = a + long(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + long(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
#pragma omp parallel for schedule(static) if (long(m) * n * k > 32768)
  for (int i = 0; i < m; ++i) {
    double* crow = c + long(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (int p = 0; p < k; ++p) {
      const double av = a[long(p) * m + i];
      const double* brow = b + long(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

namespace reference {

namespace {
inline long at5(int c1, int c2, int c3, int c4, int a, int b, int c, int d, int e) {
  return (((long(a) * c1 + b) * c2 + c) * c3 + d) * c4 + e;
}
}  // namespace

void conv3d_forward(const Conv3dShape& s, const double* in, const double* weight, double* out) {
  s.validate();
  const int pt = s.kt / 2, ph = s.kh / 2, pw = s.kw / 2;
  for (int n = 0; n < s.batch; ++n)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int t = 0; t < s.frames; ++t)
        for (int y = 0; y < s.height; ++y)
          for (int x = 0; x < s.width; ++x) {
            double acc = 0.0;
            for (int ic = 0; ic < s.in_channels; ++ic)
              for (int dt = 0; dt < s.kt; ++dt)
                for (int dy = 0; dy < s.kh; ++dy)
                  for (int dx = 0; dx < s.kw; ++dx) {
                    const int ti = std::clamp(t + dt - pt, 0, s.frames - 1);
                    const int yi = y + dy - ph, xi = x + dx - pw;
                    if (yi < 0 || yi >= s.height || xi < 0 || xi >= s.width) continue;
                    acc += weight[at5(s.in_channels, s.kt, s.kh, s.kw, oc, ic, dt, dy, dx)] *
                           in[at5(s.in_channels, s.frames, s.height, s.width, n, ic, ti, yi, xi)];
                  }
            out[at5(s.out_channels, s.frames, s.height, s.width, n, oc, t, y, x)] = acc;
          }
}

void conv3d_backward_input(const Conv3dShape& s, const double* grad_out, const double* weight, double* grad_in) {
  s.validate();
  const int pt = s.kt / 2, ph = s.kh / 2, pw = s.kw / 2;
  std::fill(grad_in, grad_in + s.input_size(), 0.0);
  for (int n = 0; n < s.batch; ++n)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int t = 0; t < s.frames; ++t)
        for (int y = 0; y < s.height; ++y)
          for (int x = 0; x < s.width; ++x) {
            const double g = grad_out[at5(s.out_channels, s.frames, s.height, s.width, n, oc, t, y, x)];
            for (int ic = 0; ic < s.in_channels; ++ic)
              for (int dt = 0; dt < s.kt; ++dt)
                for (int dy = 0; dy < s.kh; ++dy)
                  for (int dx = 0; dx < s.kw; ++dx) {
                    const int ti = std::clamp(t + dt - pt, 0, s.frames - 1);
                    const int yi = y + dy - ph, xi = x + dx - pw;
                    if (yi < 0 || yi >= s.height || xi < 0 || xi >= s.width) continue;
                    grad_in[at5(s.in_channels, s.frames, s.height, s.width, n, ic, ti, yi, xi)] +=
                        g * weight[at5(s.in_channels, s.kt, s.kh, s.kw, oc, ic, dt, dy, dx)];
                  }
          }
}

void conv3d_backward_weight(const Conv3dShape& s, const double* in, const double* grad_out, double* grad_weight) {
  s.validate();
  const int pt = s.kt / 2, ph = s.kh / 2, pw = s.kw / 2;
  for (int n = 0; n < s.batch; ++n)
    for (int oc = 0; oc < s.out_channels; ++oc)
      for (int t = 0; t < s.frames; ++t)
        for (int y = 0; y < s.height; ++y)
          for (int x = 0; x < s.width; ++x) {
            const double g = grad_out[at5(s.out_channels, s.frames, s.height, s.width, n, oc, t, y, x)];
            for (int ic = 0; ic < s.in_channels; ++ic)
              for (int dt = 0; dt < s.kt; ++dt)
                for (int dy = 0; dy < s.kh; ++dy)
                  for (int dx = 0; dx < s.kw; ++dx) {
                    const int ti = std::clamp(t + dt - pt, 0, s.frames - 1);
                    const int yi = y + dy - ph, xi = x + dx - pw;
                    if (yi < 0 || yi >= s.height || xi < 0 || xi >= s.width) continue;
                    grad_weight[at5(s.in_channels, s.kt, s.kh, s.kw, oc, ic, dt, dy, dx)] +=
                        g * in[at5(s.in_channels, s.frames, s.height, s.width, n, ic, ti, yi, xi)];
                  }
          }
}

void avg_pool3d_forward(const PoolShape& s, const double* in, double* out) {
  s.validate();
  const int To = s.out_frames(), Ho = s.out_height(), Wo = s.out_width();
  for (int n = 0; n < s.batch; ++n)
    for (int c = 0; c < s.channels; ++c)
      for (int t = 0; t < To; ++t)
        for (int y = 0; y < Ho; ++y)
          for (int x = 0; x < Wo; ++x) {
            double acc = 0.0;
            for (int a = 0; a < s.pt; ++a)
              for (int b = 0; b < s.ph; ++b)
                for (int d = 0; d < s.pw; ++d)
                  acc += in[at5(s.channels, s.frames, s.height, s.width, n, c, t * s.pt + a, y * s.ph + b, x * s.pw + d)];
            out[at5(s.channels, To, Ho, Wo, n, c, t, y, x)] = acc / (double(s.pt) * s.ph * s.pw);
          }
}

void avg_pool3d_backward(const PoolShape& s, const double* grad_out, double* grad_in) {
  s.validate();
  const int To = s.out_frames(), Ho = s.out_height(), Wo = s.out_width();
  for (int n = 0; n < s.batch; ++n)
    for (int c = 0; c < s.channels; ++c)
      for (int t = 0; t < s.frames; ++t)
        for (int y = 0; y < s.height; ++y)
          for (int x = 0; x < s.width; ++x)
            grad_in[at5(s.channels, s.frames, s.height, s.width, n, c, t, y, x)] =
                grad_out[at5(s.channels, To, Ho, Wo, n, c, t / s.pt, y / s.ph, x / s.pw)] /
                (double(s.pt) * s.ph * s.pw);
}

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[long(i) * k + p] * b[long(p) * n + j];
      c[long(i) * n + j] = accumulate ? c[long(i) * n + j] + acc : acc;
    }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[long(i) * k + p] * b[long(j) * k + p];
      c[long(i) * n + j] = accumulate ? c[long(i) * n + j] + acc : acc;
    }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += a[long(p) * m + i] * b[long(p) * n + j];
      c[long(i) * n + j] = accumulate ? c[long(i) * n + j] + acc : acc;
    }
}

}  // namespace reference

}  // namespace finegrain::kernels
