#pragma once

// Compute kernels behind the layers. Each kernel has an OpenMP-parallel
// implementation and a plain serial version in `reference::` that the tests
// and the benchmark compare against. Every output element is owned by one
// thread and accumulated in a fixed order, so results do not depend on the
// thread count or on the batch size.

namespace finegrain::kernels {

// Stride-1 "same" convolution over [N, Cin, T, H, W]: zero padding in space,
// edge replication in time. Kernel extents must be odd. Weights are [Cout, Cin, KT, KH, KW].
struct Conv3dShape {
  int batch = 1;
  int in_channels = 1;
  int out_channels = 1;
  int frames = 1;
  int height = 1;
  int width = 1;
  int kt = 3;
  int kh = 3;
  int kw = 3;

  long input_size() const { return long(batch) * in_channels * frames * height * width; }
  long output_size() const { return long(batch) * out_channels * frames * height * width; }
  long weight_size() const { return long(out_channels) * in_channels * kt * kh * kw; }
  void validate() const;
};

// out = conv(in, weight); overwrites out.
void conv3d_forward(const Conv3dShape& s, const double* in, const double* weight, double* out);
// grad_in = conv^T(grad_out, weight); overwrites grad_in.
void conv3d_backward_input(const Conv3dShape& s, const double* grad_out, const double* weight, double* grad_in);
// grad_weight += correlation(in, grad_out).
void conv3d_backward_weight(const Conv3dShape& s, const double* in, const double* grad_out, double* grad_weight);

// Non-overlapping average pooling over [N, C, T, H, W] with window (pt, ph, pw).
struct PoolShape {
  int batch = 1;
  int channels = 1;
  int frames = 1;
  int height = 1;
  int width = 1;
  int pt = 1;
  int ph = 2;
  int pw = 2;

  int out_frames() const { return frames / pt; }
  int out_height() const { return height / ph; }
  int out_width() const { return width / pw; }
  void validate() const;
};

void avg_pool3d_forward(const PoolShape& s, const double* in, double* out);
void avg_pool3d_backward(const PoolShape& s, const double* grad_out, double* grad_in);

// Row-major matrix products. `accumulate` adds into C instead of overwriting.
// C[M,N] = A[M,K] * B[K,N]
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
// C[M,N] = A[M,K] * B[N,K]^T
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
// C[M,N] = A[K,M]^T * B[K,N]
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);

namespace reference {

void conv3d_forward(const Conv3dShape& s, const double* in, const double* weight, double* out);
void conv3d_backward_input(const Conv3dShape& s, const double* grad_out, const double* weight, double* grad_in);
void conv3d_backward_weight(const Conv3dShape& s, const double* in, const double* grad_out, double* grad_weight);
void avg_pool3d_forward(const PoolShape& s, const double* in, double* out);
void avg_pool3d_backward(const PoolShape& s, const double* grad_out, double* grad_in);
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate);

}  // namespace reference

// Thread count used by the parallel kernels (0 = OpenMP default).
void set_num_threads(int threads);
int num_threads();

}  // namespace finegrain::kernels
