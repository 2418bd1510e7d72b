#include "finegrain/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace finegrain::nn {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void uniform_init(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
}

void zero_grads(const ParamList& params) {
  for (Param* p : params) p->grad.zero();
}

double global_grad_norm(const ParamList& params) {
  double sq = 0.0;
  for (const Param* p : params) {
    if (!p->trainable) continue;
    for (double g : p->grad.values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const ParamList& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (Param* p : params) {
      if (p->trainable) scale_inplace(p->grad, scale);
    }
  }
  return norm;
}

std::uint64_t hash_params(const ParamList& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Param* p : params) {
    h = hash_bytes(p->name.data(), p->name.size(), h);
    h = hash_tensor(p->value, h);
  }
  return h;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string& name, int in_features, int out_features, std::mt19937_64& rng)
    : weight(name + ".weight", {in_features, out_features}),
      bias(name + ".bias", {out_features}),
      in_(in_features),
      out_(out_features) {
  const double bound = 1.0 / std::sqrt(double(in_features));
  uniform_init(weight.value, bound, rng);
  uniform_init(bias.value, bound, rng);
}

Tensor Linear::infer(const Tensor& x) const {
  if (x.rank() < 1 || x.shape().back() != in_) {
    throw std::invalid_argument("Linear: input width " + x.shape_string() + " != " + std::to_string(in_));
  }
  const int rows = static_cast<int>(x.size() / in_);
  std::vector<int> shape = x.shape();
  shape.back() = out_;
  Tensor y(shape);
  for (int r = 0; r < rows; ++r) std::copy(bias.value.data(), bias.value.data() + out_, y.data() + long(r) * out_);
  kernels::gemm_nn(rows, out_, in_, x.data(), weight.value.data(), y.data(), true);
  return y;
}

Tensor Linear::forward(const Tensor& x) {
  input_ = x;
  return infer(x);
}

Tensor Linear::backward(const Tensor& grad_out) {
  const int rows = static_cast<int>(input_.size() / in_);
  kernels::gemm_tn(in_, out_, rows, input_.data(), grad_out.data(), weight.grad.data(), true);
  for (int r = 0; r < rows; ++r) {
    const double* g = grad_out.data() + long(r) * out_;
    for (int j = 0; j < out_; ++j) bias.grad[j] += g[j];
  }
  Tensor gx(input_.shape());
  kernels::gemm_nt(rows, in_, out_, grad_out.data(), weight.value.data(), gx.data(), false);
  return gx;
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ------------------------------------------------------------- ConvBlock

ConvBlock::ConvBlock(const std::string& name, const Options& opt, std::mt19937_64& rng)
    : weight(name + ".conv.weight", {opt.out_channels, opt.in_channels, opt.kernel_t, 3, 3}),
      gamma(name + ".bn.gamma", {opt.out_channels}),
      beta(name + ".bn.beta", {opt.out_channels}),
      running_mean(name + ".bn.running_mean", {opt.out_channels}, false),
      running_var(name + ".bn.running_var", {opt.out_channels}, false),
      opt_(opt) {
  const double fan_in = double(opt.in_channels) * opt.kernel_t * 9;
  uniform_init(weight.value, std::sqrt(6.0 / fan_in), rng);
  gamma.value.fill(1.0);
  running_var.value.fill(1.0);
}

kernels::Conv3dShape ConvBlock::conv_shape(const Tensor& x) const {
  if (x.rank() != 5 || x.dim(1) != opt_.in_channels) {
    throw std::invalid_argument("ConvBlock: expected [N," + std::to_string(opt_.in_channels) + ",T,H,W], got " +
                                x.shape_string());
  }
  kernels::Conv3dShape s;
  s.batch = x.dim(0);
  s.in_channels = opt_.in_channels;
  s.out_channels = opt_.out_channels;
  s.frames = x.dim(2);
  s.height = x.dim(3);
  s.width = x.dim(4);
  s.kt = opt_.kernel_t;
  s.kh = 3;
  s.kw = 3;
  return s;
}

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  const auto s = conv_shape(x);
  mode_ = mode;
  input_ = x;
  const int C = opt_.out_channels;
  const long plane = long(s.frames) * s.height * s.width;
  const long count = plane * s.batch;

  xhat_ = Tensor({s.batch, C, s.frames, s.height, s.width});
  kernels::conv3d_forward(s, x.data(), weight.value.data(), xhat_.data());

  preact_ = Tensor(xhat_.shape());
  inv_std_.assign(C, 0.0);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (int n = 0; n < s.batch; ++n) {
        const double* z = xhat_.data() + (long(n) * C + c) * plane;
        for (long i = 0; i < plane; ++i) sum += z[i];
      }
      mean = sum / double(count);
      double sq = 0.0;
      for (int n = 0; n < s.batch; ++n) {
        const double* z = xhat_.data() + (long(n) * C + c) * plane;
        for (long i = 0; i < plane; ++i) sq += (z[i] - mean) * (z[i] - mean);
      }
      var = sq / double(count);
      const double unbiased = count > 1 ? sq / double(count - 1) : var;
      running_mean.value[c] = (1.0 - kMomentum) * running_mean.value[c] + kMomentum * mean;
      running_var.value[c] = (1.0 - kMomentum) * running_var.value[c] + kMomentum * unbiased;
    } else {
      mean = running_mean.value[c];
      var = running_var.value[c];
    }
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[c] = inv;
    const double g = gamma.value[c], b = beta.value[c];
    for (int n = 0; n < s.batch; ++n) {
      double* z = xhat_.data() + (long(n) * C + c) * plane;
      double* y = preact_.data() + (long(n) * C + c) * plane;
      for (long i = 0; i < plane; ++i) {
        z[i] = (z[i] - mean) * inv;
        y[i] = g * z[i] + b;
      }
    }
  }

  const Tensor relu = activation();
  kernels::PoolShape ps{s.batch, C, s.frames, s.height, s.width, opt_.pool_t, opt_.pool_s, opt_.pool_s};
  ps.validate();
  Tensor out({s.batch, C, ps.out_frames(), ps.out_height(), ps.out_width()});
  kernels::avg_pool3d_forward(ps, relu.data(), out.data());
  return out;
}

Tensor ConvBlock::backward(const Tensor& grad_out) {
  const auto s = conv_shape(input_);
  const int C = opt_.out_channels;
  const long plane = long(s.frames) * s.height * s.width;
  const long count = plane * s.batch;

  kernels::PoolShape ps{s.batch, C, s.frames, s.height, s.width, opt_.pool_t, opt_.pool_s, opt_.pool_s};
  Tensor dy(preact_.shape());
  kernels::avg_pool3d_backward(ps, grad_out.data(), dy.data());
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (preact_[i] <= 0.0) dy[i] = 0.0;
  }

  Tensor dz(dy.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const double* g = dy.data() + (long(n) * C + c) * plane;
      const double* z = xhat_.data() + (long(n) * C + c) * plane;
      for (long i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * z[i];
      }
    }
    gamma.grad[c] += sum_dy_xhat;
    beta.grad[c] += sum_dy;
    const double gm = gamma.value[c];
    const double inv = inv_std_[c];
    for (int n = 0; n < s.batch; ++n) {
      const double* g = dy.data() + (long(n) * C + c) * plane;
      const double* z = xhat_.data() + (long(n) * C + c) * plane;
      double* d = dz.data() + (long(n) * C + c) * plane;
      if (mode_ == Mode::Train) {
        // d/dz of the batch-normalized output, with dxhat = gamma * dy.
        const double m = double(count);
        for (long i = 0; i < plane; ++i) {
          d[i] = gm * inv / m * (m * g[i] - sum_dy - z[i] * sum_dy_xhat);
        }
      } else {
        for (long i = 0; i < plane; ++i) d[i] = gm * inv * g[i];
      }
    }
  }

  kernels::conv3d_backward_weight(s, input_.data(), dz.data(), weight.grad.data());
  Tensor dx(input_.shape());
  kernels::conv3d_backward_input(s, dz.data(), weight.value.data(), dx.data());
  return dx;
}

Tensor ConvBlock::activation() const {
  Tensor relu(preact_.shape());
  for (std::size_t i = 0; i < relu.size(); ++i) relu[i] = preact_[i] > 0.0 ? preact_[i] : 0.0;
  return relu;
}

Tensor ConvBlock::activation_grad(const Tensor& grad_out) const {
  const auto s = conv_shape(input_);
  kernels::PoolShape ps{s.batch, opt_.out_channels, s.frames, s.height, s.width, opt_.pool_t, opt_.pool_s, opt_.pool_s};
  Tensor g(preact_.shape());
  kernels::avg_pool3d_backward(ps, grad_out.data(), g.data());
  return g;
}

void ConvBlock::collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// ------------------------------------------------------------------ Lstm

Lstm::Lstm(const std::string& name, int input_size, int hidden_size, std::mt19937_64& rng)
    : w_input(name + ".w_input", {input_size, 4 * hidden_size}),
      w_hidden(name + ".w_hidden", {hidden_size, 4 * hidden_size}),
      bias(name + ".bias", {4 * hidden_size}),
      in_(input_size),
      hidden_(hidden_size) {
  const double bound = 1.0 / std::sqrt(double(hidden_size));
  uniform_init(w_input.value, bound, rng);
  uniform_init(w_hidden.value, bound, rng);
  uniform_init(bias.value, bound, rng);
  for (int j = hidden_size; j < 2 * hidden_size; ++j) bias.value[j] += 1.0;
}

Tensor Lstm::forward(const Tensor& x, bool reverse, const State* initial) {
  if (x.rank() != 3 || x.dim(2) != in_) {
    throw std::invalid_argument("Lstm: expected [N,T," + std::to_string(in_) + "], got " + x.shape_string());
  }
  const int N = x.dim(0), T = x.dim(1), H = hidden_, G = 4 * hidden_;
  reverse_ = reverse;
  batch_ = N;
  steps_ = T;
  input_ = x;
  if (initial) {
    if (initial->h.size() != std::size_t(N) * H || initial->c.size() != std::size_t(N) * H) {
      throw std::invalid_argument("Lstm: initial state shape mismatch");
    }
    init_ = *initial;
  } else {
    init_ = State{Tensor({N, H}), Tensor({N, H})};
  }

  Tensor xw({N * T, G});
  kernels::gemm_nn(N * T, G, in_, x.data(), w_input.value.data(), xw.data(), false);

  gates_ = Tensor({T, N, G});
  cells_ = Tensor({T, N, H});
  hiddens_ = Tensor({T, N, H});
  Tensor out({N, T, H});
  Tensor pre({N, G});

  for (int s = 0; s < T; ++s) {
    const int t = reverse ? T - 1 - s : s;
    const double* h_prev = s == 0 ? init_.h.data() : hiddens_.data() + long(s - 1) * N * H;
    const double* c_prev = s == 0 ? init_.c.data() : cells_.data() + long(s - 1) * N * H;
    kernels::gemm_nn(N, G, H, h_prev, w_hidden.value.data(), pre.data(), false);
    double* gate = gates_.data() + long(s) * N * G;
    double* cell = cells_.data() + long(s) * N * H;
    double* hid = hiddens_.data() + long(s) * N * H;
    for (int n = 0; n < N; ++n) {
      const double* xr = xw.data() + (long(n) * T + t) * G;
      double* pr = pre.data() + long(n) * G;
      double* gr = gate + long(n) * G;
      for (int j = 0; j < G; ++j) {
        const double v = pr[j] + xr[j] + bias.value[j];
        gr[j] = (j >= 2 * H && j < 3 * H) ? std::tanh(v) : sigmoid(v);
      }
      for (int j = 0; j < H; ++j) {
        const double c = gr[H + j] * c_prev[long(n) * H + j] + gr[j] * gr[2 * H + j];
        cell[long(n) * H + j] = c;
        const double h = gr[3 * H + j] * std::tanh(c);
        hid[long(n) * H + j] = h;
        out[(long(n) * T + t) * H + j] = h;
      }
    }
  }
  return out;
}

Tensor Lstm::backward(const Tensor& grad_out) {
  const int N = batch_, T = steps_, H = hidden_, G = 4 * hidden_;
  if (grad_out.size() != std::size_t(N) * T * H) throw std::invalid_argument("Lstm::backward: shape mismatch");

  Tensor dgates_all({N * T, G});
  Tensor dgs({N, G});
  Tensor dh_next({N, H});
  Tensor dc_next({N, H});

  for (int s = T - 1; s >= 0; --s) {
    const int t = reverse_ ? T - 1 - s : s;
    const double* h_prev = s == 0 ? init_.h.data() : hiddens_.data() + long(s - 1) * N * H;
    const double* c_prev = s == 0 ? init_.c.data() : cells_.data() + long(s - 1) * N * H;
    const double* gate = gates_.data() + long(s) * N * G;
    const double* cell = cells_.data() + long(s) * N * H;
    for (int n = 0; n < N; ++n) {
      const double* gr = gate + long(n) * G;
      double* dg = dgs.data() + long(n) * G;
      for (int j = 0; j < H; ++j) {
        const long k = long(n) * H + j;
        const double dh = grad_out[(long(n) * T + t) * H + j] + dh_next[k];
        const double i = gr[j], f = gr[H + j], g = gr[2 * H + j], o = gr[3 * H + j];
        const double tc = std::tanh(cell[k]);
        const double dc = dc_next[k] + dh * o * (1.0 - tc * tc);
        dg[j] = dc * g * i * (1.0 - i);
        dg[H + j] = dc * c_prev[k] * f * (1.0 - f);
        dg[2 * H + j] = dc * i * (1.0 - g * g);
        dg[3 * H + j] = dh * tc * o * (1.0 - o);
        dc_next[k] = dc * f;
      }
      std::copy(dg, dg + G, dgates_all.data() + (long(n) * T + t) * G);
      for (int j = 0; j < G; ++j) bias.grad[j] += dg[j];
    }
    kernels::gemm_tn(H, G, N, h_prev, dgs.data(), w_hidden.grad.data(), true);
    kernels::gemm_nt(N, H, G, dgs.data(), w_hidden.value.data(), dh_next.data(), false);
  }
  init_grad_ = State{dh_next, dc_next};

  kernels::gemm_tn(in_, G, N * T, input_.data(), dgates_all.data(), w_input.grad.data(), true);
  Tensor dx({N, T, in_});
  kernels::gemm_nt(N * T, in_, G, dgates_all.data(), w_input.value.data(), dx.data(), false);
  return dx;
}

Lstm::State Lstm::step(const Tensor& x, const State& prev) const {
  const int N = x.dim(0), H = hidden_, G = 4 * hidden_;
  if (x.rank() != 2 || x.dim(1) != in_) throw std::invalid_argument("Lstm::step: input shape mismatch");
  Tensor pre({N, G});
  kernels::gemm_nn(N, G, in_, x.data(), w_input.value.data(), pre.data(), false);
  kernels::gemm_nn(N, G, H, prev.h.data(), w_hidden.value.data(), pre.data(), true);
  State next{Tensor({N, H}), Tensor({N, H})};
  for (int n = 0; n < N; ++n) {
    const double* pr = pre.data() + long(n) * G;
    for (int j = 0; j < H; ++j) {
      const double i = sigmoid(pr[j] + bias.value[j]);
      const double f = sigmoid(pr[H + j] + bias.value[H + j]);
      const double g = std::tanh(pr[2 * H + j] + bias.value[2 * H + j]);
      const double o = sigmoid(pr[3 * H + j] + bias.value[3 * H + j]);
      const long k = long(n) * H + j;
      const double c = f * prev.c[k] + i * g;
      next.c[k] = c;
      next.h[k] = o * std::tanh(c);
    }
  }
  return next;
}

void Lstm::collect(ParamList& out) {
  out.push_back(&w_input);
  out.push_back(&w_hidden);
  out.push_back(&bias);
}

// ---------------------------------------------------------------- BiLstm

BiLstm::BiLstm(const std::string& name, int input_size, int hidden_size, std::mt19937_64& rng)
    : fwd_(name + ".fwd", input_size, hidden_size, rng), bwd_(name + ".bwd", input_size, hidden_size, rng) {}

Tensor BiLstm::forward(const Tensor& x) {
  out_fwd_ = fwd_.forward(x, false);
  out_bwd_ = bwd_.forward(x, true);
  const int N = x.dim(0), T = x.dim(1), H = fwd_.hidden_size();
  Tensor out({N, T, 2 * H});
  for (long r = 0; r < long(N) * T; ++r) {
    std::copy(out_fwd_.data() + r * H, out_fwd_.data() + (r + 1) * H, out.data() + r * 2 * H);
    std::copy(out_bwd_.data() + r * H, out_bwd_.data() + (r + 1) * H, out.data() + r * 2 * H + H);
  }
  return out;
}

Tensor BiLstm::backward(const Tensor& grad_out) {
  const int N = out_fwd_.dim(0), T = out_fwd_.dim(1), H = fwd_.hidden_size();
  Tensor gf({N, T, H}), gb({N, T, H});
  for (long r = 0; r < long(N) * T; ++r) {
    std::copy(grad_out.data() + r * 2 * H, grad_out.data() + r * 2 * H + H, gf.data() + r * H);
    std::copy(grad_out.data() + r * 2 * H + H, grad_out.data() + (r + 1) * 2 * H, gb.data() + r * H);
  }
  Tensor dx = fwd_.backward(gf);
  add_inplace(dx, bwd_.backward(gb));
  return dx;
}

Tensor BiLstm::final_states() const {
  const int N = out_fwd_.dim(0), T = out_fwd_.dim(1), H = fwd_.hidden_size();
  Tensor out({N, 2 * H});
  for (int n = 0; n < N; ++n) {
    const double* f = out_fwd_.data() + (long(n) * T + (T - 1)) * H;
    const double* b = out_bwd_.data() + long(n) * T * H;
    std::copy(f, f + H, out.data() + long(n) * 2 * H);
    std::copy(b, b + H, out.data() + long(n) * 2 * H + H);
  }
  return out;
}

Tensor BiLstm::backward_final(const Tensor& grad_final) {
  const int N = out_fwd_.dim(0), T = out_fwd_.dim(1), H = fwd_.hidden_size();
  Tensor grad({N, T, 2 * H});
  for (int n = 0; n < N; ++n) {
    const double* g = grad_final.data() + long(n) * 2 * H;
    std::copy(g, g + H, grad.data() + (long(n) * T + (T - 1)) * 2 * H);
    std::copy(g + H, g + 2 * H, grad.data() + long(n) * T * 2 * H + H);
  }
  return backward(grad);
}

void BiLstm::collect(ParamList& out) {
  fwd_.collect(out);
  bwd_.collect(out);
}

// ------------------------------------------------------------- Embedding

Embedding::Embedding(const std::string& name, int vocab, int dim, std::mt19937_64& rng)
    : table(name + ".table", {vocab, dim}) {
  uniform_init(table.value, 0.1, rng);
}

Tensor Embedding::lookup(const std::vector<int>& ids) const {
  const int V = table.value.dim(0), E = table.value.dim(1);
  Tensor out({static_cast<int>(ids.size()), E});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= V) throw std::out_of_range("Embedding: token index out of range");
    std::copy(table.value.data() + long(ids[r]) * E, table.value.data() + long(ids[r] + 1) * E,
              out.data() + long(r) * E);
  }
  return out;
}

Tensor Embedding::forward(const std::vector<int>& ids, int batch, int length) {
  if (ids.size() != std::size_t(batch) * length) throw std::invalid_argument("Embedding: id count mismatch");
  ids_ = ids;
  Tensor out = lookup(ids);
  out.reshape({batch, length, table.value.dim(1)});
  return out;
}

void Embedding::backward(const Tensor& grad_out) {
  const int E = table.value.dim(1);
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    double* g = table.grad.data() + long(ids_[r]) * E;
    const double* s = grad_out.data() + long(r) * E;
    for (int j = 0; j < E; ++j) g[j] += s[j];
  }
}

void Embedding::collect(ParamList& out) { out.push_back(&table); }

// --------------------------------------------------------------- softmax

Tensor log_softmax_rows(const Tensor& logits) {
  const int K = logits.shape().back();
  const long rows = long(logits.size() / K);
  Tensor out(logits.shape());
  for (long r = 0; r < rows; ++r) {
    const double* z = logits.data() + r * K;
    double* o = out.data() + r * K;
    const double mx = *std::max_element(z, z + K);
    double sum = 0.0;
    for (int j = 0; j < K; ++j) sum += std::exp(z[j] - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < K; ++j) o[j] = z[j] - lse;
  }
  return out;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = log_softmax_rows(logits);
  for (double& v : out.values()) v = std::exp(v);
  return out;
}

double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad) {
  const int K = logits.shape().back();
  const int B = static_cast<int>(logits.size() / K);
  if (static_cast<int>(labels.size()) != B) throw std::invalid_argument("cross entropy: label count mismatch");
  const Tensor logp = log_softmax_rows(logits);
  double loss = 0.0;
  if (grad) *grad = Tensor(logits.shape());
  for (int b = 0; b < B; ++b) {
    if (labels[b] < 0 || labels[b] >= K) throw std::out_of_range("cross entropy: label out of range");
    loss -= logp[long(b) * K + labels[b]];
    if (grad) {
      for (int j = 0; j < K; ++j) (*grad)[long(b) * K + j] = std::exp(logp[long(b) * K + j]) / B;
      (*grad)[long(b) * K + labels[b]] -= 1.0 / B;
    }
  }
  return loss / B;
}

// ------------------------------------------------------------------ Adam

Adam::Adam(ParamList params, Options opt) : params_(std::move(params)), opt_(opt) {
  if (!(opt_.lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  for (Param* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
  counts_.assign(params_.size(), 0);
}

void Adam::step(const std::function<bool(const Param&)>& active) {
  ++t_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    if (!p.trainable) continue;
    if (active && !active(p)) continue;
    const long t = ++counts_[k];
    const double c1 = 1.0 - std::pow(opt_.beta1, double(t));
    const double c2 = 1.0 - std::pow(opt_.beta2, double(t));
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g[i];
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g[i] * g[i];
      w[i] -= opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps);
    }
  }
}

}  // namespace finegrain::nn
