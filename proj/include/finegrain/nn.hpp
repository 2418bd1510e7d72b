#pragma once

// Minimal layer library with hand-written backward passes. Every layer caches
// what its backward pass needs during `forward` and accumulates parameter
// gradients into `Param::grad` during `backward`.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "finegrain/kernels.hpp"
#include "finegrain/tensor.hpp"

namespace finegrain::nn {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  // Buffers (batch-norm running statistics) are serialized but never optimized.
  bool trainable = true;

  Param() = default;
  Param(std::string n, std::vector<int> shape, bool train = true)
      : name(std::move(n)), value(shape), grad(shape), trainable(train) {}
};

using ParamList = std::vector<Param*>;

void zero_grads(const ParamList& params);
double global_grad_norm(const ParamList& params);
// Rescales gradients so their joint L2 norm is at most `max_norm`; returns the pre-clip norm.
double clip_grad_norm(const ParamList& params, double max_norm);
std::uint64_t hash_params(const ParamList& params);

enum class Mode { Train, Eval };

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features, std::mt19937_64& rng);

  // x: [..., in]; returns [..., out].
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  Tensor infer(const Tensor& x) const;
  void collect(ParamList& out);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param weight;  // [in, out]
  Param bias;    // [out]

 private:
  int in_ = 0;
  int out_ = 0;
  Tensor input_;
};

// Convolution (no bias) + batch norm + ReLU + non-overlapping average pool.
// Input and output are [N, C, T, H, W].
class ConvBlock {
 public:
  struct Options {
    int in_channels = 3;
    int out_channels = 8;
    int kernel_t = 3;  // 1 gives a per-frame 2D block
    int pool_t = 1;
    int pool_s = 2;
  };

  ConvBlock() = default;
  ConvBlock(const std::string& name, const Options& opt, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);
  void collect(ParamList& out);
  const Options& options() const { return opt_; }

  // Post-ReLU map of the last forward pass (before pooling), and the gradient
  // with respect to it given a gradient on the block output.
  Tensor activation() const;
  Tensor activation_grad(const Tensor& grad_out) const;

  Param weight;        // [Cout, Cin, KT, 3, 3]
  Param gamma;         // [Cout]
  Param beta;          // [Cout]
  Param running_mean;  // [Cout], buffer
  Param running_var;   // [Cout], buffer

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

 private:
  kernels::Conv3dShape conv_shape(const Tensor& x) const;

  Options opt_;
  Mode mode_ = Mode::Train;
  Tensor input_;
  Tensor xhat_;     // normalized conv output
  Tensor preact_;   // batch-norm output before ReLU
  std::vector<double> inv_std_;
};

// Single-direction LSTM over [N, T, I] with gate layout [i | f | g | o].
class Lstm {
 public:
  struct State {
    Tensor h;  // [N, H]
    Tensor c;  // [N, H]
  };

  Lstm() = default;
  Lstm(const std::string& name, int input_size, int hidden_size, std::mt19937_64& rng);

  // Returns [N, T, H]; output[t] is the state after consuming x[t]. With
  // `reverse` the sequence is consumed from t = T-1 down to 0.
  Tensor forward(const Tensor& x, bool reverse, const State* initial = nullptr);
  // Accumulates parameter gradients and returns d(loss)/dx. The gradient with
  // respect to the initial state is left in `initial_grad()`.
  Tensor backward(const Tensor& grad_out);
  const State& initial_grad() const { return init_grad_; }

  // Cache-free single step for autoregressive inference. x: [N, I].
  State step(const Tensor& x, const State& prev) const;

  void collect(ParamList& out);
  int input_size() const { return in_; }
  int hidden_size() const { return hidden_; }

  Param w_input;   // [I, 4H]
  Param w_hidden;  // [H, 4H]
  Param bias;      // [4H]

 private:
  int in_ = 0;
  int hidden_ = 0;
  bool reverse_ = false;
  int batch_ = 0;
  int steps_ = 0;
  Tensor input_;
  State init_;
  Tensor gates_;  // [T, N, 4H] post-activation, indexed by processing order
  Tensor cells_;  // [T, N, H]
  Tensor hiddens_;  // [T, N, H]
  State init_grad_;
};

// One bidirectional layer: concatenation [forward | backward] -> [N, T, 2H].
class BiLstm {
 public:
  BiLstm() = default;
  BiLstm(const std::string& name, int input_size, int hidden_size, std::mt19937_64& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  // Concatenation of the final states of both directions, [N, 2H].
  Tensor final_states() const;
  // Backward from a gradient on `final_states()` only.
  Tensor backward_final(const Tensor& grad_final);
  void collect(ParamList& out);
  int hidden_size() const { return fwd_.hidden_size(); }

 private:
  Lstm fwd_;
  Lstm bwd_;
  Tensor out_fwd_;
  Tensor out_bwd_;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, int vocab, int dim, std::mt19937_64& rng);

  // ids: N*L token indices; returns [N, L, E].
  Tensor forward(const std::vector<int>& ids, int batch, int length);
  void backward(const Tensor& grad_out);
  Tensor lookup(const std::vector<int>& ids) const;  // [ids.size(), E], no cache
  void collect(ParamList& out);

  Param table;  // [V, E]

 private:
  std::vector<int> ids_;
};

// Row-wise softmax over the last dimension.
Tensor softmax_rows(const Tensor& logits);
Tensor log_softmax_rows(const Tensor& logits);

// Mean cross-entropy over rows of logits [B, K]; writes d(loss)/d(logits) into grad.
double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad);

class Adam {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  Adam(ParamList params, Options opt);

  // Updates trainable parameters accepted by `active` (all when empty).
  // Rejected parameters keep both their value and moment estimates.
  void step(const std::function<bool(const Param&)>& active = {});
  long steps() const { return t_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  Options opt_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::vector<long> counts_;
  long t_ = 0;
};

void uniform_init(Tensor& t, double bound, std::mt19937_64& rng);

}  // namespace finegrain::nn
