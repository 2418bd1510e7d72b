#include <cmath>
#include <random>

#include "doctest.h"
#include "finegrain/nn.hpp"
#include "gradcheck.hpp"

using namespace finegrain;
using namespace finegrain::nn;
using gradcheck::dot;
using gradcheck::random_tensor;
using gradcheck::relative_error;

namespace {

// Checks every entry of every trainable parameter plus the input gradient.
template <typename Forward>
void check_params(const ParamList& params, Forward&& loss, double tol = 1e-6) {
  for (auto* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double n = gradcheck::numeric(p->value[i], loss);
      INFO(p->name << "[" << i << "] analytic " << p->grad[i] << " numeric " << n);
      CHECK(relative_error(p->grad[i], n) < tol);
    }
  }
}

}  // namespace

TEST_CASE("Linear gradients") {
  std::mt19937_64 rng(1);
  Linear fc("fc", 5, 3, rng);
  const Tensor x = random_tensor({2, 4, 5}, rng);
  const Tensor r = random_tensor({2, 4, 3}, rng);
  ParamList ps;
  fc.collect(ps);
  zero_grads(ps);
  fc.forward(x);
  const Tensor dx = fc.backward(r);
  check_params(ps, [&] { return dot(fc.infer(x), r); });
  Tensor xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double n = gradcheck::numeric(xm[i], [&] { return dot(fc.infer(xm), r); });
    CHECK(relative_error(dx[i], n) < 1e-6);
  }
}

TEST_CASE("ConvBlock gradients in train and eval mode") {
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    for (int kt : {1, 3}) {
      std::mt19937_64 rng(2 + kt);
      ConvBlock::Options o;
      o.in_channels = 2;
      o.out_channels = 3;
      o.kernel_t = kt;
      o.pool_t = 2;
      o.pool_s = 2;
      ConvBlock block("b", o, rng);
      block.running_mean.value = random_tensor({3}, rng, 0.3);
      block.running_var.value.fill(0.7);
      block.beta.value = random_tensor({3}, rng, 0.5);
      const Tensor x = random_tensor({2, 2, 4, 4, 4}, rng);
      const Tensor r = random_tensor({2, 3, 2, 2, 2}, rng);
      ParamList ps;
      block.collect(ps);
      zero_grads(ps);
      const Tensor saved_mean = block.running_mean.value, saved_var = block.running_var.value;
      auto loss = [&] {
        const double v = dot(block.forward(x, mode), r);
        block.running_mean.value = saved_mean;
        block.running_var.value = saved_var;
        return v;
      };
      loss();
      const Tensor dx = block.backward(r);
      check_params(ps, loss);
      Tensor xm = x;
      auto loss_x = [&] {
        const double v = dot(block.forward(xm, mode), r);
        block.running_mean.value = saved_mean;
        block.running_var.value = saved_var;
        return v;
      };
      for (std::size_t i = 0; i < x.size(); i += 7) {
        const double n = gradcheck::numeric(xm[i], loss_x);
        CHECK(relative_error(dx[i], n) < 1e-6);
      }
    }
  }
}

TEST_CASE("ConvBlock running statistics and batch invariance in eval mode") {
  std::mt19937_64 rng(9);
  ConvBlock::Options o;
  o.in_channels = 3;
  o.out_channels = 4;
  ConvBlock block("b", o, rng);
  const Tensor x = random_tensor({3, 3, 2, 4, 4}, rng);
  block.forward(x, Mode::Train);
  for (int c = 0; c < 4; ++c) {
    CHECK(block.running_var.value[c] != 1.0);
    CHECK(block.running_mean.value[c] != 0.0);
  }
  const Tensor batch_out = block.forward(x, Mode::Eval);
  Tensor single({1, 3, 2, 4, 4});
  std::copy(x.data() + 2 * single.size(), x.data() + 3 * single.size(), single.data());
  const Tensor alone = block.forward(single, Mode::Eval);
  for (std::size_t i = 0; i < alone.size(); ++i) CHECK(alone[i] == batch_out[2 * alone.size() + i]);
}

TEST_CASE("Lstm gradients including the initial state") {
  for (bool reverse : {false, true}) {
    std::mt19937_64 rng(4);
    Lstm lstm("l", 3, 4, rng);
    const Tensor x = random_tensor({2, 5, 3}, rng);
    const Tensor r = random_tensor({2, 5, 4}, rng);
    Lstm::State init{random_tensor({2, 4}, rng), random_tensor({2, 4}, rng)};
    ParamList ps;
    lstm.collect(ps);
    zero_grads(ps);
    lstm.forward(x, reverse, &init);
    const Tensor dx = lstm.backward(r);
    const Lstm::State dinit = lstm.initial_grad();
    auto loss = [&] { return dot(lstm.forward(x, reverse, &init), r); };
    check_params(ps, loss);
    for (std::size_t i = 0; i < init.h.size(); ++i) {
      CHECK(relative_error(dinit.h[i], gradcheck::numeric(init.h[i], loss)) < 1e-6);
      CHECK(relative_error(dinit.c[i], gradcheck::numeric(init.c[i], loss)) < 1e-6);
    }
    Tensor xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double n = gradcheck::numeric(xm[i], [&] { return dot(lstm.forward(xm, reverse, &init), r); });
      CHECK(relative_error(dx[i], n) < 1e-6);
    }
  }
}

TEST_CASE("Lstm step matches the sequence forward") {
  std::mt19937_64 rng(5);
  Lstm lstm("l", 3, 4, rng);
  const Tensor x = random_tensor({1, 6, 3}, rng);
  const Tensor seq = lstm.forward(x, false);
  Lstm::State s{Tensor({1, 4}), Tensor({1, 4})};
  for (int t = 0; t < 6; ++t) {
    Tensor xt({1, 3});
    std::copy(x.data() + t * 3, x.data() + t * 3 + 3, xt.data());
    s = lstm.step(xt, s);
    for (int j = 0; j < 4; ++j) CHECK(s.h[j] == doctest::Approx(seq[t * 4 + j]).epsilon(1e-12));
  }
}

TEST_CASE("BiLstm gradients for sequence and final-state objectives") {
  std::mt19937_64 rng(6);
  BiLstm bi("bi", 3, 2, rng);
  const Tensor x = random_tensor({2, 4, 3}, rng);
  const Tensor r = random_tensor({2, 4, 4}, rng);
  const Tensor rf = random_tensor({2, 4}, rng);
  ParamList ps;
  bi.collect(ps);

  zero_grads(ps);
  bi.forward(x);
  bi.backward(r);
  check_params(ps, [&] { return dot(bi.forward(x), r); });

  zero_grads(ps);
  bi.forward(x);
  bi.backward_final(rf);
  check_params(ps, [&] {
    bi.forward(x);
    return dot(bi.final_states(), rf);
  });
}

TEST_CASE("Embedding and softmax cross-entropy gradients") {
  std::mt19937_64 rng(8);
  Embedding emb("e", 6, 3, rng);
  const std::vector<int> ids = {1, 4, 4, 0, 5, 1};
  const Tensor r = random_tensor({2, 3, 3}, rng);
  ParamList ps;
  emb.collect(ps);
  zero_grads(ps);
  emb.forward(ids, 2, 3);
  emb.backward(r);
  check_params(ps, [&] { return dot(emb.forward(ids, 2, 3), r); });

  Tensor logits = random_tensor({4, 5}, rng, 2.0);
  const std::vector<int> labels = {0, 4, 2, 2};
  Tensor grad;
  softmax_cross_entropy(logits, labels, &grad);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double n = gradcheck::numeric(logits[i], [&] { return softmax_cross_entropy(logits, labels, nullptr); });
    CHECK(relative_error(grad[i], n) < 1e-7);
  }
}

TEST_CASE("softmax rows") {
  Tensor logits({1, 4});
  for (int i = 0; i < 4; ++i) logits[i] = std::log(double(i + 1));
  const Tensor p = softmax_rows(logits);
  for (int i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx((i + 1) / 10.0).epsilon(1e-14));
  Tensor shifted = logits;
  for (double& v : shifted.values()) v += 123.0;
  const Tensor q = softmax_rows(shifted);
  for (int i = 0; i < 4; ++i) CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-12));
}

TEST_CASE("Adam first step, active filter and gradient clipping") {
  Param a("a", {2}), b("b", {1});
  a.grad[0] = 0.5;
  a.grad[1] = -2.0;
  b.grad[0] = 1.0;
  Adam opt({&a, &b}, {});
  opt.step([](const Param& p) { return p.name == "a"; });
  // First bias-corrected Adam step moves each coordinate by lr * sign(g).
  CHECK(a.value[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  CHECK(a.value[1] == doctest::Approx(1e-3).epsilon(1e-6));
  CHECK(b.value[0] == 0.0);

  Param c("c", {2});
  c.grad[0] = 3.0;
  c.grad[1] = 4.0;
  const double before = clip_grad_norm({&c}, 1.0);
  CHECK(before == doctest::Approx(5.0));
  CHECK(global_grad_norm({&c}) == doctest::Approx(1.0));
  c.grad[0] = 0.3;
  c.grad[1] = 0.4;
  clip_grad_norm({&c}, 1.0);
  CHECK(c.grad[0] == 0.3);
}
