#include "finegrain/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "finegrain/errors.hpp"

namespace finegrain::heads {

using corpus::Vocabulary;
using nlohmann::json;

// -------------------------------------------------------------- classifier

ClassifierHead::ClassifierHead(int embedding_dim, int classes, std::mt19937_64& rng)
    : fc_("cls.fc", embedding_dim, classes, rng) {
  if (classes < 1) throw ConfigError("classifier needs at least one class");
}

Tensor ClassifierHead::logits(const Tensor& h) { return fc_.forward(h); }
Tensor ClassifierHead::backward(const Tensor& grad_logits) { return fc_.backward(grad_logits); }
Tensor ClassifierHead::infer_logits(const Tensor& h) const { return fc_.infer(h); }
Tensor ClassifierHead::classify(const Tensor& h) const { return nn::softmax_rows(fc_.infer(h)); }
void ClassifierHead::collect(nn::ParamList& out) { fc_.collect(out); }

// ----------------------------------------------------------------- decoder

json DecoderConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"embed_dim", embed_dim},
          {"hidden", hidden},
          {"layers", layers},
          {"condition_every_step", condition_every_step}};
}

DecoderConfig DecoderConfig::from_json(const json& j) {
  DecoderConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.layers = j.value("layers", 2);
  c.condition_every_step = j.value("condition_every_step", false);
  c.validate();
  return c;
}

void DecoderConfig::validate() const {
  if (vocab_size < Vocabulary::kSpecialCount) throw ConfigError("decoder vocabulary smaller than the specials");
  if (embed_dim < 1 || hidden < 1) throw ConfigError("decoder widths must be positive");
  if (layers != 2) throw ConfigError("the caption decoder has exactly 2 recurrent layers");
}

CaptionDecoder::CaptionDecoder(int embedding_dim, const DecoderConfig& config, std::mt19937_64& rng)
    : embedding_dim_(embedding_dim), config_(config) {
  config_.validate();
  embed_ = nn::Embedding("dec.embed", config_.vocab_size, config_.embed_dim, rng);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = "dec.init" + std::to_string(l);
    init_h_.emplace_back(p + ".h", embedding_dim, config_.hidden, rng);
    init_c_.emplace_back(p + ".c", embedding_dim, config_.hidden, rng);
  }
  const int in0 = config_.embed_dim + (config_.condition_every_step ? embedding_dim : 0);
  for (int l = 0; l < config_.layers; ++l) {
    lstm_.emplace_back("dec.lstm" + std::to_string(l), l == 0 ? in0 : config_.hidden, config_.hidden, rng);
  }
  out_ = nn::Linear("dec.out", config_.hidden, config_.vocab_size, rng);
}

namespace {

// [N, S, E] ++ broadcast h [N, D] -> [N, S, E + D]
Tensor concat_condition(const Tensor& emb, const Tensor& h) {
  const int N = emb.dim(0), S = emb.dim(1), E = emb.dim(2), D = h.dim(1);
  Tensor out({N, S, E + D});
  for (int n = 0; n < N; ++n) {
    for (int s = 0; s < S; ++s) {
      double* o = out.data() + (long(n) * S + s) * (E + D);
      std::copy(emb.data() + (long(n) * S + s) * E, emb.data() + (long(n) * S + s + 1) * E, o);
      std::copy(h.data() + long(n) * D, h.data() + long(n + 1) * D, o + E);
    }
  }
  return out;
}

}  // namespace

double CaptionDecoder::caption_nll(const Tensor& h, const std::vector<corpus::TokenSequence>& targets) {
  if (h.rank() != 2 || h.dim(1) != embedding_dim_) {
    throw std::invalid_argument("caption_nll: h must be [N," + std::to_string(embedding_dim_) + "]");
  }
  const int N = h.dim(0);
  if (static_cast<int>(targets.size()) != N) throw std::invalid_argument("caption_nll: target count mismatch");
  int S = 0;
  for (const auto& t : targets) {
    t.validate();
    for (int id : t.indices) {
      if (id < 0 || id >= config_.vocab_size) throw ValidationError("caption token outside the vocabulary");
    }
    S = std::max(S, t.eos_position());
  }
  batch_ = N;
  steps_ = S;
  const int V = config_.vocab_size;

  std::vector<int> inputs(std::size_t(N) * S, Vocabulary::kPad);
  target_ids_.assign(std::size_t(N) * S, Vocabulary::kPad);
  mask_ = Tensor({N, S});
  for (int n = 0; n < N; ++n) {
    const auto& seq = targets[n].indices;
    const int eos = targets[n].eos_position();
    for (int s = 0; s < S; ++s) {
      if (s < static_cast<int>(seq.size())) inputs[std::size_t(n) * S + s] = seq[s];
      if (s < eos) {
        target_ids_[std::size_t(n) * S + s] = seq[s + 1];
        mask_[long(n) * S + s] = 1.0;
      }
    }
  }

  Tensor x = embed_.forward(inputs, N, S);
  if (config_.condition_every_step) x = concat_condition(x, h);
  for (int l = 0; l < config_.layers; ++l) {
    nn::Lstm::State init{init_h_[l].forward(h), init_c_[l].forward(h)};
    x = lstm_[l].forward(x, false, &init);
  }
  const Tensor logits = out_.forward(x);
  log_probs_ = nn::log_softmax_rows(logits);

  losses_.assign(N, 0.0);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    for (int s = 0; s < S; ++s) {
      if (mask_[long(n) * S + s] == 0.0) continue;
      losses_[n] -= log_probs_[(long(n) * S + s) * V + target_ids_[std::size_t(n) * S + s]];
    }
    total += losses_[n];
  }
  return total / N;
}

Tensor CaptionDecoder::backward(double scale) {
  Tensor weights = mask_;
  for (double& v : weights.values()) v *= scale / batch_;
  return backward_weighted(weights);
}

Tensor CaptionDecoder::backward_weighted(const Tensor& weights) {
  const int N = batch_, S = steps_, V = config_.vocab_size;
  if (weights.shape() != std::vector<int>{N, S}) throw std::invalid_argument("backward_weighted: weights shape");
  Tensor dlogits({N, S, V});
  for (int n = 0; n < N; ++n) {
    for (int s = 0; s < S; ++s) {
      const double w = weights[long(n) * S + s];
      if (mask_[long(n) * S + s] == 0.0 || w == 0.0) continue;
      const long row = (long(n) * S + s) * V;
      for (int v = 0; v < V; ++v) dlogits[row + v] = w * std::exp(log_probs_[row + v]);
      dlogits[row + target_ids_[std::size_t(n) * S + s]] -= w;
    }
  }
  Tensor g = out_.backward(dlogits);
  Tensor dh({N, embedding_dim_});
  for (int l = config_.layers - 1; l >= 0; --l) {
    g = lstm_[l].backward(g);
    const auto& ig = lstm_[l].initial_grad();
    add_inplace(dh, init_h_[l].backward(ig.h));
    add_inplace(dh, init_c_[l].backward(ig.c));
  }
  if (config_.condition_every_step) {
    const int E = config_.embed_dim, D = embedding_dim_;
    Tensor gemb({N, S, E});
    for (int n = 0; n < N; ++n) {
      for (int s = 0; s < S; ++s) {
        const double* src = g.data() + (long(n) * S + s) * (E + D);
        std::copy(src, src + E, gemb.data() + (long(n) * S + s) * E);
        for (int d = 0; d < D; ++d) dh[long(n) * D + d] += src[E + d];
      }
    }
    embed_.backward(gemb);
  } else {
    embed_.backward(g);
  }
  return dh;
}

corpus::TokenSequence CaptionDecoder::decode_greedy(const Tensor& h_row, int max_len, DecodeTrace* trace) const {
  if (h_row.size() != std::size_t(embedding_dim_)) throw std::invalid_argument("decode_greedy: h has wrong width");
  if (max_len < 0) throw std::invalid_argument("decode_greedy: negative max_len");
  Tensor h({1, embedding_dim_});
  std::copy(h_row.data(), h_row.data() + embedding_dim_, h.data());

  std::vector<nn::Lstm::State> states;
  for (int l = 0; l < config_.layers; ++l) states.push_back({init_h_[l].infer(h), init_c_[l].infer(h)});

  corpus::TokenSequence seq;
  seq.indices.push_back(Vocabulary::kBos);
  int token = Vocabulary::kBos;
  int content = 0;
  while (true) {
    Tensor x = embed_.lookup({token});
    if (config_.condition_every_step) {
      Tensor xe = x;
      xe.reshape({1, 1, config_.embed_dim});
      x = concat_condition(xe, h);
      x.reshape({1, config_.embed_dim + embedding_dim_});
    }
    for (int l = 0; l < config_.layers; ++l) {
      states[l] = lstm_[l].step(x, states[l]);
      x = states[l].h;
    }
    const Tensor logp = nn::log_softmax_rows(out_.infer(x));
    const double* row = logp.data();
    const int best = static_cast<int>(std::max_element(row, row + config_.vocab_size) - row);
    if (trace) {
      trace->inputs.push_back(token);
      trace->outputs.push_back(best);
      trace->log_probs.push_back(row[best]);
    }
    if (best == Vocabulary::kEos) break;
    if (content == max_len) break;
    seq.indices.push_back(best);
    ++content;
    token = best;
  }
  seq.indices.push_back(Vocabulary::kEos);
  while (static_cast<int>(seq.indices.size()) < max_len + 2) seq.indices.push_back(Vocabulary::kPad);
  return seq;
}

void CaptionDecoder::collect(nn::ParamList& out) {
  embed_.collect(out);
  for (auto& l : init_h_) l.collect(out);
  for (auto& l : init_c_) l.collect(out);
  for (auto& l : lstm_) l.collect(out);
  out_.collect(out);
}

double joint_loss(double cls_loss, double cap_loss, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  if (!std::isfinite(cls_loss) || !std::isfinite(cap_loss)) throw std::invalid_argument("joint_loss: non-finite input");
  if (lambda == 1.0) return cls_loss;
  if (lambda == 0.0) return cap_loss;
  return lambda * cls_loss + (1.0 - lambda) * cap_loss;
}

}  // namespace finegrain::heads
