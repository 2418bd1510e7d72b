#include "finegrain/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <random>

#include "finegrain/errors.hpp"
#include "finegrain/seeding.hpp"

namespace finegrain {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'F', 'G', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("checkpoint truncated");
  return v;
}

json read_header(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a checkpoint file (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in);
  if (len > (1u << 24)) throw ParseError("checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("checkpoint truncated");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header is not JSON: ") + e.what());
  }
}

}  // namespace

json ModelConfig::to_json() const {
  return {{"encoder", encoder.to_json()},
          {"decoder", decoder.to_json()},
          {"classes", classes},
          {"label_space", label_space},
          {"geometry", {{"frames", geometry.frames}, {"resize", geometry.resize}, {"crop", geometry.crop}}},
          {"seed", seed},
          {"task", task},
          {"caption_target", caption_target},
          {"vocabulary", vocabulary}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  try {
    c.encoder = encoder::EncoderConfig::from_json(j.at("encoder"));
    c.decoder = heads::DecoderConfig::from_json(j.at("decoder"));
    c.classes = j.at("classes").get<int>();
    c.label_space = j.at("label_space").get<std::string>();
    const auto& g = j.at("geometry");
    c.geometry = {g.at("frames").get<int>(), g.at("resize").get<int>(), g.at("crop").get<int>()};
    c.seed = j.value("seed", std::uint64_t{0});
    c.task = j.value("task", std::string());
    c.caption_target = j.value("caption_target", std::string());
    c.vocabulary = j.value("vocabulary", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  decoder.validate();
  geometry.validate();
  if (classes < 1) throw ConfigError("model needs at least one class");
  if (label_space != "fine" && label_space != "coarse") throw ConfigError("label_space must be fine or coarse");
  encoder.validate_input(geometry.frames, geometry.crop, geometry.crop);
  if (!vocabulary.empty() && static_cast<int>(vocabulary.size()) != decoder.vocab_size) {
    throw ConfigError("vocabulary size does not match the decoder output size");
  }
  if (!caption_target.empty() && caption_target != "full" && caption_target != "simplified") {
    throw ConfigError("caption_target must be full or simplified");
  }
}

JointModel::JointModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(derive_seed({config_.seed, 0x3E1}));
  encoder_ = encoder::VideoEncoder(config_.encoder, rng);
  classifier_ = heads::ClassifierHead(config_.encoder.embedding_dim(), config_.classes, rng);
  decoder_ = heads::CaptionDecoder(config_.encoder.embedding_dim(), config_.decoder, rng);
}

LossBreakdown JointModel::forward_backward(const Tensor& clips, const std::vector<int>& labels,
                                           const std::vector<corpus::TokenSequence>& captions, double lambda,
                                           nn::Mode mode) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must lie in [0, 1]");
  const Tensor h = encoder_.forward(clips, mode);
  LossBreakdown out;
  Tensor dh(h.shape());

  const bool want_cls = !labels.empty();
  const bool want_cap = !captions.empty();
  if (lambda > 0.0 && !want_cls) throw std::invalid_argument("classification weight set but no labels given");
  if (lambda < 1.0 && !want_cap) throw std::invalid_argument("captioning weight set but no captions given");

  if (want_cls) {
    Tensor dlogits;
    const Tensor logits = classifier_.logits(h);
    out.classification = nn::softmax_cross_entropy(logits, labels, &dlogits);
    if (lambda > 0.0) {
      scale_inplace(dlogits, lambda);
      add_inplace(dh, classifier_.backward(dlogits));
    }
  }
  if (want_cap) {
    out.captioning = decoder_.caption_nll(h, captions);
    if (lambda < 1.0) add_inplace(dh, decoder_.backward(1.0 - lambda));
  }
  out.total = heads::joint_loss(out.classification, out.captioning, lambda);
  encoder_.backward(dh);
  return out;
}

nn::ParamList JointModel::params() {
  nn::ParamList ps;
  encoder_.collect(ps);
  classifier_.collect(ps);
  decoder_.collect(ps);
  return ps;
}

nn::ParamList JointModel::encoder_params() {
  nn::ParamList ps;
  encoder_.collect(ps);
  return ps;
}

nn::ParamList JointModel::classifier_params() {
  nn::ParamList ps;
  classifier_.collect(ps);
  return ps;
}

nn::ParamList JointModel::decoder_params() {
  nn::ParamList ps;
  decoder_.collect(ps);
  return ps;
}

bool JointModel::is_decoder_param(const nn::Param& p) { return p.name.rfind("dec.", 0) == 0; }
bool JointModel::is_classifier_param(const nn::Param& p) { return p.name.rfind("cls.", 0) == 0; }

void JointModel::save(const std::filesystem::path& path) {
  const auto ps = params();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    put(out, kVersion);
    const std::string header = config_.to_json().dump();
    put(out, static_cast<std::uint64_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    put(out, static_cast<std::uint32_t>(ps.size()));
    for (const auto* p : ps) {
      put(out, static_cast<std::uint32_t>(p->name.size()));
      out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      put(out, static_cast<std::uint32_t>(p->value.rank()));
      for (int d : p->value.shape()) put(out, static_cast<std::int32_t>(d));
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return ModelConfig::from_json(read_header(in));
}

JointModel JointModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  JointModel model(ModelConfig::from_json(read_header(in)));
  std::map<std::string, nn::Param*> by_name;
  for (auto* p : model.params()) by_name[p->name] = p;

  const auto count = get<std::uint32_t>(in);
  if (count != by_name.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(count) + " blocks, model expects " +
                          std::to_string(by_name.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in);
    if (name_len > 4096) throw ParseError("checkpoint block name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    auto it = by_name.find(name);
    if (!in || it == by_name.end()) throw ValidationError("unexpected checkpoint block '" + name + "'");
    const auto rank = get<std::uint32_t>(in);
    std::vector<int> shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::int32_t>(in));
    nn::Param& p = *it->second;
    if (shape != p.value.shape()) throw ValidationError("shape mismatch for checkpoint block '" + name + "'");
    in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    if (!in) throw ParseError("checkpoint truncated in block '" + name + "'");
    by_name.erase(it);
  }
  return model;
}

}  // namespace finegrain
