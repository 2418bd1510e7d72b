// Command-line front end: one subcommand per pipeline stage, all outputs
// written below a run directory.

#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "finegrain/errors.hpp"
#include "finegrain/explain.hpp"
#include "finegrain/metrics.hpp"
#include "finegrain/toyworld.hpp"
#include "finegrain/training.hpp"
#include "finegrain/transfer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace finegrain;

namespace {

constexpr const char* kRunDirEnv = "FINEGRAIN_RUN_DIR";

// Thrown for problems the user fixes by changing the invocation.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  fs::path run_dir;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

// Ordered key=value settings with typed accessors. Unknown keys are rejected.
class Settings {
 public:
  Settings(std::string command, std::vector<std::pair<std::string, std::string>> defaults)
      : command_(std::move(command)) {
    for (auto& [k, v] : defaults) {
      order_.push_back(k);
      values_[k] = v;
    }
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.count(key)) throw UsageError("unknown key '" + key + "' for " + command_);
    values_[key] = value;
  }
  void apply(const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [k, v] : kv) set(k, v);
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& str(const std::string& key) const { return values_.at(key); }
  long integer(const std::string& key) const {
    try {
      std::size_t used = 0;
      const long v = std::stol(str(key), &used);
      if (used == str(key).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("key '" + key + "' expects an integer, got '" + str(key) + "'");
  }
  double real(const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(str(key), &used);
      if (used == str(key).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("key '" + key + "' expects a number, got '" + str(key) + "'");
  }
  bool boolean(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("key '" + key + "' expects true or false, got '" + v + "'");
  }
  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    for (std::string item; std::getline(ss, item, ',');) {
      item.erase(0, item.find_first_not_of(' '));
      item.erase(item.find_last_not_of(' ') + 1);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& k : order_) out += k + " = " + values_.at(k) + "\n";
    return out;
  }

 private:
  std::string command_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> values_;
};

class RunLog {
 public:
  explicit RunLog(const fs::path& run_dir) : file_(run_dir / "log.txt", std::ios::app) {}
  void operator()(const std::string& line) {
    std::cerr << line << std::endl;
    file_ << line << std::endl;
  }

 private:
  std::ofstream file_;
};

std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + item + "' is not key=value");
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Applies config file then overrides, then the global seed, and records the
// resolved configuration in the run directory and the log.
void resolve(Settings& s, const std::string& command, const std::string& config_path,
             const std::vector<std::string>& overrides, const Globals& g, RunLog& log) {
  if (!config_path.empty()) s.apply(training::read_key_values(config_path));
  s.apply(parse_overrides(overrides));
  if (g.seed && s.has("seed")) s.set("seed", std::to_string(*g.seed));
  if (g.deterministic && s.has("deterministic")) s.set("deterministic", "true");
  std::ofstream(g.run_dir / (command + ".config")) << s.to_text();
  log("[" + command + "] resolved config:");
  std::istringstream lines(s.to_text());
  for (std::string line; std::getline(lines, line);) log("  " + line);
}

fs::path run_path(const Globals& g, const std::string& rel) { return g.run_dir / rel; }

Manifest load_manifest(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("manifest not found: " + path);
  return Manifest::load(path);
}

corpus::Vocabulary model_vocabulary(const ModelConfig& config) {
  if (config.vocabulary.empty()) throw ValidationError("checkpoint carries no caption vocabulary");
  return corpus::Vocabulary::from_tokens(config.vocabulary);
}

videoio::VideoClip clip_for(const JointModel& model, const Manifest* manifest, const std::string& video,
                            const std::string& frames_dir) {
  fs::path dir;
  if (!frames_dir.empty()) {
    dir = frames_dir;
  } else {
    if (!manifest) throw UsageError("need video=<id> with a manifest, or frames=<dir>");
    dir = manifest->frames_dir(manifest->episode(video));
  }
  return videoio::make_clip(videoio::load_frame_directory(dir), model.config().geometry, videoio::Phase::Eval, 0);
}

// ------------------------------------------------------------ subcommands

int cmd_synth_data(Settings& s, const Globals& g, RunLog& log) {
  toyworld::ToySpec spec;
  if (s.str("spec") == "toy") spec = toyworld::default_toy_spec();
  else if (s.str("spec") == "kitchen") spec = toyworld::kitchen_toy_spec();
  else throw UsageError("spec must be toy or kitchen");
  spec.height = static_cast<int>(s.integer("height"));
  spec.width = static_cast<int>(s.integer("width"));
  if (!s.str("duration_s").empty()) spec.duration_s = s.real("duration_s");
  if (!s.str("noise").empty()) spec.noise = static_cast<int>(s.integer("noise"));
  toyworld::CorpusOptions opt;
  opt.balanced = s.boolean("balanced");
  const fs::path out = run_path(g, s.str("out"));
  const auto manifest = toyworld::generate_toy_corpus(spec, static_cast<int>(s.integer("clips")),
                                                      static_cast<std::uint64_t>(s.integer("seed")), out, opt);
  log("wrote " + manifest.string());
  return 0;
}

int cmd_build_vocab(Settings& s, const Globals& g, RunLog& log) {
  const Manifest m = load_manifest(s.str("manifest"));
  const auto vocab = training::build_corpus_vocabulary(m, s.str("target"), static_cast<int>(s.integer("min_occurrences")),
                                                       s.str("split"));
  const fs::path out = s.str("out").empty() ? run_path(g, "vocab.txt") : fs::path(s.str("out"));
  vocab.save(out);
  write_json(run_path(g, "vocab_report.json"),
             {{"size", vocab.size()}, {"target", s.str("target")}, {"tokens", vocab.tokens()}});
  log("vocabulary of " + std::to_string(vocab.size()) + " tokens -> " + out.string());
  return 0;
}

int cmd_train(Settings& s, const Globals& g, RunLog& log) {
  training::TrainConfig cfg;
  for (const auto& key : training::TrainConfig::keys()) cfg.set(key, s.str(key));
  if (fs::path(cfg.checkpoint_dir).is_relative()) cfg.checkpoint_dir = run_path(g, cfg.checkpoint_dir).string();
  cfg.validate();
  std::optional<corpus::Vocabulary> vocab;
  if (!s.str("vocab").empty() && fs::exists(s.str("vocab"))) vocab = corpus::Vocabulary::load(s.str("vocab"));
  const auto result = training::train_model(cfg, s.str("manifest"), vocab ? &*vocab : nullptr,
                                            [&](const std::string& line) { log(line); });
  write_json(run_path(g, "train_report.json"), result.report.to_json());
  log("best checkpoint " + result.best_checkpoint.string());
  return 0;
}

int cmd_eval(Settings& s, const Globals& g, RunLog& log) {
  const auto report = training::evaluate_model(s.str("checkpoint"), s.str("manifest"), s.str("split"), s.list("metrics"),
                                               static_cast<int>(s.integer("batch_size")));
  report.validate();
  const fs::path out = s.str("out").empty() ? run_path(g, "eval_" + s.str("split") + ".json") : fs::path(s.str("out"));
  write_json(out, report.to_json());
  for (const auto& [split, values] : report.splits)
    for (const auto& [name, v] : values) log(split + " " + name + " " + std::to_string(v));
  return 0;
}

int cmd_caption(Settings& s, const Globals& g, RunLog& log) {
  JointModel model = JointModel::load(s.str("checkpoint"));
  const auto vocab = model_vocabulary(model.config());
  std::optional<Manifest> manifest;
  if (s.str("frames").empty()) manifest = load_manifest(s.str("manifest"));
  if (s.str("frames").empty() && s.str("video").empty()) throw UsageError("caption needs video=<id> or frames=<dir>");
  const auto clip = clip_for(model, manifest ? &*manifest : nullptr, s.str("video"), s.str("frames"));
  const Tensor h = model.encode(videoio::clip_tensor(clip), nn::Mode::Eval);
  heads::DecodeTrace trace;
  const auto seq = model.decoder().decode_greedy(h, static_cast<int>(s.integer("max_len")), &trace);
  const auto words = corpus::decode_tokens(seq, vocab);

  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  std::cout << "caption: " << text << "\n";
  json tokens = json::array();
  double total = 0.0;
  for (std::size_t i = 0; i < trace.outputs.size(); ++i) {
    if (i == words.size() && trace.outputs[i] != corpus::Vocabulary::kEos) {
      // Decoding stopped at max_len; the EOS was appended, not predicted.
      std::cout << std::setw(3) << i + 1 << "  <eos>           (max_len reached)\n";
      break;
    }
    const std::string tok = vocab.token_at(trace.outputs[i]);
    total += trace.log_probs[i];
    std::cout << std::setw(3) << i + 1 << "  " << std::left << std::setw(16) << tok << std::right << std::fixed
              << std::setprecision(6) << trace.log_probs[i] << "\n";
    tokens.push_back({{"token", tok}, {"log_prob", trace.log_probs[i]}});
  }
  std::cout << "total log-prob " << std::fixed << std::setprecision(6) << total << std::endl;

  json out = {{"caption", text}, {"tokens", tokens}, {"total_log_prob", total}};
  std::string name = s.str("video").empty() ? fs::path(s.str("frames")).filename().string() : s.str("video");
  if (manifest && !s.str("video").empty()) {
    const auto recs = manifest->load_annotations();
    for (const auto& r : recs) {
      if (r.video_id != s.str("video")) continue;
      const auto ref = corpus::tokenize_caption(training::caption_text(r, model.config().caption_target.empty()
                                                                              ? "full"
                                                                              : model.config().caption_target));
      out["reference"] = ref;
      out["exact_match"] = metrics::exact_match_accuracy({{words, ref}});
    }
  }
  write_json(run_path(g, "captions/" + name + ".json"), out);
  log("caption for " + name + ": " + text);
  return 0;
}

int cmd_probe(Settings& s, const Globals& g, RunLog& log) {
  training::ProbeOptions opt;
  opt.train_split = s.str("train_split");
  opt.eval_split = s.str("eval_split");
  opt.epochs = static_cast<int>(s.integer("epochs"));
  opt.lr = s.real("lr");
  opt.seed = static_cast<std::uint64_t>(s.integer("seed"));
  const auto report = training::fit_linear_probe(s.str("checkpoint"), s.str("target"), s.str("manifest"), opt);
  write_json(run_path(g, "probe_" + s.str("target") + ".json"), report.to_json());
  for (const auto& [split, values] : report.splits)
    for (const auto& [name, v] : values) log(split + " " + name + " " + std::to_string(v));
  return 0;
}

int cmd_transfer_bench(Settings& s, const Globals& g, RunLog& log) {
  fs::path manifest_path = s.str("manifest");
  if (manifest_path.empty()) {
    manifest_path = run_path(g, "kitchen/manifest.json");
    if (!fs::exists(manifest_path)) {
      auto spec = toyworld::kitchen_toy_spec();
      spec.height = spec.width = static_cast<int>(s.integer("kitchen_size"));
      toyworld::CorpusOptions opt;
      opt.balanced = true;
      log("generating kitchen corpus in " + manifest_path.parent_path().string());
      toyworld::generate_toy_corpus(spec, static_cast<int>(s.integer("kitchen_clips")),
                                    static_cast<std::uint64_t>(s.integer("seed")), manifest_path.parent_path(), opt);
    }
  }
  const Manifest m = load_manifest(manifest_path.string());

  std::vector<std::unique_ptr<transfer::BackboneAdapter>> owned;
  const auto names = s.list("names");
  const auto backbones = s.list("backbones");
  if (backbones.empty()) throw UsageError("backbones must list at least one checkpoint or 'pixels'");
  if (!names.empty() && names.size() != backbones.size()) throw UsageError("names must match backbones one to one");
  for (std::size_t i = 0; i < backbones.size(); ++i) {
    const auto& b = backbones[i];
    if (b.rfind("pixels", 0) == 0) {
      const int grid = b.size() > 6 ? std::stoi(b.substr(b.find(':') + 1)) : 4;
      owned.push_back(std::make_unique<transfer::PixelGridAdapter>(grid));
    } else {
      owned.push_back(std::make_unique<transfer::JointModelAdapter>(b, names.empty() ? "" : names[i]));
    }
  }
  std::vector<transfer::BackboneAdapter*> adapters;
  for (auto& a : owned) adapters.push_back(a.get());

  transfer::BenchmarkSpec spec;
  spec.heads.clear();
  for (const auto& h : s.list("heads")) spec.heads.push_back(transfer::parse_head_kind(h));
  spec.shots.clear();
  for (const auto& k : s.list("shots")) spec.shots.push_back(transfer::parse_shots(k));
  spec.runs = static_cast<int>(s.integer("runs"));
  spec.seed = static_cast<std::uint64_t>(s.integer("seed"));
  spec.head_options.max_epochs = static_cast<int>(s.integer("max_epochs"));
  spec.head_options.patience = static_cast<int>(s.integer("patience"));
  spec.head_options.lr = s.real("lr");
  spec.head_options.batch_size = static_cast<int>(s.integer("batch_size"));
  spec.head_options.hidden = static_cast<int>(s.integer("hidden"));

  const auto report = transfer::run_benchmark(adapters, m, spec);
  write_json(run_path(g, "transfer_report.json"), report.to_json());
  transfer::write_benchmark_plot(report, run_path(g, "transfer_plot.svg"));
  for (const auto& c : report.cells) {
    std::ostringstream line;
    line << c.backbone << " " << c.head << " " << (c.shots == "full" ? "full" : c.shots + "-shot") << " mean " << std::fixed << std::setprecision(4)
         << c.mean;
    if (c.ci95) line << " +/- " << *c.ci95;
    log(line.str());
  }
  for (const auto& w : report.warnings) log("warning: " + w);
  return 0;
}

int cmd_explain(Settings& s, const Globals& g, RunLog& log) {
  JointModel model = JointModel::load(s.str("checkpoint"));
  std::optional<Manifest> manifest;
  if (s.str("frames").empty()) manifest = load_manifest(s.str("manifest"));
  if (s.str("frames").empty() && s.str("video").empty()) throw UsageError("explain needs video=<id> or frames=<dir>");
  const auto clip = clip_for(model, manifest ? &*manifest : nullptr, s.str("video"), s.str("frames"));
  const std::string name = s.str("video").empty() ? fs::path(s.str("frames")).filename().string() : s.str("video");

  explain::SaliencyVolume vol;
  std::string tag;
  json meta;
  if (s.str("mode") == "class") {
    int cls = static_cast<int>(s.integer("class"));
    if (cls < 0) {
      const Tensor p = model.classifier().classify(model.encode(videoio::clip_tensor(clip)));
      cls = static_cast<int>(std::max_element(p.data(), p.data() + p.size()) - p.data());
    }
    vol = explain::grad_cam_class(model, clip, cls);
    tag = name + "-class" + std::to_string(cls);
  } else if (s.str("mode") == "token") {
    const auto vocab = model_vocabulary(model.config());
    const Tensor h = model.encode(videoio::clip_tensor(clip));
    const auto caption = model.decoder().decode_greedy(h);
    const int pos = static_cast<int>(s.integer("position"));
    vol = explain::grad_cam_token(model, clip, caption, pos);
    tag = name + "-token" + std::to_string(pos);
    meta["caption"] = corpus::decode_tokens(caption, vocab);
    meta["token"] = vocab.token_at(caption.indices.at(std::size_t(pos)));
  } else {
    throw UsageError("mode must be class or token");
  }
  const fs::path dir = run_path(g, s.str("out_dir"));
  explain::render_saliency_overlay(clip, vol, dir / (tag + ".png"), static_cast<int>(s.integer("columns")));
  if (s.boolean("npy")) explain::write_npy(vol.values, dir / (tag + ".npy"));
  meta.update(vol.metadata());
  meta["video"] = name;
  write_json(dir / (tag + ".json"), meta);
  log("saliency " + vol.target_layer + " " + vol.objective + " -> " + (dir / (tag + ".png")).string());
  return 0;
}

// Collects every report in the run directory, validates it, and writes a
// combined JSON plus a markdown summary and a training-curve plot.
int cmd_report(Settings& s, const Globals& g, RunLog& log) {
  json combined = json::object();
  std::ostringstream md;
  md << "# Run report\n\n";
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(g.run_dir))
    if (e.path().extension() == ".json" && e.path().filename() != fs::path(s.str("out")).filename()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const json j = read_json(f);
    const std::string key = f.stem().string();
    if (key == "transfer_report") {
      const auto rep = transfer::BenchmarkReport::from_json(j);
      md << "## Transfer\n\n| backbone | head | shots | mean | ci95 |\n|---|---|---|---|---|\n";
      for (const auto& c : rep.cells)
        md << "| " << c.backbone << " | " << c.head << " | " << c.shots << " | " << std::fixed << std::setprecision(4)
           << c.mean << " | " << (c.ci95 ? std::to_string(*c.ci95) : "n/a") << " |\n";
      md << "\n";
    } else if (j.contains("splits")) {
      const auto rep = training::MetricsReport::from_json(j);
      rep.validate();
      md << "## " << key << "\n\n| split | metric | value |\n|---|---|---|\n";
      for (const auto& [split, values] : rep.splits)
        for (const auto& [name, v] : values) md << "| " << split << " | " << name << " | " << std::fixed << std::setprecision(4) << v << " |\n";
      md << "\n";
    } else if (key != "vocab_report") {
      continue;
    }
    combined[key] = j;
  }
  if (combined.empty()) throw std::runtime_error("no reports found in " + g.run_dir.string());

  if (combined.contains("train_report")) {
    const auto& hist = combined["train_report"]["extra"].value("history", json::array());
    std::vector<std::pair<double, double>> pts;
    for (const auto& h : hist)
      if (h.contains("train_loss") && h["train_loss"].is_number()) pts.emplace_back(h["epoch"].get<double>(), h["train_loss"].get<double>());
    if (!pts.empty()) {
      double ymax = 0;
      for (auto& p : pts) ymax = std::max(ymax, p.second);
      const double W = 480, H = 260, L = 50, T = 20, PW = 400, PH = 200;
      const double xmax = std::max(1.0, pts.back().first);
      std::ofstream svg(run_path(g, "training_curve.svg"));
      svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
          << "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
          << "<line x1=\"" << L << "\" y1=\"" << T + PH << "\" x2=\"" << L + PW << "\" y2=\"" << T + PH << "\" stroke=\"black\"/>\n"
          << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + PH << "\" stroke=\"black\"/>\n"
          << "<text x=\"" << L + PW / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">epoch</text>\n"
          << "<text x=\"" << L - 6 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << ymax << "</text>\n"
          << "<polyline fill=\"none\" stroke=\"#4C72B0\" stroke-width=\"2\" points=\"";
      for (auto& [x, y] : pts) svg << L + PW * x / xmax << "," << T + PH * (1 - y / std::max(ymax, 1e-12)) << " ";
      svg << "\"/>\n</svg>\n";
    }
  }
  const fs::path out = run_path(g, s.str("out"));
  write_json(out, combined);
  std::ofstream(run_path(g, "report.md")) << md.str();
  log("combined " + std::to_string(combined.size()) + " reports -> " + out.string());
  return 0;
}

// ------------------------------------------------------------ key tables

using Defaults = std::vector<std::pair<std::string, std::string>>;

Defaults defaults_for(const std::string& cmd, const Globals& g) {
  const std::string manifest = run_path(g, "data/manifest.json").string();
  const std::string ckpt = run_path(g, "checkpoints/best.ckpt").string();
  if (cmd == "synth-data")
    return {{"spec", "toy"}, {"clips", "2000"}, {"height", "32"}, {"width", "32"}, {"duration_s", ""},
            {"noise", ""},   {"balanced", "false"}, {"seed", "0"}, {"out", "data"}};
  if (cmd == "build-vocab")
    return {{"manifest", manifest}, {"target", "full"}, {"min_occurrences", "6"}, {"split", "train"}, {"out", ""}};
  if (cmd == "train") {
    Defaults d;
    const training::TrainConfig defaults;
    const json j = defaults.to_json();
    for (const auto& key : training::TrainConfig::keys()) {
      const auto& v = j.at(key);
      d.emplace_back(key, v.is_string() ? v.get<std::string>() : v.dump());
    }
    d.emplace_back("manifest", manifest);
    d.emplace_back("vocab", run_path(g, "vocab.txt").string());
    return d;
  }
  if (cmd == "eval")
    return {{"checkpoint", ckpt}, {"manifest", manifest}, {"split", "val"}, {"metrics", ""}, {"batch_size", "32"}, {"out", ""}};
  if (cmd == "caption")
    return {{"checkpoint", ckpt}, {"manifest", manifest}, {"video", ""}, {"frames", ""}, {"max_len", "14"}};
  if (cmd == "probe")
    return {{"checkpoint", ckpt}, {"manifest", manifest}, {"target", "fine"}, {"train_split", "train"},
            {"eval_split", "val"}, {"epochs", "300"}, {"lr", "0.01"}, {"seed", "0"}};
  if (cmd == "transfer-bench")
    return {{"backbones", ckpt}, {"names", ""},        {"manifest", ""},     {"kitchen_clips", "390"},
            {"kitchen_size", "32"}, {"heads", "logistic,mlp512,bilstm128"}, {"shots", "1,5,full"},
            {"runs", "10"},       {"seed", "0"},       {"max_epochs", "100"}, {"patience", "10"},
            {"lr", "0.001"},      {"batch_size", "32"}, {"hidden", "0"}};
  if (cmd == "explain")
    return {{"checkpoint", ckpt}, {"manifest", manifest}, {"video", ""},      {"frames", ""},  {"mode", "class"},
            {"class", "-1"},      {"position", "1"},     {"columns", "8"},   {"npy", "true"}, {"out_dir", "explain"}};
  if (cmd == "report") return {{"out", "report.json"}};
  throw std::logic_error("no key table for " + cmd);
}

using Handler = int (*)(Settings&, const Globals&, RunLog&);

const std::vector<std::tuple<std::string, std::string, Handler>>& commands() {
  static const std::vector<std::tuple<std::string, std::string, Handler>> table = {
      {"synth-data", "Render a synthetic toyworld corpus", cmd_synth_data},
      {"build-vocab", "Build the caption vocabulary from training captions", cmd_build_vocab},
      {"train", "Train a joint classification/captioning model", cmd_train},
      {"eval", "Evaluate a checkpoint on a split", cmd_eval},
      {"caption", "Greedy caption with per-token log-probabilities", cmd_caption},
      {"probe", "Linear probe on frozen encoder features", cmd_probe},
      {"transfer-bench", "Frozen-feature transfer benchmark with plot", cmd_transfer_bench},
      {"explain", "Grad-CAM saliency overlay for a class or caption token", cmd_explain},
      {"report", "Validate and combine the run's reports", cmd_report},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained video understanding toolkit.\nSettings are key=value; see `<subcommand> --help`."};
  app.set_help_all_flag("--help-all");
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  app.add_option("--run-dir", run_dir, std::string("Run directory (default $") + kRunDirEnv + " or ./run)");
  app.add_option("--seed", seed, "Seed overriding every seed key");
  app.add_flag("--deterministic", deterministic, "Force deterministic execution");
  app.require_subcommand(1);

  struct Invocation {
    std::string config;
    std::vector<std::string> overrides;
  };
  std::map<std::string, Invocation> inv;
  for (const auto& [name, help, handler] : commands()) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", inv[name].config, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("overrides", inv[name].overrides, "key=value overrides");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  Globals g;
  if (!run_dir.empty()) g.run_dir = run_dir;
  else if (const char* env = std::getenv(kRunDirEnv)) g.run_dir = env;
  else g.run_dir = "run";
  g.seed = seed;
  g.deterministic = deterministic;
  if (deterministic) omp_set_dynamic(0);

  try {
    fs::create_directories(g.run_dir);
    RunLog log(g.run_dir);
    Settings s(cmd, defaults_for(cmd, g));
    resolve(s, cmd, inv[cmd].config, inv[cmd].overrides, g, log);
    const auto start = std::chrono::steady_clock::now();
    Handler handler = nullptr;
    for (const auto& [name, help, h] : commands())
      if (name == cmd) handler = h;
    const int rc = handler(s, g, log);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log("[" + cmd + "] done in " + std::to_string(secs) + " s");
    return rc;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << sub->help();
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << sub->help();
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << std::endl;
    return 1;
  }
}
