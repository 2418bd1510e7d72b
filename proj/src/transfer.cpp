#include "finegrain/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "finegrain/errors.hpp"
#include "finegrain/seeding.hpp"
#include "finegrain/videoio.hpp"

namespace finegrain::transfer {

using nlohmann::json;

namespace {

constexpr int kClipBatch = 16;

Tensor stack_rows(const std::vector<const Sequence*>& seqs) {
  const int B = static_cast<int>(seqs.size()), T = seqs[0]->dim(0), D = seqs[0]->dim(1);
  Tensor x({B, T, D});
  for (int b = 0; b < B; ++b) std::copy(seqs[b]->data(), seqs[b]->data() + seqs[b]->size(), x.data() + std::size_t(b) * T * D);
  return x;
}

std::vector<nn::Param> snapshot(const nn::ParamList& ps) {
  std::vector<nn::Param> out;
  for (const auto* p : ps) out.push_back(*p);
  return out;
}

void restore(const nn::ParamList& ps, const std::vector<nn::Param>& saved) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = saved[i].value;
}

}  // namespace

// ------------------------------------------------------------ adapters

JointModelAdapter::JointModelAdapter(const std::filesystem::path& checkpoint, std::string identity)
    : model_(JointModel::load(checkpoint)), identity_(identity.empty() ? checkpoint.stem().string() : identity) {
  if (identity.empty() && !model_.config().task.empty()) identity_ = model_.config().task;
}

JointModelAdapter::JointModelAdapter(JointModel model, std::string identity)
    : model_(std::move(model)), identity_(std::move(identity)) {}

Tensor JointModelAdapter::extract(const std::vector<std::vector<Image>>& clips) {
  const int D = feature_dim();
  const auto& geometry = model_.config().geometry;
  Tensor out({static_cast<int>(clips.size()), D});
  for (std::size_t start = 0; start < clips.size(); start += kClipBatch) {
    const std::size_t end = std::min(clips.size(), start + kClipBatch);
    std::vector<videoio::VideoClip> vc;
    for (std::size_t i = start; i < end; ++i) {
      if (static_cast<int>(clips[i].size()) != clip_len()) throw std::invalid_argument("clip length mismatch");
      vc.push_back(videoio::make_clip(clips[i], geometry, videoio::Phase::Eval, 0));
    }
    std::vector<const videoio::VideoClip*> ptrs;
    for (const auto& c : vc) ptrs.push_back(&c);
    const Tensor h = model_.encode(videoio::stack_clips(ptrs), nn::Mode::Eval);
    std::copy(h.data(), h.data() + h.size(), out.data() + start * D);
  }
  return out;
}

Tensor PixelGridAdapter::extract(const std::vector<std::vector<Image>>& clips) {
  const int D = feature_dim();
  Tensor out({static_cast<int>(clips.size()), D});
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].size() != 1) throw std::invalid_argument("pixel adapter consumes one frame per clip");
    const Image& im = clips[i][0];
    std::vector<double> sum(std::size_t(D), 0.0), count(std::size_t(grid_ * grid_), 0.0);
    for (int y = 0; y < im.height; ++y) {
      for (int x = 0; x < im.width; ++x) {
        const int cell = (y * grid_ / im.height) * grid_ + x * grid_ / im.width;
        count[cell] += 1.0;
        for (int c = 0; c < 3; ++c) sum[std::size_t(c) * grid_ * grid_ + cell] += im.pixel(x, y)[c] / 255.0;
      }
    }
    for (int d = 0; d < D; ++d) out[std::size_t(i) * D + d] = sum[d] / std::max(1.0, count[d % (grid_ * grid_)]);
  }
  return out;
}

Tensor extract_feature_sequence(BackboneAdapter& adapter, const std::vector<Image>& frames) {
  if (frames.empty()) throw std::invalid_argument("extract_feature_sequence: video has no frames");
  const int T = static_cast<int>(frames.size()), L = adapter.clip_len();
  if (L < 1) throw std::invalid_argument("adapter clip_len must be positive");
  const int n_clips = (T + L - 1) / L;
  std::vector<std::vector<Image>> clips(static_cast<std::size_t>(n_clips));
  for (int c = 0; c < n_clips; ++c)
    for (int k = 0; k < L; ++k) clips[c].push_back(frames[std::size_t(std::min(T - 1, c * L + k))]);
  const Tensor f = adapter.extract(clips);
  const int D = f.dim(1);
  Tensor out({T, D});
  for (int t = 0; t < T; ++t) std::copy(f.data() + std::size_t(t / L) * D, f.data() + std::size_t(t / L + 1) * D, out.data() + std::size_t(t) * D);
  return out;
}

// ------------------------------------------------------------ heads

HeadKind parse_head_kind(const std::string& name) {
  if (name == "logistic") return HeadKind::Logistic;
  if (name == "mlp512") return HeadKind::Mlp512;
  if (name == "bilstm128") return HeadKind::BiLstm128;
  throw ConfigError("unknown head '" + name + "' (expected logistic, mlp512 or bilstm128)");
}

std::string head_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::Logistic: return "logistic";
    case HeadKind::Mlp512: return "mlp512";
    case HeadKind::BiLstm128: return "bilstm128";
  }
  return "?";
}

TransferHead::TransferHead(HeadKind kind, int feature_dim, int classes, std::uint64_t seed, int hidden)
    : kind_(kind), classes_(classes) {
  if (classes < 2) throw std::invalid_argument("transfer head needs at least two classes");
  std::mt19937_64 rng(derive_seed({seed, 0x4EAD}));
  switch (kind) {
    case HeadKind::Logistic:
      fc1_ = nn::Linear("probe.fc", feature_dim, classes, rng);
      break;
    case HeadKind::Mlp512: {
      const int h = hidden > 0 ? hidden : 512;
      fc1_ = nn::Linear("probe.fc1", feature_dim, h, rng);
      fc2_ = nn::Linear("probe.fc2", h, classes, rng);
      break;
    }
    case HeadKind::BiLstm128: {
      const int h = hidden > 0 ? hidden : 128;
      lstm_ = nn::BiLstm("probe.lstm", feature_dim, h, rng);
      fc1_ = nn::Linear("probe.fc", 2 * h, classes, rng);
      break;
    }
  }
}

nn::ParamList TransferHead::params() {
  nn::ParamList ps;
  fc1_.collect(ps);
  if (kind_ == HeadKind::Mlp512) fc2_.collect(ps);
  if (kind_ == HeadKind::BiLstm128) lstm_.collect(ps);
  return ps;
}

Tensor TransferHead::step_logits(const Tensor& x) const {
  if (kind_ == HeadKind::Logistic) return fc1_.infer(x);
  Tensor h = fc1_.infer(x);
  for (double& v : h.values()) v = std::max(0.0, v);
  return fc2_.infer(h);
}

Tensor TransferHead::predict_proba(const std::vector<Sequence>& seqs) const {
  Tensor out({static_cast<int>(seqs.size()), classes_});
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const Sequence& s = seqs[i];
    double* row = out.data() + i * classes_;
    if (kind_ == HeadKind::BiLstm128) {
      Tensor x = s;
      x.reshape({1, s.dim(0), s.dim(1)});
      lstm_.forward(x);
      const Tensor p = nn::softmax_rows(fc1_.infer(lstm_.final_states()));
      std::copy(p.data(), p.data() + classes_, row);
    } else {
      const Tensor p = nn::softmax_rows(step_logits(s));
      const int T = s.dim(0);
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < classes_; ++k) row[k] += p[std::size_t(t) * classes_ + k] / T;
    }
  }
  return out;
}

std::vector<int> TransferHead::predict(const std::vector<Sequence>& seqs) const {
  const Tensor p = predict_proba(seqs);
  std::vector<int> out;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const double* row = p.data() + i * classes_;
    out.push_back(static_cast<int>(std::max_element(row, row + classes_) - row));
  }
  return out;
}

double TransferHead::accuracy(const std::vector<Sequence>& seqs, const std::vector<int>& labels) const {
  if (seqs.empty()) throw std::invalid_argument("accuracy over an empty set");
  const auto pred = predict(seqs);
  long hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return double(hits) / double(pred.size());
}

double TransferHead::loss(const std::vector<Sequence>& seqs, const std::vector<int>& labels) const {
  const Tensor p = predict_proba(seqs);
  double s = 0.0;
  for (std::size_t i = 0; i < seqs.size(); ++i) s -= std::log(std::max(1e-300, p[i * classes_ + labels[i]]));
  return s / double(seqs.size());
}

double TransferHead::loss_and_grad(const std::vector<const Sequence*>& batch, const std::vector<int>& labels) {
  const Tensor x = stack_rows(batch);
  const int B = x.dim(0), T = x.dim(1), D = x.dim(2);
  Tensor grad;
  if (kind_ == HeadKind::BiLstm128) {
    lstm_.forward(x);
    const double loss = nn::softmax_cross_entropy(fc1_.forward(lstm_.final_states()), labels, &grad);
    lstm_.backward_final(fc1_.backward(grad));
    return loss;
  }
  // Every time step carries the video label; equal lengths make the row mean
  // equal to the mean over videos of the per-video time average.
  Tensor rows = x;
  rows.reshape({B * T, D});
  std::vector<int> step_labels;
  for (int b = 0; b < B; ++b) step_labels.insert(step_labels.end(), std::size_t(T), labels[b]);
  if (kind_ == HeadKind::Logistic) {
    const double loss = nn::softmax_cross_entropy(fc1_.forward(rows), step_labels, &grad);
    fc1_.backward(grad);
    return loss;
  }
  Tensor h = fc1_.forward(rows);
  for (double& v : h.values()) v = std::max(0.0, v);
  const double loss = nn::softmax_cross_entropy(fc2_.forward(h), step_labels, &grad);
  Tensor dh = fc2_.backward(grad);
  for (std::size_t i = 0; i < dh.size(); ++i)
    if (h[i] <= 0.0) dh[i] = 0.0;
  fc1_.backward(dh);
  return loss;
}

FitResult fit_transfer_head(const std::vector<Sequence>& features, const std::vector<int>& labels, int classes,
                            HeadKind kind, std::uint64_t seed, const HeadOptions& options) {
  if (features.size() != labels.size() || features.empty()) throw std::invalid_argument("fit_transfer_head: bad inputs");
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw std::out_of_range("transfer label out of range");
    by_class[labels[i]].push_back(static_cast<int>(i));
  }
  for (int k = 0; k < classes; ++k)
    if (by_class[k].empty()) throw ValidationError("class " + std::to_string(k) + " has no training samples");

  std::mt19937_64 rng(derive_seed({seed, 0xF17}));
  std::vector<int> train_idx, hold_idx;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_hold = static_cast<std::size_t>(options.holdout_fraction * double(members.size()));
    hold_idx.insert(hold_idx.end(), members.begin(), members.begin() + n_hold);
    train_idx.insert(train_idx.end(), members.begin() + n_hold, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(hold_idx.begin(), hold_idx.end());
  std::vector<Sequence> hold_x;
  std::vector<int> hold_y;
  for (int i : hold_idx) hold_x.push_back(features[i]), hold_y.push_back(labels[i]);

  FitResult fit;
  fit.head = std::make_unique<TransferHead>(kind, features[0].dim(1), classes, seed, options.hidden);
  fit.holdout_size = static_cast<int>(hold_idx.size());
  TransferHead& head = *fit.head;
  const auto ps = head.params();
  nn::Adam opt(ps, {options.lr});

  std::map<int, std::vector<int>> buckets;  // sequence length -> training indices
  for (int i : train_idx) buckets[features[i].dim(0)].push_back(i);

  double best = std::numeric_limits<double>::infinity();
  std::vector<nn::Param> best_params = snapshot(ps);
  int since_best = 0;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    for (auto& [len, members] : buckets) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t s = 0; s < members.size(); s += std::size_t(options.batch_size)) {
        std::vector<const Sequence*> batch;
        std::vector<int> y;
        for (std::size_t j = s; j < std::min(members.size(), s + options.batch_size); ++j) {
          batch.push_back(&features[members[j]]);
          y.push_back(labels[members[j]]);
        }
        nn::zero_grads(ps);
        head.loss_and_grad(batch, y);
        opt.step();
      }
    }
    fit.epochs = epoch + 1;
    if (hold_x.empty()) continue;
    const double l = head.loss(hold_x, hold_y);
    if (l < best) {
      best = l;
      best_params = snapshot(ps);
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  if (!hold_x.empty()) {
    restore(ps, best_params);
    fit.best_holdout_loss = best;
  }
  return fit;
}

// ------------------------------------------------------------ episodes

std::string shots_name(const std::optional<int>& shots) { return shots ? std::to_string(*shots) : "full"; }

std::optional<int> parse_shots(const std::string& text) {
  if (text == "full") return std::nullopt;
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size() && v >= 1) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("shots must be a positive integer or 'full', got '" + text + "'");
}

Episode sample_episode(const Manifest& manifest, const EpisodeSpec& spec, int run_index) {
  if (!manifest.splits.count(spec.train_split) || !manifest.splits.count(spec.test_split)) {
    throw ValidationError("manifest lacks the episode splits");
  }
  Episode ep;
  ep.test_ids = manifest.splits.at(spec.test_split);
  if (!spec.shots) {
    ep.train_ids = manifest.splits.at(spec.train_split);
    return ep;
  }
  std::mt19937_64 rng(derive_seed({spec.seed, 0xE915, std::uint64_t(run_index)}));
  const auto by_cat = manifest.split_by_category(spec.train_split);
  for (int k = 0; k < manifest.hierarchy.category_count(); ++k) {
    auto it = by_cat.find(k);
    const int available = it == by_cat.end() ? 0 : static_cast<int>(it->second.size());
    if (*spec.shots > available) {
      throw ValidationError(std::to_string(*spec.shots) + "-shot episode but category " + std::to_string(k) +
                            " has " + std::to_string(available) + " training samples");
    }
    std::vector<std::string> ids = it->second;
    std::shuffle(ids.begin(), ids.end(), rng);
    ep.train_ids.insert(ep.train_ids.end(), ids.begin(), ids.begin() + *spec.shots);
  }
  return ep;
}

// ------------------------------------------------------------ benchmark

std::pair<double, std::optional<double>> mean_ci95(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("mean_ci95 of no scores");
  const double n = double(scores.size());
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  if (scores.size() < 2) return {mean, std::nullopt};
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  return {mean, t * sd / std::sqrt(n)};
}

json BenchmarkReport::to_json() const {
  json cells_j = json::array();
  for (const auto& c : cells) {
    cells_j.push_back({{"backbone", c.backbone},
                       {"head", c.head},
                       {"shots", c.shots},
                       {"runs", c.runs},
                       {"mean", c.mean},
                       {"ci95", c.ci95 ? json(*c.ci95) : json(nullptr)},
                       {"scores", c.scores}});
  }
  return {{"cells", cells_j}, {"warnings", warnings}};
}

BenchmarkReport BenchmarkReport::from_json(const json& j) {
  BenchmarkReport r;
  try {
    for (const auto& c : j.at("cells")) {
      CellResult cell;
      cell.backbone = c.at("backbone").get<std::string>();
      cell.head = c.at("head").get<std::string>();
      cell.shots = c.at("shots").get<std::string>();
      cell.runs = c.at("runs").get<int>();
      cell.mean = c.at("mean").get<double>();
      if (!c.at("ci95").is_null()) cell.ci95 = c.at("ci95").get<double>();
      cell.scores = c.at("scores").get<std::vector<double>>();
      if (static_cast<int>(cell.scores.size()) != cell.runs) throw ValidationError("cell scores do not match runs");
      r.cells.push_back(std::move(cell));
    }
    r.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad benchmark report: ") + e.what());
  }
  return r;
}

BenchmarkReport run_benchmark(const std::vector<BackboneAdapter*>& adapters, const Manifest& manifest,
                              const BenchmarkSpec& spec) {
  if (adapters.empty() || spec.heads.empty() || spec.shots.empty()) throw ConfigError("benchmark needs backbones, heads and shots");
  if (spec.runs < 1) throw ConfigError("benchmark needs at least one run");
  const int K = manifest.hierarchy.category_count();

  // Frames are decoded once and shared by every backbone.
  std::vector<std::string> ids = manifest.splits.count("train") ? manifest.splits.at("train") : std::vector<std::string>{};
  if (!manifest.splits.count("test") || manifest.splits.at("test").empty()) {
    throw ValidationError("benchmark manifest has an empty test split");
  }
  for (const auto& id : manifest.splits.at("test")) ids.push_back(id);
  std::map<std::string, std::vector<Image>> frames;
  for (const auto& id : ids) frames[id] = videoio::load_frame_directory(manifest.frames_dir(manifest.episode(id)));

  BenchmarkReport report;
  for (BackboneAdapter* adapter : adapters) {
    const std::uint64_t before = adapter->parameter_hash();
    std::map<std::string, Sequence> feats;
    for (const auto& [id, f] : frames) feats[id] = extract_feature_sequence(*adapter, f);

    for (HeadKind head : spec.heads) {
      std::map<std::string, double> means;
      for (const auto& shots : spec.shots) {
        CellResult cell;
        cell.backbone = adapter->identity();
        cell.head = head_name(head);
        cell.shots = shots_name(shots);
        cell.runs = spec.runs;
        // Full-split episodes differ only through head initialisation and shuffling.
        for (int run = 0; run < spec.runs; ++run) {
          const Episode ep = sample_episode(manifest, {shots, spec.runs, spec.seed, "train", "test"}, run);
          std::vector<Sequence> xtr, xte;
          std::vector<int> ytr, yte;
          for (const auto& id : ep.train_ids) xtr.push_back(feats.at(id)), ytr.push_back(manifest.episode(id).category);
          for (const auto& id : ep.test_ids) xte.push_back(feats.at(id)), yte.push_back(manifest.episode(id).category);
          const std::uint64_t seed =
              derive_seed({spec.seed, std::uint64_t(run), std::uint64_t(head), std::uint64_t(shots.value_or(0))});
          const auto fit = fit_transfer_head(xtr, ytr, K, head, seed, spec.head_options);
          cell.scores.push_back(fit.head->accuracy(xte, yte));
        }
        const auto [mean, ci] = mean_ci95(cell.scores);
        cell.mean = mean;
        cell.ci95 = ci;
        means[cell.shots] = mean;
        report.cells.push_back(std::move(cell));
      }
      if (means.count("1") && means.count("5") && means["5"] < means["1"]) {
        report.warnings.push_back(adapter->identity() + "/" + head_name(head) + ": 5-shot mean below 1-shot mean");
      }
    }
    if (adapter->parameter_hash() != before) {
      throw std::logic_error("backbone '" + adapter->identity() + "' changed during the benchmark");
    }
  }
  return report;
}

void write_benchmark_plot(const BenchmarkReport& report, const std::filesystem::path& path) {
  // Groups in first-seen order of (backbone, shots); bars in first-seen head order.
  std::vector<std::pair<std::string, std::string>> groups;
  std::vector<std::string> heads;
  for (const auto& c : report.cells) {
    const std::pair<std::string, std::string> g{c.backbone, c.shots};
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    if (std::find(heads.begin(), heads.end(), c.head) == heads.end()) heads.push_back(c.head);
  }
  const char* colors[] = {"#4C72B0", "#DD8452", "#55A868", "#C44E52", "#8172B3"};
  const double bar = 18, gap = 26, left = 60, top = 30, plot_h = 240;
  const double group_w = bar * double(heads.size()) + gap;
  const double width = left + group_w * double(groups.size()) + 160;
  const double height = top + plot_h + 90;
  auto y_of = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0, y = y_of(v);
    svg << "<line x1=\"" << left << "\" x2=\"" << width - 150 << "\" y1=\"" << y << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v
        << "</text>\n";
  }
  svg << "<text x=\"14\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 14 " << top + plot_h / 2
      << ")\" text-anchor=\"middle\">accuracy</text>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double x0 = left + gap / 2 + group_w * double(g);
    for (std::size_t h = 0; h < heads.size(); ++h) {
      auto it = std::find_if(report.cells.begin(), report.cells.end(), [&](const CellResult& c) {
        return c.backbone == groups[g].first && c.shots == groups[g].second && c.head == heads[h];
      });
      if (it == report.cells.end()) continue;
      const double x = x0 + bar * double(h), y = y_of(it->mean);
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar - 2 << "\" height=\"" << top + plot_h - y
          << "\" fill=\"" << colors[h % 5] << "\"/>\n";
      if (it->ci95) {
        const double cx = x + (bar - 2) / 2;
        svg << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << y_of(it->mean - *it->ci95) << "\" y2=\""
            << y_of(it->mean + *it->ci95) << "\" stroke=\"black\"/>\n";
      }
    }
    svg << "<text x=\"" << x0 + bar * double(heads.size()) / 2 << "\" y=\"" << top + plot_h + 16
        << "\" text-anchor=\"middle\">" << groups[g].first << "</text>\n";
    svg << "<text x=\"" << x0 + bar * double(heads.size()) / 2 << "\" y=\"" << top + plot_h + 30
        << "\" text-anchor=\"middle\">" << (groups[g].second == "full" ? "full" : groups[g].second + "-shot")
        << "</text>\n";
  }
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const double y = top + 14 * double(h);
    svg << "<rect x=\"" << width - 140 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << colors[h % 5]
        << "\"/>\n<text x=\"" << width - 124 << "\" y=\"" << y + 9 << "\">" << heads[h] << "</text>\n";
  }
  svg << "</svg>\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot " + path.string());
  out << svg.str();
}

}  // namespace finegrain::transfer
