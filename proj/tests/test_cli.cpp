#include <sys/wait.h>

#include <cstdlib>
#include <map>

#include "doctest.h"
#include "json.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli_output.txt";
  const std::string cmd = std::string(FINEGRAIN_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, testutil::read_text(log)};
}

// Path -> (size, mtime) of every file below dir.
std::map<std::string, std::pair<std::uintmax_t, fs::file_time_type>> snapshot(const fs::path& dir) {
  std::map<std::string, std::pair<std::uintmax_t, fs::file_time_type>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().string()] = {e.file_size(), e.last_write_time()};
  return out;
}

nlohmann::json without_timing(nlohmann::json j) {
  j.erase("wall_time_s");
  if (j.contains("extra")) {
    j["extra"].erase("epoch_seconds");
    for (auto& h : j["extra"].value("history", nlohmann::json::array())) h.erase("seconds");
  }
  return j;
}

const char* kTinyModel =
    "channels_3d=4 channels_2d=4 blocks=2 lstm_hidden=8 embed_dim=8 decoder_hidden=8 frames=8 resize=16 crop=8 "
    "batch_size=16 max_epochs=2 lr=0.003 anneal_steps=8";

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  const auto dir = testutil::scratch_dir("cli_usage");
  const std::string rd = "--run-dir " + (dir / "run").string() + " ";
  auto r = run(rd + "frobnicate", dir);
  CHECK(r.code == 2);
  CHECK(r.out.find("Usage") != std::string::npos);
  CHECK(run(rd + "--no-such-flag synth-data", dir).code == 2);
  r = run(rd + "synth-data no_such_key=1", dir);
  CHECK(r.code == 2);
  CHECK(r.out.find("no_such_key") != std::string::npos);
  CHECK(run(rd + "synth-data clips=many", dir).code == 2);
  CHECK(run(rd + "train task=bogus", dir).code == 2);
  testutil::write_text(dir / "bad.cfg", "clips = 4\nmystery = 1\n");
  CHECK(run(rd + "synth-data -c " + (dir / "bad.cfg").string(), dir).code == 2);
  CHECK(run("", dir).code == 2);
}

TEST_CASE("runtime failures exit with status 1 and one line") {
  const auto dir = testutil::scratch_dir("cli_runtime");
  const auto r = run("--run-dir " + (dir / "run").string() + " eval manifest=" + (dir / "missing.json").string(), dir);
  CHECK(r.code == 1);
  const auto pos = r.out.find("error: ");
  REQUIRE(pos != std::string::npos);
  CHECK(r.out.find('\n', pos) == r.out.size() - 1);
}

TEST_CASE("pipeline on a tiny corpus") {
  const auto dir = testutil::scratch_dir("cli_pipeline");
  const fs::path a = dir / "a", b = dir / "b";
  const std::string ra = "--run-dir " + a.string() + " --seed 4 ";
  REQUIRE(run(ra + "synth-data clips=96 height=16 width=16 duration_s=1 balanced=true", dir).code == 0);
  CHECK(fs::exists(a / "data/manifest.json"));
  REQUIRE(run(ra + "build-vocab min_occurrences=2", dir).code == 0);
  CHECK(fs::exists(a / "vocab.txt"));
  REQUIRE(run(ra + "train task=caption_full " + kTinyModel, dir).code == 0);
  CHECK(fs::exists(a / "checkpoints/best.ckpt"));
  const auto resolved = testutil::read_text(a / "train.config");
  CHECK(resolved.find("seed = 4") != std::string::npos);
  CHECK(resolved.find("channels_3d = 4") != std::string::npos);

  // Rerunning from the logged config reproduces the report.
  const auto first = nlohmann::json::parse(testutil::read_text(a / "train_report.json"));
  fs::copy_file(a / "train.config", dir / "replay.cfg");
  REQUIRE(run(ra + "train -c " + (dir / "replay.cfg").string(), dir).code == 0);
  const auto second = nlohmann::json::parse(testutil::read_text(a / "train_report.json"));
  CHECK(without_timing(first) == without_timing(second));

  REQUIRE(run(ra + "eval split=val", dir).code == 0);
  const auto eval = nlohmann::json::parse(testutil::read_text(a / "eval_val.json"));
  CHECK(eval["splits"]["val"].contains("exact_match"));
  CHECK(eval["splits"]["val"].contains("accuracy"));

  const auto manifest = nlohmann::json::parse(testutil::read_text(a / "data/manifest.json"));
  const std::string video = manifest["splits"]["val"][0];
  auto r = run(ra + "caption video=" + video, dir);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("caption: ") != std::string::npos);
  CHECK(r.out.find("total log-prob") != std::string::npos);
  CHECK(fs::exists(a / "captions" / (video + ".json")));

  REQUIRE(run(ra + "probe epochs=10", dir).code == 0);
  CHECK(fs::exists(a / "probe_fine.json"));

  // A second run directory reads the first one's artifacts without touching them.
  const auto before = snapshot(a);
  const std::string rb = "--run-dir " + b.string() + " ";
  const std::string src = " checkpoint=" + (a / "checkpoints/best.ckpt").string() +
                          " manifest=" + (a / "data/manifest.json").string();
  REQUIRE(run(rb + "eval" + src, dir).code == 0);
  REQUIRE(run(rb + "explain video=" + video + src, dir).code == 0);
  REQUIRE(run(rb + "explain mode=token position=1 video=" + video + src, dir).code == 0);
  REQUIRE(run(rb + "transfer-bench kitchen_clips=195 kitchen_size=16 runs=2 max_epochs=2 hidden=8 backbones=pixels," +
                  (a / "checkpoints/best.ckpt").string(),
              dir)
              .code == 0);
  CHECK(snapshot(a) == before);

  const auto bench = nlohmann::json::parse(testutil::read_text(b / "transfer_report.json"));
  CHECK(bench["cells"].size() == 2 * 3 * 3);
  for (const auto& c : bench["cells"]) {
    CHECK(c["scores"].size() == 2);
    CHECK(c.contains("ci95"));
  }
  CHECK(testutil::read_text(b / "transfer_plot.svg").rfind("<svg", 0) == 0);
  bool png = false, npy = false;
  for (const auto& e : fs::directory_iterator(b / "explain")) {
    png |= e.path().extension() == ".png";
    npy |= e.path().extension() == ".npy";
  }
  CHECK(png);
  CHECK(npy);

  REQUIRE(run(rb + "report", dir).code == 0);
  const auto rep = nlohmann::json::parse(testutil::read_text(b / "report.json"));
  CHECK(rep.contains("transfer_report"));
  CHECK(rep.contains("eval_val"));
  CHECK(fs::exists(b / "report.md"));
  CHECK(testutil::read_text(b / "log.txt").find("resolved config") != std::string::npos);
}

TEST_CASE("run directory from the environment") {
  const auto dir = testutil::scratch_dir("cli_env");
  const std::string env = "FINEGRAIN_RUN_DIR=" + (dir / "envrun").string() + " ";
  const std::string cmd = env + FINEGRAIN_CLI + " synth-data clips=8 height=16 width=16 duration_s=1 > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "envrun/data/manifest.json"));
}
