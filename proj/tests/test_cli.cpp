#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cadnerf/trainer.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "cadnerf_cli_test";

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const fs::path out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string(CADNERF_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Library and three painted cuboid views shared by the cases below.
void ensure_fixture() {
  static bool done = false;
  if (done) return;
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  const Result lib = run("build-library --basic-shapes cuboid,sphere --poses 30 --resolution 48 --out " +
                         (kRoot / "lib").string());
  REQUIRE(lib.code == 0);
  const Result views = run("render --mesh cuboid --azimuths -120,-20,80 --elevation 30 --size 24 --out " +
                           (kRoot / "views").string());
  REQUIRE(views.code == 0);
  done = true;
}

std::string view_list() {
  const fs::path v = kRoot / "views";
  return (v / "view_000.png").string() + "," + (v / "view_001.png").string() + "," + (v / "view_002.png").string();
}

const std::string kTinyNet = " --hidden 8 --feature 8 --deform_hidden 8 --color_hidden 8 --resnet_blocks 1"
                             " --batch_rays 16 --samples 8 --occupancy_batch 32 --occupancy_pool 256";

}  // namespace

TEST_CASE("build-library writes a library") {
  ensure_fixture();
  CHECK(fs::exists(kRoot / "lib"));
  CHECK(fs::exists(kRoot / "views" / "poses.json"));
  CHECK(fs::exists(kRoot / "views" / "mask_002.png"));
}

TEST_CASE("retrieve prints the retrieval JSON on stdout") {
  ensure_fixture();
  const Result r = run("retrieve --library " + (kRoot / "lib").string() + " --images " + view_list() + " --k 10");
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(r.out);
  CHECK(doc.at("model_id") == "cuboid");
  CHECK(doc.at("views").size() + doc.at("discarded").size() == 3);
  CHECK(doc.at("views").size() >= 2);
}

TEST_CASE("train with a missing library is a data error") {
  ensure_fixture();
  {
    std::ofstream cfg(kRoot / "run.cfg");
    cfg << "samples = 8\n";
  }
  const Result r = run("train --config " + (kRoot / "run.cfg").string() + " --out " + (kRoot / "r0").string());
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  const Result s = run("train --library " + (kRoot / "nowhere").string() + " --images " + view_list());
  CHECK(s.code == 3);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("build-library --bogus 1 --out x").code == 2);
  CHECK(run("train --samples lots").code == 2);
  ensure_fixture();
  {
    std::ofstream cfg(kRoot / "bad.cfg");
    cfg << "no_such_key = 1\n";
  }
  const Result r = run("train --config " + (kRoot / "bad.cfg").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("no_such_key") != std::string::npos);
}

TEST_CASE("train --help documents every config key") {
  const Result r = run("train --help");
  CHECK(r.code == 0);
  for (const auto& key : cadnerf::config_keys()) {
    CAPTURE(key.name);
    CHECK(r.out.find("--" + key.name) != std::string::npos);
  }
  CHECK(r.out.find("--seed") != std::string::npos);
}

TEST_CASE("a short training run writes the run directory and can be rendered") {
  ensure_fixture();
  const fs::path out = kRoot / "r1";
  const Result r = run("--seed 3 train --desk 16" + kTinyNet + " --library " + (kRoot / "lib").string() +
                       " --images " + view_list() + " --out " + out.string());
  REQUIRE(r.code == 0);
  for (const char* f : {"run.cfg", "retrieval.json", "poses_init.json", "poses_optimized.json", "loss.csv",
                        "train_psnr.csv", "checkpoints/phase3.ckpt"}) {
    CAPTURE(f);
    CHECK(fs::exists(out / f));
  }
  CHECK(slurp(out / "run.cfg").find("seed = 3") != std::string::npos);
  const Result rr = run("render --run " + out.string() + " --out " + (kRoot / "renders").string());
  CHECK(rr.code == 0);
  CHECK(fs::exists(kRoot / "renders" / "render_000.png"));
}

TEST_CASE("a diverging run exits with 4") {
  ensure_fixture();
  const Result r = run("train --desk 16" + kTinyNet + " --learning_rate 1e200 --library " + (kRoot / "lib").string() +
                       " --images " + view_list() + " --out " + (kRoot / "r2").string());
  CHECK(r.code == 4);
  CHECK(r.err.find("diverge") != std::string::npos);
}
