#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "frameslide/manifest.hpp"

using namespace frameslide;
namespace fs = std::filesystem;

#ifndef FRAMESLIDE_CLI
#error "FRAMESLIDE_CLI must point at the command-line binary"
#endif

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(FRAMESLIDE_CLI) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path work() {
  static fs::path d = [] {
    fs::path p = fs::temp_directory_path() / "frameslide_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::vector<std::pair<std::string, uint64_t>> dir_digests(const fs::path& dir) {
  std::vector<std::pair<std::string, uint64_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json" &&
        e.path().filename() != "run.manifest.json")
      out.emplace_back(fs::relative(e.path(), dir).string(), file_digest(e.path()));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("worldgen: corpus shape, determinism, empty corpus") {
  fs::path c1 = work() / "corpus1";
  CHECK(run("worldgen --kind shapes --count 8 --seed 3 --frames 6 --size 32 --out " + c1.string()) == 0);
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(c1))
    if (e.is_directory()) ++dirs;
  CHECK(dirs == 8);
  REQUIRE(fs::exists(c1 / "manifest.jsonl"));

  // fixed seed reproduces the corpus byte for byte
  fs::path c2 = work() / "corpus2";
  CHECK(run("worldgen --kind shapes --count 8 --seed 3 --frames 6 --size 32 --out " + c2.string()) == 0);
  CHECK(dir_digests(c1) == dir_digests(c2));

  fs::path c0 = work() / "corpus0";
  CHECK(run("worldgen --kind shapes --count 0 --seed 1 --out " + c0.string()) == 0);
  std::ifstream mf(c0 / "manifest.jsonl");
  std::string line;
  CHECK(!std::getline(mf, line));  // empty manifest

  CHECK(run("worldgen --kind bogus --count 1 --out " + (work() / "x").string()) == 2);
}

TEST_CASE("generate: ti2v output layout and double-run determinism") {
  // input image from a generated clip
  fs::path c = work() / "corpus1";
  fs::path img = c / "clip_0000" / "frame_0000.ppm";
  REQUIRE(fs::exists(img));

  std::string flags = "generate --task ti2v --image " + img.string() +
                      " --frames 4 --queue 2 --steps 10 --seed 7 --denoiser analytic"
                      " --world rho=0.5,sigma2=1,mu=0 --out ";
  fs::path o1 = work() / "gen1", o2 = work() / "gen2";
  CHECK(run(flags + o1.string()) == 0);
  CHECK(run(flags + o2.string()) == 0);

  int ppm = 0, lat = 0;
  for (const auto& e : fs::directory_iterator(o1)) {
    if (e.path().extension() == ".ppm") ++ppm;
    if (e.path().extension() == ".lat") ++lat;
  }
  CHECK(ppm == 5);  // frames + 1
  CHECK(lat == 5);
  CHECK(fs::exists(o1 / "manifest.json"));
  CHECK(fs::exists(o1 / "trace.txt"));
  CHECK(fs::exists(o1 / "schedule.csv"));
  CHECK(dir_digests(o1) == dir_digests(o2));

  RunManifest m = RunManifest::load(o1 / "manifest.json");
  CHECK(m.command == "generate");
  CHECK(m.seed == 7);
  CHECK(m.denoiser_id == "analytic");
  CHECK(m.rng_algorithm == Rng::algorithm_name());
  CHECK(m.outputs.size() == m.output_digests.size());
}

TEST_CASE("generate: ddim+resample default combination accepted") {
  fs::path img = work() / "corpus1" / "clip_0000" / "frame_0000.ppm";
  fs::path o = work() / "gen_ddim";
  CHECK(run("generate --task ti2v --image " + img.string() +
            " --frames 2 --queue 2 --steps 50 --ddim 10 --resample 4 --seed 1"
            " --denoiser analytic --world rho=0.5,sigma2=1,mu=0 --out " + o.string()) == 0);
}

TEST_CASE("generate: exit codes for config and io failures") {
  fs::path img = work() / "corpus1" / "clip_0000" / "frame_0000.ppm";
  // bad task name -> config error -> 2
  CHECK(run("generate --task bogus --image " + img.string() + " --out " +
            (work() / "bad1").string()) == 2);
  // missing image -> io error -> 3
  CHECK(run("generate --task ti2v --image /nonexistent.ppm --out " + (work() / "bad2").string()) == 3);
  // invalid resample count -> 2
  CHECK(run("generate --task ti2v --image " + img.string() + " --resample 0 --out " +
            (work() / "bad3").string()) == 2);
  // bad world spec -> 2
  CHECK(run("generate --task ti2v --image " + img.string() +
            " --world rho=2,sigma2=1 --out " + (work() / "bad4").string()) == 2);
}

TEST_CASE("train: steps=0 equals initialization; missing corpus exits 2") {
  fs::path model0 = work() / "model0.bin";
  fs::path model0b = work() / "model0b.bin";
  std::string base = "train --corpus " + (work() / "corpus1").string() +
                     " --null-prob 0.1 --lr 0.001 --seed 5 --window 3 --channels 6 --steps 0 --out ";
  CHECK(run(base + model0.string()) == 0);
  CHECK(run(base + model0b.string()) == 0);
  CHECK(file_digest(model0) == file_digest(model0b));
  CHECK(fs::exists(model0.string() + ".loss.csv"));
  CHECK(fs::exists(model0.string() + ".manifest.json"));

  int code = run("train --corpus /no/such/corpus --steps 1 --out " + (work() / "m.bin").string());
  CHECK(code == 2);
}

TEST_CASE("train then generate with the micro denoiser") {
  fs::path model = work() / "model.bin";
  CHECK(run("train --corpus " + (work() / "corpus1").string() +
            " --steps 30 --null-prob 0.1 --lr 0.001 --seed 5 --window 3 --channels 6 --out " +
            model.string()) == 0);
  fs::path img = work() / "corpus1" / "clip_0000" / "frame_0000.ppm";
  fs::path o = work() / "gen_micro";
  CHECK(run("generate --task ti2v --image " + img.string() +
            " --label 0 --frames 2 --queue 2 --steps 50 --ddim 8 --guidance 1 --seed 2"
            " --denoiser micro:" + model.string() + " --out " + o.string()) == 0);
  RunManifest m = RunManifest::load(o / "manifest.json");
  CHECK(m.denoiser_checksum == hex64(file_digest(model)));
}

TEST_CASE("eval: identical corpora give zero distance; grouping emits rows") {
  fs::path csv = work() / "metrics.csv";
  CHECK(run("eval --real " + (work() / "corpus1").string() + " --fake " +
            (work() / "corpus2").string() + " --group-by label --out " + csv.string()) == 0);
  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "group,distance");
  int rows = 0;
  bool all_zero = true;
  while (std::getline(is, line)) {
    if (line.rfind("summary", 0) == 0) continue;
    ++rows;
    double d = std::stod(line.substr(line.find(',') + 1));
    if (std::abs(d) > 1e-6) all_zero = false;
  }
  CHECK(rows == 4);  // one per motion class
  CHECK(all_zero);   // corpora are byte-identical

  CHECK(run("eval --real " + (work() / "corpus1").string() + " --fake /missing --out " +
            (work() / "x.csv").string()) == 3);
}

TEST_CASE("replay: generate re-run from its manifest is byte-identical") {
  fs::path o1 = work() / "gen1";
  auto before = dir_digests(o1);
  REQUIRE(!before.empty());
  CHECK(run("replay " + (o1 / "manifest.json").string()) == 0);
  CHECK(dir_digests(o1) == before);
}

TEST_CASE("replay: worldgen and train re-runs are byte-identical") {
  fs::path c1 = work() / "corpus1";
  auto before = dir_digests(c1);
  CHECK(run("replay " + (c1 / "run.manifest.json").string()) == 0);
  CHECK(dir_digests(c1) == before);

  fs::path model = work() / "model.bin";
  uint64_t before_model = file_digest(model);
  CHECK(run("replay " + (model.string() + ".manifest.json")) == 0);
  CHECK(file_digest(model) == before_model);
}

TEST_CASE("thread cap is honored without changing worldgen output") {
  fs::path c = work() / "corpus_st";
  std::string cmd = "FRAMESLIDE_THREADS=1 " + std::string(FRAMESLIDE_CLI) +
                    " worldgen --kind shapes --count 8 --seed 3 --frames 6 --size 32 --out " +
                    c.string() + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(dir_digests(c) == dir_digests(work() / "corpus1"));
}
