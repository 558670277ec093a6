#include "bgm/checkpoint.hpp"
#include "bgm/data.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef BGM_EXE
#error "BGM_EXE must point at the bgm binary"
#endif

using namespace bgm;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("bgm_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

int run(const std::string& args) {
  const std::string cmd = std::string(BGM_EXE) + " " + args + " >> " + at("log.txt") + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 100 x 5 table with two latent factors.
void write_data(const std::string& path, std::size_t n = 100) {
  Rng rng(42);
  RowMatrix z(static_cast<Eigen::Index>(n), 2), a(2, 5), e(static_cast<Eigen::Index>(n), 5);
  fill_normal(rng, std::span<double>(z.data(), 2 * n));
  fill_normal(rng, std::span<double>(a.data(), 10));
  fill_normal(rng, std::span<double>(e.data(), 5 * n));
  const RowMatrix x = z * a + 0.2 * e;
  write_csv(path, {"v1", "v2", "v3", "v4", "v5"}, x);
}

const std::string kQuick = " --burn_in 100 --n_samples 100 ";

struct Trained {
  Trained() {
    write_data(at("data.csv"));
    REQUIRE(run("train --data " + at("data.csv") + " --checkpoint " + at("model.ckpt") +
                " --epochs 1 --seed 3") == 0);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

}  // namespace

TEST_CASE("train writes a checkpoint and a one-row trace") {
  trained();
  CHECK(fs::exists(at("model.ckpt")));
  const CsvTable trace = read_csv(at("model.trace.csv"));
  CHECK(trace.header.front() == "epoch");
  CHECK(trace.values.rows() == 1);
  const Checkpoint ck = load_checkpoint(at("model.ckpt"));
  CHECK(ck.model.net.output_dim() == 5);
  CHECK(ck.latents.rows() == 100);
}

TEST_CASE("retraining with the same seed gives the same payload") {
  trained();
  REQUIRE(run("train --data " + at("data.csv") + " --checkpoint " + at("again.ckpt") + " --epochs 1 --seed 3") == 0);
  CHECK(checkpoint_payload(slurp(at("again.ckpt"))) == checkpoint_payload(slurp(at("model.ckpt"))));
  REQUIRE(run("train --data " + at("data.csv") + " --checkpoint " + at("other.ckpt") + " --epochs 1 --seed 4") == 0);
  CHECK(checkpoint_payload(slurp(at("other.ckpt"))) != checkpoint_payload(slurp(at("model.ckpt"))));
}

TEST_CASE("config file with flag overrides") {
  trained();
  {
    std::ofstream cfg(at("cfg.json"));
    cfg << R"({"epochs": 5, "seed": 3, "hidden": [16, 16]})";
  }
  REQUIRE(run("train --config " + at("cfg.json") + " --epochs 1 --data " + at("data.csv") + " --checkpoint " +
              at("cfg.ckpt")) == 0);
  CHECK(read_csv(at("cfg.trace.csv")).values.rows() == 1);
  CHECK(load_checkpoint(at("cfg.ckpt")).model.net.hidden() == std::vector<std::size_t>{16, 16});
}

TEST_CASE("predict: nesting, determinism and several partitions") {
  trained();
  const std::string base = "predict --checkpoint " + at("model.ckpt") + " --data " + at("data.csv") + kQuick;
  REQUIRE(run(base + "--partition 'a=1-4;b=5' --alpha 0.05 --out " + at("p05.csv")) == 0);
  REQUIRE(run(base + "--partition 'a=1-4;b=5' --alpha 0.5 --out " + at("p50.csv")) == 0);
  REQUIRE(run(base + "--partition 'a=1-4;b=5' --alpha 0.05 --out " + at("p05b.csv")) == 0);
  REQUIRE(run(base + "--partition 'a=2,4;b=1,3,5' --out " + at("other.csv")) == 0);
  CHECK(slurp(at("p05.csv")) == slurp(at("p05b.csv")));

  const CsvTable wide = read_csv(at("p05.csv")), narrow = read_csv(at("p50.csv"));
  CHECK(wide.header == std::vector<std::string>{"v5_point", "v5_lower", "v5_upper", "v5_length"});
  for (Eigen::Index i = 0; i < wide.values.rows(); ++i) {
    CHECK(narrow.values(i, 1) >= wide.values(i, 1));
    CHECK(narrow.values(i, 2) <= wide.values(i, 2));
  }
  CHECK(read_csv(at("other.csv")).header.size() == 12);
}

TEST_CASE("predict writes per-point draws on request") {
  trained();
  {
    std::ofstream two(at("two.csv"));
    two << "v1,v2,v3,v4\n0.1,0.2,0.3,0.4\n-1,0,1,2\n";
  }
  REQUIRE(run("predict --checkpoint " + at("model.ckpt") + " --data " + at("two.csv") + kQuick +
              "--partition 'a=1-4;b=5' --out " + at("two_pred.csv") + " --draws_out " + at("draws")) == 0);
  std::size_t files = 0;
  for (const auto& f : fs::directory_iterator(at("draws"))) {
    ++files;
    CHECK(read_csv(f.path().string()).values.rows() == 100);
  }
  CHECK(files == 2);
}

TEST_CASE("impute keeps observed cells and is deterministic") {
  trained();
  const CsvTable full = read_csv(at("data.csv"));
  RowMatrix holes = full.values.topRows(10);
  holes(0, 1) = holes(3, 4) = holes(3, 0) = std::nan("");
  write_csv(at("holes.csv"), full.header, holes, true);
  const std::string base = "impute --checkpoint " + at("model.ckpt") + kQuick + "--data " + at("holes.csv");
  REQUIRE(run(base + " --out " + at("imp1.csv")) == 0);
  REQUIRE(run(base + " --out " + at("imp2.csv")) == 0);
  CHECK(slurp(at("imp1.csv")) == slurp(at("imp2.csv")));
  const CsvTable out = read_csv(at("imp1.csv"));
  const CsvTable unc = read_csv(at("imp1.uncertainty.csv"), true);
  for (Eigen::Index i = 0; i < 10; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) {
      if (std::isnan(holes(i, j))) {
        CHECK(std::isfinite(out.values(i, j)));
        CHECK(unc.values(i, j) > 0.0);
      } else {
        CHECK(out.values(i, j) == holes(i, j));
        CHECK(std::isnan(unc.values(i, j)));
      }
    }

  write_csv(at("complete.csv"), full.header, full.values.topRows(5));
  REQUIRE(run("impute --checkpoint " + at("model.ckpt") + " --data " + at("complete.csv") + " --out " + at("same.csv")) == 0);
  CHECK(slurp(at("same.csv")) == slurp(at("complete.csv")));
}

TEST_CASE("exit codes") {
  trained();
  {
    std::ofstream bad(at("bad.csv"));
    bad << "a,b\n1,2\n3\n";
    std::ofstream nonfinite(at("nan.csv"));
    nonfinite << "a,b\n1,2\n3,nan\n4,5\n";
    std::ofstream allmissing(at("allmiss.csv"));
    allmissing << "v1,v2,v3,v4,v5\n1,2,3,4,5\n,,,,\n";
  }
  CHECK(run("train --data " + at("bad.csv") + " --checkpoint " + at("x.ckpt")) == 2);
  CHECK(run("train --data " + at("nan.csv") + " --checkpoint " + at("x.ckpt")) == 2);
  CHECK(run("train --data " + at("missing_file.csv") + " --checkpoint " + at("x.ckpt")) == 2);
  CHECK(run("train --bogus 1") == 2);
  CHECK(run("train --epochs lots --data " + at("data.csv")) == 2);
  CHECK(run("predict --checkpoint " + at("model.ckpt") + " --data " + at("data.csv") +
            " --partition 'a=1-4;b=9' --out " + at("x.csv")) == 2);
  CHECK(run("impute --checkpoint " + at("model.ckpt") + " --data " + at("allmiss.csv") + kQuick + " --out " + at("x.csv")) == 2);
  CHECK(run("train --data " + at("data.csv") + " --checkpoint " + at("div.ckpt") + " --epochs 2 --lr_z 1e200") == 3);
  CHECK(fs::exists(at("div.ckpt")));
  const std::string log = slurp(at("log.txt"));
  CHECK(log.find("line 3") != std::string::npos);
  CHECK(log.find("row 2") != std::string::npos);
}

TEST_CASE("benchmark command writes a report and summary") {
  REQUIRE(run("benchmark --bench_dims 10 --bench_seeds 1 --bench_n 300 --epochs 2 --hidden 16,16 --burn_in 30"
              " --n_samples 30 --oracle_draws 1000 --max_test_points 10 --cp_epochs 2 --out " + at("bench.csv")) == 0);
  const std::string report = slurp(at("bench.csv"));
  CHECK(report.rfind("method,p,seed,status", 0) == 0);
  const nlohmann::json s = nlohmann::json::parse(slurp(at("bench.summary.json")));
  CHECK(s["methods"].size() == 5);
}
