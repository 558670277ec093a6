#include "bgm/config.hpp"
#include "bgm/data.hpp"

#include <cstdlib>
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace bgm;

namespace {

CsvTable parse(const std::string& text, bool allow_missing = false) {
  std::istringstream in(text);
  return parse_csv(in, allow_missing);
}

std::string error_of(const std::string& text, bool allow_missing = false) {
  try {
    parse(text, allow_missing);
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("csv with and without a header") {
  const CsvTable a = parse("x,y\n1,2\n3.5,-4e-3\n");
  CHECK(a.header == std::vector<std::string>{"x", "y"});
  CHECK(a.values.rows() == 2);
  CHECK(a.values(1, 1) == -4e-3);
  const CsvTable b = parse("1,2,3\n4,5,6\n");
  CHECK(b.header == std::vector<std::string>{"col1", "col2", "col3"});
  CHECK(b.values(0, 0) == 1.0);
}

TEST_CASE("csv missing cells and errors") {
  const CsvTable m = parse("a,b\n1,\n,2\n", true);
  CHECK(std::isnan(m.values(0, 1)));
  CHECK(std::isnan(m.values(1, 0)));
  CHECK(error_of("a,b\n1,\n") .find("line 2") != std::string::npos);
  CHECK(error_of("a,b\n1,2\n3\n").find("line 3") != std::string::npos);
  CHECK(error_of("a,b\n1,zz\n").find("line 2") != std::string::npos);
  CHECK(error_of("a,b\n1,inf\n").find("column 2") != std::string::npos);
  CHECK_FALSE(error_of("").empty());
}

TEST_CASE("17-digit formatting round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::numeric_limits<double>::denorm_min()})
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
}

TEST_CASE("standardization round trip") {
  Rng rng(3);
  RowMatrix x(50, 4);
  fill_normal(rng, std::span<double>(x.data(), 200));
  x.col(2) = x.col(2) * 1e4 + RowMatrix::Constant(50, 1, 3e5);
  x.col(3) *= 1e-6;
  const ColumnStats s = fit_column_stats(x);
  const RowMatrix z = standardize(x, s);
  for (Eigen::Index j = 0; j < 4; ++j) {
    CHECK(std::abs(z.col(j).mean()) < 1e-12);
    CHECK((z.col(j).array() - z.col(j).mean()).square().sum() / 49.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
  const RowMatrix back = destandardize(z, s);
  CHECK(((back - x).array().abs() / x.array().abs()).maxCoeff() <= 1e-12);
  CHECK(destandardize_value(z(4, 2), 2, s) == doctest::Approx(x(4, 2)).epsilon(1e-12));
  CHECK(destandardize_scale(2.0, 2, s) == doctest::Approx(2.0 * s.stds[2]).epsilon(1e-15));

  RowMatrix holes = x;
  holes(1, 1) = std::nan("");
  CHECK(std::isnan(standardize(holes, s)(1, 1)));
}

TEST_CASE("fitting rejects constant columns and non-finite cells") {
  RowMatrix x(3, 2);
  x << 1, 5, 2, 5, 3, 5;
  CHECK_THROWS_AS(DataMatrix::fit(x), InputError);
  x(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(DataMatrix::fit(x), InputError);
}

TEST_CASE("config keys") {
  RunConfig cfg;
  set_config_text(cfg, "epochs", "7");
  set_config_text(cfg, "hidden", "32,16");
  set_config_text(cfg, "bench_seeds", "[4,5]");
  set_config_text(cfg, "flipout", "true");
  set_config_text(cfg, "partition", "a=1-3;b=4");
  set_config(cfg, "alpha", 0.1);
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.train.hidden == std::vector<std::size_t>{32, 16});
  CHECK(cfg.bench.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.train.decoder.flipout);
  CHECK(cfg.partition == "a=1-3;b=4");
  CHECK(cfg.alpha == 0.1);

  CHECK_THROWS_AS(set_config_text(cfg, "no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_text(cfg, "epochs", "many"), ConfigError);
  CHECK_THROWS_AS(set_config(cfg, "epochs", -3), ConfigError);
  CHECK_THROWS_AS(set_config(cfg, "map_mode", "yes"), ConfigError);

  const nlohmann::json j = config_to_json(cfg);
  RunConfig again;
  apply_config(again, j);
  CHECK(config_to_json(again) == j);
  CHECK(j.size() == config_keys().size());
  for (const std::string& k : config_keys()) CHECK_FALSE(config_key_help(k).empty());
}
