#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hsar/errors.hpp"
#include "hsar/io.hpp"
#include "hsar/simulate.hpp"
#include "hsar/version.hpp"
#include "hsar/weights.hpp"

using namespace hsar;

namespace {

CsvTable parse(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("read_csv: quoting and line numbers") {
  const auto t = parse("y,x1\n\"1.5\",\"a,b\"\n2,\"say \"\"hi\"\"\"\n\"3\",\"two\nlines\"\n4,z\r\n");
  CHECK(t.header == std::vector<std::string>{"y", "x1"});
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0][1] == "a,b");
  CHECK(t.rows[1][1] == "say \"hi\"");
  CHECK(t.rows[2][1] == "two\nlines");
  CHECK(t.rows[3][1] == "z");
  CHECK(t.lines == std::vector<int>{2, 3, 4, 6});
}

TEST_CASE("read_csv: errors name the line") {
  CHECK(error_of("y,x\n1,2\n3\n").find("line 3") != std::string::npos);
  CHECK(error_of("y,x\n1,\"2\n").find("line 2") != std::string::npos);
  CHECK(error_of("y,x\n1,2\"x\n").find("line 2") != std::string::npos);
  CHECK(error_of("y,x\n\"1\"a,2\n").find("line 2") != std::string::npos);
  CHECK(!error_of("").empty());
}

TEST_CASE("missing markers") {
  for (const char* m : {"", "NA", "NaN"}) CHECK(is_missing_marker(m));
  for (const char* m : {"0", "na", "nan ", "N/A"}) CHECK(!is_missing_marker(m));
}

TEST_CASE("format_double round trips") {
  for (const double v : {0.1, -2.5e-300, 1.0 / 3.0, 12345678.901234567, 0.0})
    CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(1.0) == "1");
}

TEST_CASE("dataset_from_csv: intercept and missing responses") {
  const auto t = parse("x1,y,x2\n1,NA,2\n3,4.5,5\n6,,7\n8,9,10\n");
  const Dataset d = dataset_from_csv(t);
  CHECK(d.n() == 4);
  CHECK(d.obs_idx() == std::vector<int>{1, 3});
  CHECK(d.X().cols() == 3);
  CHECK(d.X()(0, 0) == 1.0);
  CHECK(d.X()(2, 1) == 6.0);
  CHECK(d.X()(2, 2) == 7.0);
  CHECK(d.y()[1] == 4.5);
  CsvDatasetOptions o;
  o.intercept = false;
  o.response = "x2";
  const Dataset e = dataset_from_csv(parse("x1,y,x2\n1,0,2\n3,4.5,5\n6,1,7\n"), o);
  CHECK(e.X().cols() == 2);
  CHECK(e.is_complete());
}

TEST_CASE("dataset_from_csv: bad input") {
  CHECK_THROWS_AS(dataset_from_csv(parse("a,b\n1,2\n")), ParseError);
  CHECK_THROWS_AS(dataset_from_csv(parse("y,x\n1,NA\n2,3\n")), ParseError);
  CHECK_THROWS_AS(dataset_from_csv(parse("y,x\n1,abc\n2,3\n")), ParseError);
  CHECK_THROWS_AS(dataset_from_csv(parse("y,x\ninf,1\n2,3\n")), ParseError);
  try {
    dataset_from_csv(parse("y,x\n1,2\n2,oops\n"));
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("write_dataset_csv / dataset_from_csv round trip is lossless") {
  SimConfig c;
  c.grid = GridShape{7, 6};
  c.n_replicates = 1;
  const Dataset d = simulate_one(c, 0).dataset;
  std::stringstream ss;
  write_dataset_csv(ss, d, true);
  const Dataset back = dataset_from_csv(read_csv(ss));
  CHECK(back.mask() == d.mask());
  CHECK(back.X() == d.X());
  for (const int i : d.obs_idx()) CHECK(back.y()[i] == d.y()[i]);
}

TEST_CASE("fit after a file round trip matches the in-memory fit and the study") {
  SimConfig c;
  c.kind = ModelKind::HSAM;
  c.grid = GridShape{10, 10};
  c.n_replicates = 1;
  c.seed = 9;
  const Dataset d = simulate_one(c, 0).dataset;
  const auto sw = c.weights();
  std::stringstream data_text, w_text;
  write_dataset_csv(data_text, d, true);
  write_matrix_market(w_text, rook_grid(10, 10, false).W, true);
  const Dataset d2 = dataset_from_csv(read_csv(data_text));
  const auto sw2 = make_weights(read_matrix_market(w_text), Normalization::row);
  FitOptions o;
  o.standard_errors = false;
  const auto a = fit(c.kind, d, sw, o), b = fit(c.kind, d2, sw2, o);
  CHECK(std::abs(a.params.rho - b.params.rho) < 1e-10);
  CHECK(std::abs(a.loglik - b.loglik) < 1e-10);
  for (int k = 0; k < a.params.beta.size(); ++k) CHECK(std::abs(a.params.beta[k] - b.params.beta[k]) < 1e-10);
  StudyOptions so;
  so.fit = o;
  const auto study = run_study(c, {Method::MML_P}, so);
  const auto& est = study.methods[0].replicates[0].estimates;
  REQUIRE(est.size() == 5);
  CHECK(std::abs(est[2] - b.params.rho) < 1e-10);
  CHECK(std::abs(est[3] - b.sigma2_eps) < 1e-10);
  CHECK(std::abs(est[4] - b.sigma2_e) < 1e-10);
}

TEST_CASE("read_config: parsing and key checks") {
  std::istringstream in("# comment\nmodel = hsam\n  tol=1e-6  # trailing\n\nseed = 7\n");
  const Config cfg = read_config(in);
  CHECK(cfg.at("model") == "hsam");
  CHECK(cfg.at("tol") == "1e-6");
  CHECK(cfg.size() == 3);
  CHECK_NOTHROW(check_config_keys(cfg, {"model", "tol", "seed"}));
  try {
    check_config_keys(cfg, {"model", "method"});
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("tol") != std::string::npos);
    CHECK(msg.find("seed") != std::string::npos);
    CHECK(msg.find("method") != std::string::npos);
  }
  std::istringstream dup("a = 1\na = 2\n");
  CHECK_THROWS_AS(read_config(dup), ParseError);
  std::istringstream bad("just words\n");
  CHECK_THROWS_AS(read_config(bad), ParseError);
}

TEST_CASE("JSON outputs carry the schema version") {
  SimConfig c;
  c.grid = GridShape{6, 6};
  c.n_replicates = 2;
  StudyOptions so;
  so.fit.standard_errors = true;
  const auto study = run_study(c, {Method::MML_P}, so);
  const auto js = to_json(study);
  CHECK(js.at("schema_version") == kSchemaVersion);
  CHECK(js.at("config").at("seed") == c.seed);
  const auto fit_result = fit(ModelKind::HSEM, simulate_one(c, 0).dataset, c.weights());
  const auto jf = to_json(fit_result);
  CHECK(jf.at("schema_version") == kSchemaVersion);
  CHECK(jf.at("model") == "hsem");
  CHECK(jf.at("params").at("beta").size() == 2);
  const auto jb = to_json(bench_kernel(Kernel::chol_AtA, {100, 144}, 5, 0.5));
  CHECK(jb.at("schema_version") == kSchemaVersion);
  CHECK(nlohmann::json::parse(jf.dump()) == jf);
}

TEST_CASE("write_bench_csv columns") {
  BenchResult r;
  r.sizes = {100, 400};
  r.times = {0.5, 2.0};
  r.sd = {0.1, 0.2};
  r.reps = {20, 20};
  std::ostringstream out;
  write_bench_csv(out, r);
  CHECK(out.str() == "n,mean_time,sd,reps\n100,0.5,0.1,20\n400,2,0.2,20\n");
}
