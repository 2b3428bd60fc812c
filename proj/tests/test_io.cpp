#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "aurora/commands.hpp"
#include "aurora/io.hpp"

using namespace aurora;
namespace fs = std::filesystem;

namespace {

LoadedReplicates parse(const std::string& text, CsvOptions opt = {}) {
  std::istringstream in(text);
  return read_replicates_csv(in, opt);
}

ErrorCode parse_error(const std::string& text, CsvOptions opt = {}) {
  try {
    parse(text, opt);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::InvalidArgument;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("aurora_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name, const std::string& content = "") const {
    const auto p = (path_ / name).string();
    if (!content.empty()) std::ofstream(p) << content;
    return p;
  }

 private:
  fs::path path_;
};

struct RunResult {
  int code;
  std::string out;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(AURORA_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t got = fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), out};
}

std::string run_err(const std::string& args) {
  const std::string cmd = std::string(AURORA_CLI_PATH) + " " + args + " 2>&1 >/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t got = fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
  pclose(pipe);
  return out;
}

const char* kNormalConfig = R"({
  "n": 300, "B": 5, "reps": 4, "seed": 7,
  "prior": {"type": "normal", "mean": 0.5, "var": 4},
  "likelihood": {"type": "normal", "var": 4},
  "methods": ["auroral", "js", "mean", "aurora-knn"],
  "options": {"k_max": 40}
})";

}  // namespace

TEST(ReadCsv, Examples) {
  const auto d = parse("1,2,3\n4,5,6");
  EXPECT_EQ(d.data.n(), 2u);
  EXPECT_EQ(d.data.B(), 3u);
  EXPECT_EQ(d.data(1, 2), 6.0);
  try {
    parse("1,2\n3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RaggedRows);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_EQ(parse_error("r1,r2,r3\n", {.has_header = true}), ErrorCode::Empty);
}

TEST(ReadCsv, HeaderIdsWhitespaceAndErrors) {
  const auto d = parse("id,a,b,c\r\nu1, 1.5 ,2,3\r\nu2,4,5e-1,-6\n\n", {.has_header = true, .id_column = true});
  EXPECT_EQ(d.unit_ids, (std::vector<std::string>{"u1", "u2"}));
  EXPECT_EQ(d.data(0, 0), 1.5);
  EXPECT_EQ(d.data(1, 1), 0.5);
  try {
    parse("1,2,3\n4,x,6\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 2, column 2"), std::string::npos);
  }
  EXPECT_EQ(parse_error("1,2,nan\n"), ErrorCode::NonFinite);
  EXPECT_EQ(parse_error("1,2\n"), ErrorCode::TooFewReplicates);
  EXPECT_EQ(parse("1,2\n", {.allow_b2 = true}).data.B(), 2u);
  EXPECT_EQ(parse_error(""), ErrorCode::Empty);
}

TEST(WriteCsv, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1e3);
  Vector a(50), b(50);
  for (int i = 0; i < 50; ++i) {
    a[i] = nd(rng);
    b[i] = nd(rng) * 1e-9;
  }
  std::ostringstream out;
  write_estimates_csv(out, {}, {"a", "b"}, {a, b});
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "unit,a,b");
  for (int i = 0; i < 50; ++i) {
    std::getline(in, line);
    std::istringstream cells(line);
    std::string id, x, y;
    std::getline(cells, id, ',');
    std::getline(cells, x, ',');
    std::getline(cells, y, ',');
    EXPECT_EQ(id, std::to_string(i + 1));
    double px = 0, py = 0;
    ASSERT_TRUE(parse_double(x, px));
    ASSERT_TRUE(parse_double(y, py));
    EXPECT_EQ(px, a[i]);
    EXPECT_EQ(py, b[i]);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(2.0), "2");
}

TEST(Config, DefaultsAndResolvedEcho) {
  std::istringstream in(kNormalConfig);
  const auto c = parse_config(in);
  EXPECT_EQ(c.n, 300u);
  EXPECT_EQ(c.options.k_max, 40u);
  EXPECT_EQ(c.options.trim, 0.1);
  EXPECT_FALSE(c.allow_b2);
  const auto echo = config_to_json(c);
  EXPECT_EQ(echo["options"]["trim"], 0.1);
  EXPECT_EQ(echo["options"]["js_center"], "grand_mean");
  const auto again = parse_config(echo);
  EXPECT_EQ(config_to_json(again), echo);
}

TEST(Config, RejectsUnknownKeysWithPath) {
  auto expect_path = [](const std::string& doc, const std::string& path) {
    std::istringstream in(doc);
    try {
      parse_config(in);
      FAIL() << doc;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
      EXPECT_NE(std::string(e.what()).find(path), std::string::npos) << e.what();
    }
  };
  expect_path(R"({"n":10,"B":3,"prior":{"type":"point","value":1},"likelihood":{"type":"normal","var":1},"methods":["mean"],"bogus":1})",
              "bogus");
  expect_path(R"({"n":10,"B":3,"prior":{"type":"point","value":1,"x":2},"likelihood":{"type":"normal","var":1},"methods":["mean"]})",
              "prior.x");
  expect_path(R"({"n":10,"B":3,"prior":{"type":"point","value":1},"likelihood":{"type":"normal","var":1},"methods":["mean"],"options":{"kmax":3}})",
              "options.kmax");
  expect_path(R"({"n":10,"B":3,"prior":{"type":"point","value":1},"likelihood":{"type":"normal"},"methods":["mean"]})",
              "likelihood.var");
  expect_path(R"({"n":10,"B":3,"prior":{"type":"point","value":1},"likelihood":{"type":"normal","var":1},"methods":["foo"]})",
              "methods");
  expect_path(R"({"n":10,"B":2,"prior":{"type":"point","value":1},"likelihood":{"type":"normal","var":1},"methods":["mean"]})",
              "B");
  expect_path(R"({"n":10,)", "<document>");
}

TEST(Config, HeteroWithoutPrior) {
  std::istringstream in(R"({"n":100,"B":10,"likelihood":{"type":"hetero","base":"rectangular","var_low":0.1,
      "var_high":1,"mean_link":"equal_to_var"},"methods":["auroral"]})");
  const auto c = parse_config(in);
  EXPECT_TRUE(std::holds_alternative<likelihood::Hetero>(c.likelihood));
}

TEST(Report, CsvFlagsSingleRep) {
  RiskReport r;
  r.methods.push_back({"mean", 0.5, 0.0, 1, {0.5}});
  std::ostringstream out;
  write_report_csv(out, r);
  EXPECT_EQ(out.str(), "method,mse,se,reps,flag\nmean,0.5,0,1,se_undefined_single_rep\n");
  EXPECT_EQ(report_to_json(r)["methods"][0]["flag"], "se_undefined_single_rep");
}

TEST(Cli, EstimateMean) {
  TempDir dir;
  const auto in = dir.file("d.csv", "1,2,3\n4,5,6\n");
  const auto r = run_cli("estimate --input " + in + " --methods mean");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "unit,mean\n1,2\n2,5\n");
}

TEST(Cli, AuroralEqualsCclWithTwoReplicates) {
  TempDir dir;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::ostringstream csv;
  for (int i = 0; i < 40; ++i) {
    const double mu = 2.0 * nd(rng);
    csv << mu + nd(rng) << ',' << mu + nd(rng) << '\n';
  }
  const auto in = dir.file("b2.csv", csv.str());
  EXPECT_EQ(run_cli("estimate --input " + in + " --methods auroral").code, 1);
  const auto r = run_cli("estimate --allow-b2 --input " + in + " --methods auroral,ccl");
  ASSERT_EQ(r.code, 0);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "unit,auroral,ccl");
  int rows = 0;
  while (std::getline(lines, line)) {
    const auto first = line.find(','), second = line.rfind(',');
    EXPECT_EQ(line.substr(first + 1, second - first - 1), line.substr(second + 1));
    ++rows;
  }
  EXPECT_EQ(rows, 40);
}

TEST(Cli, UnknownMethodIsUsageError) {
  TempDir dir;
  const auto in = dir.file("d.csv", "1,2,3\n4,5,6\n");
  EXPECT_EQ(run_cli("estimate --input " + in + " --methods foo").code, 2);
  const auto msg = run_err("estimate --input " + in + " --methods foo");
  EXPECT_NE(msg.find("auroral"), std::string::npos);
  EXPECT_NE(msg.find("pareto-mle"), std::string::npos);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
}

TEST(Cli, EstimatePreservesIdsAndOrder) {
  TempDir dir;
  const auto in = dir.file("ids.csv", "unit,a,b,c\nz,3,3,3\na,1,1,1\nm,2,2,2\n");
  const auto r = run_cli("estimate --has-header --id-column --input " + in + " --methods median,js --sigma2 1");
  EXPECT_EQ(r.code, 1);  // js needs n >= 4
  const auto ok = run_cli("estimate --has-header --id-column --input " + in + " --methods median,midrange");
  EXPECT_EQ(ok.out, "unit,median,midrange\nz,3,3\na,1,1\nm,2,2\n");
}

TEST(Cli, SimulateIsByteDeterministic) {
  TempDir dir;
  const auto cfg = dir.file("c.json", kNormalConfig);
  const auto out1 = dir.file("r1.csv"), out2 = dir.file("r2.csv");
  ASSERT_EQ(run_cli("simulate --config " + cfg + " --output " + out1).code, 0);
  ASSERT_EQ(run_cli("--threads 3 simulate --config " + cfg + " --output " + out2).code, 0);
  auto slurp = [](const std::string& p) {
    std::ifstream f(p);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  const auto a = slurp(out1);
  EXPECT_EQ(a, slurp(out2));
  EXPECT_EQ(a.substr(0, a.find('\n')), "method,mse,se,reps,flag");
  // Rows follow the requested method order.
  EXPECT_LT(a.find("\nauroral,"), a.find("\njs,"));
  EXPECT_LT(a.find("\njs,"), a.find("\nmean,"));
  EXPECT_LT(a.find("\nmean,"), a.find("\naurora-knn,"));
  // Resolved config sidecar.
  const auto side = slurp(out1 + ".config.json");
  EXPECT_NE(side.find("\"trim\": 0.1"), std::string::npos);
  // A different seed changes the numbers.
  EXPECT_NE(run_cli("--seed 8 simulate --config " + cfg).out, a);
  const auto json = run_cli("simulate --format json --config " + cfg);
  EXPECT_EQ(json.code, 0);
  EXPECT_NE(json.out.find("\"methods\""), std::string::npos);
}

TEST(Cli, SimulateInvalidConfig) {
  TempDir dir;
  const auto cfg = dir.file("bad.json", R"({"n":10,"B":3,"methods":["mean"],"likelihood":{"type":"normal","var":1},"prior":{"type":"nope"}})");
  EXPECT_EQ(run_cli("simulate --config " + cfg).code, 1);
  EXPECT_NE(run_err("simulate --config " + cfg).find("prior.type"), std::string::npos);
}

TEST(Cli, Oracle) {
  auto r = run_cli("oracle normal-normal --A 1 --sigma2 1 --K 10");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("bayes_K,0.09090909090909091"), std::string::npos);
  r = run_cli("oracle van-trees --If 1 --Ig 0 --K 10");
  EXPECT_EQ(r.out, "quantity,value\nvan_trees_bound,0.1\n");
  r = run_cli("oracle lstat --lstat-family gaussian --K 10");
  EXPECT_EQ(r.code, 0);
  std::size_t count = 0, pos = 0;
  while ((pos = r.out.find(",0.1111111111111111\n", pos)) != std::string::npos) {
    ++count;
    ++pos;
  }
  EXPECT_EQ(count, 9u);
  EXPECT_NE(run_cli("oracle normal-normal --A 4 --sigma2 4 --K 10 --n 10000").out.find("auroral_single_holdout"),
            std::string::npos);
  EXPECT_EQ(run_cli("oracle nope").code, 2);
  EXPECT_EQ(run_cli("oracle normal-normal --A 1").code, 2);
}

TEST(Cli, WeightsTable) {
  TempDir dir;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::ostringstream csv;
  for (int i = 0; i < 200; ++i) {
    const double mu = 3.0 * nd(rng);
    csv << mu + nd(rng) << ',' << mu + nd(rng) << ',' << mu + nd(rng) << ',' << mu + nd(rng) << '\n';
  }
  const auto r = run_cli("weights --input " + dir.file("w.csv", csv.str()));
  ASSERT_EQ(r.code, 0);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "term,j1,j2,j3,j4,average");
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("intercept,", 0), 0u);
  for (int t = 1; t <= 3; ++t) {
    std::getline(lines, line);
    EXPECT_EQ(line.rfind("X(" + std::to_string(t) + "),", 0), 0u);
  }
  EXPECT_FALSE(std::getline(lines, line));
}

TEST(Cli, WeightsOnConstantData) {
  std::ostringstream out, err;
  TempDir dir;
  const auto in = dir.file("c.csv", "2,2,2\n2,2,2\n2,2,2\n2,2,2\n");
  EXPECT_EQ(cli::cmd_weights({in, {}, 1}, out, err), 0);
  EXPECT_EQ(out.str(), "term,j1,j2,j3,average\nintercept,2,2,2,2\nX(1),0,0,0,0\nX(2),0,0,0,0\n");
}

TEST(Config, ShippedScenariosParse) {
  std::size_t count = 0;
  for (const auto& entry : fs::directory_iterator(AURORA_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    EXPECT_NO_THROW(parse_config(in)) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 1u);
}
