#include <unistd.h>

#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("mmgee_cli_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args, const std::string& log_name, const TempDir& dir) {
  const std::string cmd =
      std::string(MMGEE_CLI_PATH) + " " + args + " > " + dir.file(log_name) + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
#ifdef _WIN32
  return status;
#else
  return WEXITSTATUS(status);
#endif
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_bivariate_csv(const std::string& path, int n_subjects = 60, int n_times = 4) {
  std::ofstream out(path);
  out << "id,time,y1,y2,x1,x2\n";
  unsigned state = 12345;
  auto next01 = [&state]() {
    state = state * 1664525u + 1013904223u;
    return static_cast<double>(state >> 8) / static_cast<double>(1u << 24);
  };
  for (int i = 1; i <= n_subjects; ++i) {
    const double x2 = (i % 2 == 0) ? 1.0 : 0.0;
    for (int t = 1; t <= n_times; ++t) {
      const double x1 = 2.0 * next01() - 1.0;
      const double p1 = 1.0 / (1.0 + std::exp(0.4 - 0.9 * x1));
      const double p2 = 1.0 / (1.0 + std::exp(-0.1 - 0.4 * x1 + 0.5 * x2));
      out << i << "," << t << "," << (next01() < p1 ? 1 : 0) << ","
          << (next01() < p2 ? 1 : 0) << "," << x1 << "," << x2 << "\n";
    }
  }
}

}  // namespace

TEST_CASE("fit runs end to end and writes its artifacts", "[cli]") {
  TempDir dir;
  write_bivariate_csv(dir.file("data.csv"));
  const std::string args =
      "fit --data " + dir.file("data.csv") +
      " --responses y1,y2 --covariates x1,x2 --rtype --interaction 1,2"
      " --family binomial --corstr exchangeable"
      " --out-fit " + dir.file("m.fit") +
      " --out-summary " + dir.file("m.csv") +
      " --out-corr " + dir.file("m.corr.csv");
  REQUIRE(run(args, "fit.log", dir) == 0);

  const std::string log = slurp(dir.file("fit.log"));
  REQUIRE(log.find("# mmgee fit") != std::string::npos);       // config echo
  REQUIRE(log.find("converged = yes") != std::string::npos);
  REQUIRE(log.find("rtype_2") != std::string::npos);

  const std::string csv = slurp(dir.file("m.csv"));
  // header + 6 coefficients (1 + 2 + 1 rtype + 2 interactions)
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 7);
  REQUIRE(fs::exists(dir.file("m.fit")));
  REQUIRE(fs::exists(dir.file("m.corr.csv")));
}

TEST_CASE("fit exit codes distinguish usage, data and numerical problems", "[cli]") {
  TempDir dir;
  write_bivariate_csv(dir.file("data.csv"));

  // unknown flag -> usage error 2
  REQUIRE(run("fit --data x.csv --responses y --no-such-flag", "usage.log", dir) == 2);

  // interaction index out of range -> spec error 2
  REQUIRE(run("fit --data " + dir.file("data.csv") +
                  " --responses y1,y2 --covariates x1,x2 --rtype --interaction 3"
                  " --family binomial",
              "spec.log", dir) == 2);

  // missing file -> data error 3
  REQUIRE(run("fit --data " + dir.file("nope.csv") + " --responses y1", "nofile.log", dir) ==
          3);

  // duplicate (subject,time) -> data error 3
  {
    std::ofstream out(dir.file("dup.csv"));
    out << "id,time,y\n3,5,1\n3,5,0\n";
  }
  REQUIRE(run("fit --data " + dir.file("dup.csv") + " --responses y --family gaussian"
              " --link identity",
              "dup.log", dir) == 3);

  // non-convergence -> 4, fit file still written
  const int code = run("fit --data " + dir.file("data.csv") +
                           " --responses y1,y2 --covariates x1,x2 --family binomial"
                           " --corstr exchangeable --maxit 1 --tol 1e-12 --out-fit " +
                           dir.file("nc.fit"),
                       "nc.log", dir);
  REQUIRE(code == 4);
  REQUIRE(fs::exists(dir.file("nc.fit")));
}

TEST_CASE("preprocess derives week and baseline columns", "[cli]") {
  TempDir dir;
  {
    std::ofstream out(dir.file("raw.csv"));
    out << "id,day,stress,illness,married\n";
    for (int i = 1; i <= 5; ++i)
      for (int day = 1; day <= 28; ++day)
        out << i << "," << day << "," << ((day + i) % 2) << "," << (day % 3 == 0) << ","
            << (i % 2) << "\n";
  }
  const int code = run(
      "preprocess --data " + dir.file("raw.csv") +
          " --id id --time day --responses stress,illness --covariates married"
          " --baseline-window 1,16 --analysis-window 17,28"
          " --baseline-names bstress,billness --time-offset 22 --time-divisor 7"
          " --out " + dir.file("pre.csv"),
      "pre.log", dir);
  REQUIRE(code == 0);
  const std::string csv = slurp(dir.file("pre.csv"));
  REQUIRE(csv.rfind("id,time,stress,illness,married,bstress,billness,week", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 * 12);

  // week for day 22 must be exactly 0
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  bool found_zero_week = false;
  while (std::getline(lines, line))
    if (line.find(",22,") != std::string::npos && line.rfind(",0") == line.size() - 2)
      found_zero_week = true;
  REQUIRE(found_zero_week);
}

TEST_CASE("report reads fits back, derives responses and compares models", "[cli]") {
  TempDir dir;
  write_bivariate_csv(dir.file("data.csv"), 80, 4);

  REQUIRE(run("fit --data " + dir.file("data.csv") +
                  " --responses y1,y2 --covariates x1,x2 --rtype --interaction 1,2"
                  " --family binomial --corstr exchangeable --out-fit " + dir.file("m1.fit"),
              "m1.log", dir) == 0);
  REQUIRE(run("fit --data " + dir.file("data.csv") +
                  " --responses y1,y2 --covariates x1,x2 --rtype --interaction 2"
                  " --family binomial --corstr exchangeable --out-fit " + dir.file("m2.fit"),
              "m2.log", dir) == 0);

  const int code = run("report " + dir.file("m2.fit") + " --reference " + dir.file("m1.fit") +
                           " --derive response=y1 --derive response=y2 --out " +
                           dir.file("report.csv"),
                       "report.log", dir);
  REQUIRE(code == 0);
  const std::string log = slurp(dir.file("report.log"));
  REQUIRE(log.find("coefficients") != std::string::npos);
  REQUIRE(log.find("derived coefficients for response=y2") != std::string::npos);
  REQUIRE(log.find("efficiency gains") != std::string::npos);
  REQUIRE(log.find("odds_ratio") != std::string::npos);  // logit fit

  const std::string csv = slurp(dir.file("report.csv"));
  REQUIRE(csv.find("coefficient,") != std::string::npos);
  REQUIRE(csv.find("derived,y2") != std::string::npos);
  REQUIRE(csv.find("gain,") != std::string::npos);

  // derive request without the response= prefix is a usage error
  REQUIRE(run("report " + dir.file("m2.fit") + " --derive y2", "badderive.log", dir) == 2);
}

TEST_CASE("simulate is deterministic and honors its config file", "[cli]") {
  TempDir dir;
  {
    std::ofstream out(dir.file("sim.cfg"));
    out << "subjects=80\nreps=10\nseed=7\nstructures=independence,exchangeable\n";
  }
  const std::string base = "simulate --config " + dir.file("sim.cfg");
  REQUIRE(run(base + " --out " + dir.file("a.csv"), "sim_a.log", dir) == 0);
  REQUIRE(run(base + " --out " + dir.file("b.csv") + " --threads 3", "sim_b.log", dir) == 0);
  const std::string a = slurp(dir.file("a.csv"));
  REQUIRE(a == slurp(dir.file("b.csv")));
  REQUIRE(a.rfind("parameter,model,structure,mean,bias,mse,n_converged", 0) == 0);
  // 2 structures x (4 + 8) parameters
  REQUIRE(std::count(a.begin(), a.end(), '\n') == 1 + 2 * 12);

  const std::string log = slurp(dir.file("sim_a.log"));
  REQUIRE(log.find("# mmgee simulate") != std::string::npos);
  REQUIRE(log.find("cell parsimonious/independence") != std::string::npos);

  // invalid latent correlation -> spec error 2
  REQUIRE(run("simulate --rho-within 0.1 --rho-between 0.95 --reps 2 --out " +
                  dir.file("c.csv"),
              "sim_bad.log", dir) == 2);
}
