#include <catch2/catch_amalgamated.hpp>
#include <sstream>

#include "mmgee/dataset.hpp"

using namespace mmgee;

namespace {

ColumnSchema mscm_like_schema() {
  ColumnSchema s;
  s.subject_col = "id";
  s.time_col = "day";
  s.response_cols = {"stress", "illness"};
  s.covariate_cols = {"married"};
  return s;
}

// 167 subjects x 12 days, two binary responses, one covariate.
std::string mscm_like_csv() {
  std::ostringstream out;
  out << "id,day,stress,illness,married\n";
  for (int i = 1; i <= 167; ++i)
    for (int day = 17; day <= 28; ++day)
      out << i << "," << day << "," << ((i + day) % 2) << "," << ((i * day) % 3 == 0) << ","
          << (i % 2) << "\n";
  return out.str();
}

}  // namespace

TEST_CASE("ingest reports the panel dimensions", "[dataset]") {
  std::istringstream in(mscm_like_csv());
  const auto ds = ingest_long(in, mscm_like_schema());
  REQUIRE(ds.n_subjects() == 167);
  REQUIRE(ds.n_rows() == 2004);
  REQUIRE(ds.n_responses() == 2);
  REQUIRE(ds.n_covariates() == 1);
  for (Eigen::Index i = 0; i < ds.n_subjects(); ++i) REQUIRE(ds.obs_per_subject(i) == 12);
}

TEST_CASE("minimal dataset: one subject, one time, no covariates", "[dataset]") {
  std::istringstream in("id,time,y\n7,1,3.25\n");
  ColumnSchema s;
  s.subject_col = "id";
  s.time_col = "time";
  s.response_cols = {"y"};
  const auto ds = ingest_long(in, s);
  REQUIRE(ds.n_subjects() == 1);
  REQUIRE(ds.n_rows() == 1);
  REQUIRE(ds.n_responses() == 1);
  REQUIRE(ds.n_covariates() == 0);
  REQUIRE(ds.responses(0, 0) == 3.25);
}

TEST_CASE("ingest errors: duplicates, parse failures, schema", "[dataset]") {
  ColumnSchema s;
  s.subject_col = "id";
  s.time_col = "t";
  s.response_cols = {"y"};

  {
    std::istringstream in("id,t,y\n3,5,1\n3,5,0\n");
    REQUIRE_THROWS_WITH(ingest_long(in, s), Catch::Matchers::ContainsSubstring("duplicate") &&
                                                Catch::Matchers::ContainsSubstring("(3,5)"));
  }
  {
    std::istringstream in("id,t,y\n1,1,abc\n");
    REQUIRE_THROWS_WITH(ingest_long(in, s), Catch::Matchers::ContainsSubstring("abc"));
  }
  {
    std::istringstream in("id,t,z\n1,1,2\n");
    REQUIRE_THROWS_WITH(ingest_long(in, s), Catch::Matchers::ContainsSubstring("'y'"));
  }
  {
    std::istringstream in("id,t,y\n1,1.5,2\n");
    REQUIRE_THROWS_AS(ingest_long(in, s), DataError);
  }
  {
    std::istringstream in("id,t,y\n1,1,2,9\n");
    REQUIRE_THROWS_AS(ingest_long(in, s), DataError);
  }
}

TEST_CASE("missing-cell policy: error by default, droppable by flag", "[dataset]") {
  ColumnSchema s;
  s.subject_col = "id";
  s.time_col = "t";
  s.response_cols = {"y"};
  s.covariate_cols = {"x"};

  const std::string text = "id,t,y,x\n1,1,2.0,0.5\n1,2,NA,0.5\n1,3,1.0,\n2,1,0.0,1.0\n";
  {
    std::istringstream in(text);
    REQUIRE_THROWS_AS(ingest_long(in, s), DataError);
  }
  {
    std::istringstream in(text);
    s.drop_incomplete = true;
    const auto ds = ingest_long(in, s);
    REQUIRE(ds.n_rows() == 2);  // rows, not subjects, are dropped
    REQUIRE(ds.n_subjects() == 2);
  }
}

TEST_CASE("rows are grouped by subject and time-sorted within", "[dataset]") {
  std::istringstream in("id,t,y\nb,2,1\na,1,2\nb,1,3\na,2,4\n");
  ColumnSchema s;
  s.subject_col = "id";
  s.time_col = "t";
  s.response_cols = {"y"};
  const auto ds = ingest_long(in, s);
  // first appearance order: b then a; times sorted inside
  REQUIRE(ds.subject_ids == std::vector<std::string>{"b", "a"});
  REQUIRE(ds.time_of_row == std::vector<long long>{1, 2, 1, 2});
  REQUIRE(ds.responses(0, 0) == 3.0);
  REQUIRE(ds.responses(1, 0) == 1.0);
}

TEST_CASE("ingest is idempotent through serialization", "[dataset]") {
  std::istringstream in(mscm_like_csv());
  const auto ds = ingest_long(in, mscm_like_schema());

  std::ostringstream buffer;
  write_long_csv(buffer, ds);
  std::istringstream again(buffer.str());
  ColumnSchema s2 = mscm_like_schema();
  s2.time_col = "time";  // write_long_csv normalizes id/time header names
  const auto ds2 = ingest_long(again, s2);

  REQUIRE(ds2.subject_ids == ds.subject_ids);
  REQUIRE(ds2.time_of_row == ds.time_of_row);
  REQUIRE((ds2.responses - ds.responses).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((ds2.covariates - ds.covariates).cwiseAbs().maxCoeff() == 0.0);

  std::ostringstream buffer2;
  write_long_csv(buffer2, ds2);
  REQUIRE(buffer.str() == buffer2.str());
}

TEST_CASE("preprocess derives baseline means and rescaled time", "[dataset]") {
  // subject 1: stress 1 on 4 of the 16 baseline days
  std::ostringstream text;
  text << "id,day,stress,illness\n";
  for (int day = 1; day <= 28; ++day) {
    const int s1 = (day >= 1 && day <= 4) ? 1 : 0;
    text << "1," << day << "," << (day <= 16 ? s1 : (day % 2)) << "," << 0 << "\n";
    text << "2," << day << ",1,1\n";
  }
  ColumnSchema schema;
  schema.subject_col = "id";
  schema.time_col = "day";
  schema.response_cols = {"stress", "illness"};
  std::istringstream in(text.str());
  const auto ds = ingest_long(in, schema);

  PreprocessSpec spec;
  spec.baseline_start = 1;
  spec.baseline_end = 16;
  spec.analysis_start = 17;
  spec.analysis_end = 28;
  spec.baseline_names = {"bstress", "billness"};
  spec.time_offset = 22.0;
  spec.time_divisor = 7.0;
  const auto out = preprocess_baseline(ds, spec);

  REQUIRE(out.n_rows() == 24);
  REQUIRE(out.n_subjects() == 2);
  REQUIRE(out.covariate_names == std::vector<std::string>{"bstress", "billness", "week"});

  const Eigen::Index bstress = out.covariate_index("bstress");
  const Eigen::Index week = out.covariate_index("week");
  REQUIRE(out.covariates(0, bstress) == Catch::Approx(0.25));   // 4/16
  REQUIRE(out.covariates(12, bstress) == Catch::Approx(1.0));   // subject 2

  for (Eigen::Index r = 0; r < out.n_rows(); ++r) {
    const long long day = out.time_of_row[static_cast<std::size_t>(r)];
    REQUIRE(day >= 17);
    REQUIRE(day <= 28);
    REQUIRE(out.covariates(r, week) ==
            Catch::Approx((static_cast<double>(day) - 22.0) / 7.0).margin(1e-15));
  }
  // day 22 -> 0, day 28 -> 6/7
  REQUIRE(out.covariates(5, week) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(out.covariates(11, week) == Catch::Approx(6.0 / 7.0).margin(1e-15));

  // baseline covariates constant within subject
  for (Eigen::Index i = 0; i < out.n_subjects(); ++i) {
    const auto lo = out.cluster_starts[static_cast<std::size_t>(i)];
    const auto hi = out.cluster_starts[static_cast<std::size_t>(i) + 1];
    const auto col = out.covariates.col(bstress).segment(lo, hi - lo);
    REQUIRE(col.maxCoeff() - col.minCoeff() == 0.0);
  }
}

TEST_CASE("preprocess errors on invalid windows and empty subjects", "[dataset]") {
  std::istringstream in("id,day,y\n1,1,0\n1,20,1\n2,20,1\n");
  ColumnSchema schema;
  schema.subject_col = "id";
  schema.time_col = "day";
  schema.response_cols = {"y"};
  const auto ds = ingest_long(in, schema);

  PreprocessSpec spec;
  spec.baseline_start = 1;
  spec.baseline_end = 16;
  spec.analysis_start = 17;
  spec.analysis_end = 28;
  spec.baseline_names = {"by"};
  // subject 2 has no baseline observation
  REQUIRE_THROWS_WITH(preprocess_baseline(ds, spec),
                      Catch::Matchers::ContainsSubstring("baseline") &&
                          Catch::Matchers::ContainsSubstring("2"));

  PreprocessSpec overlap = spec;
  overlap.baseline_end = 18;
  REQUIRE_THROWS_AS(preprocess_baseline(ds, overlap), SpecError);

  PreprocessSpec zero_div = spec;
  zero_div.time_divisor = 0.0;
  REQUIRE_THROWS_AS(preprocess_baseline(ds, zero_div), SpecError);
}
