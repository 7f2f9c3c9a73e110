#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "cwb/data.hpp"
#include "cwb/errors.hpp"

using namespace cwb;

TEST_CASE("csv with one numeric feature") {
  std::istringstream in("x,y\n1,2\n3,4\n");
  const Dataset d = read_csv(in, "y");
  CHECK(d.rows() == 2);
  REQUIRE(d.columns().size() == 1);
  CHECK(d.columns()[0].is_numeric());
  CHECK(d.column("x").values()[1] == 3.0);
  CHECK(d.response()[0] == 2.0);
  CHECK(d.response()[1] == 4.0);
}

TEST_CASE("categorical levels follow first appearance") {
  std::istringstream in("med,y\nM1,1\nM1,2\nM2,3\n");
  const Dataset d = read_csv(in, "y");
  const auto& c = d.column("med").categories();
  CHECK(c.levels == std::vector<std::string>{"M1", "M2"});
  CHECK(c.codes == std::vector<int>{1, 1, 2});
}

TEST_CASE("unparseable numeric cell names its row and column") {
  std::istringstream in("x,y\n1,2\nabc,4\n");
  try {
    read_csv(in, "y");
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("'x'") != std::string::npos);
  }
}

TEST_CASE("ingestion errors") {
  SUBCASE("missing target") {
    std::istringstream in("x,y\n1,2\n");
    CHECK_THROWS_AS(read_csv(in, "z"), ConfigError);
  }
  SUBCASE("empty file") {
    std::istringstream in("");
    CHECK_THROWS_AS(read_csv(in, "y"), IngestionError);
  }
  SUBCASE("header only") {
    std::istringstream in("x,y\n");
    CHECK_THROWS_AS(read_csv(in, "y"), IngestionError);
  }
  SUBCASE("missing value") {
    std::istringstream in("x,y\n1,2\n,3\n");
    CHECK_THROWS_AS(read_csv(in, "y"), IngestionError);
  }
  SUBCASE("ragged row") {
    std::istringstream in("x,y\n1,2\n3\n");
    CHECK_THROWS_AS(read_csv(in, "y"), IngestionError);
  }
  SUBCASE("non-finite value") {
    std::istringstream in("x,y\n1,2\ninf,3\n");
    CHECK_THROWS_AS(read_csv(in, "y"), IngestionError);
  }
  SUBCASE("duplicate column names") {
    std::istringstream in("x,x,y\n1,2,3\n");
    CHECK_THROWS(read_csv(in, "y"));
  }
}

TEST_CASE("quoted fields, CRLF and byte order mark") {
  std::istringstream in("\xEF\xBB\xBF\"a,b\",y\r\n\"he said \"\"hi\"\"\",1\r\nplain,2\r\n");
  const Dataset d = read_csv(in, "y");
  const auto& c = d.column("a,b").categories();
  CHECK(c.levels == std::vector<std::string>{"he said \"hi\"", "plain"});
  CHECK(d.response()[1] == 2.0);
}

TEST_CASE("schema override forces a numeric-looking column to categorical") {
  std::istringstream in("g,y\n1,0\n2,1\n1,0\n");
  const Dataset d = read_csv(in, "y", {{"g", ColumnKind::Categorical}});
  CHECK(d.column("g").is_categorical());
  CHECK(d.column("g").categories().codes == std::vector<int>{1, 2, 1});
}

TEST_CASE("csv round trip preserves values and codes") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 1e3);
  std::vector<double> x(200);
  std::vector<double> y(200);
  std::vector<int> codes(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = z(rng) * std::pow(10.0, static_cast<int>(i % 7) - 3);
    y[i] = z(rng);
    codes[i] = 1 + static_cast<int>(rng() % 3);
  }
  // every level appears, in first-appearance order
  codes[0] = 1;
  codes[1] = 2;
  codes[2] = 3;
  Dataset d({FeatureColumn::numeric("x", x), FeatureColumn::categorical("c", {"u", "v", "w"}, codes)}, y, "y");
  std::stringstream buf;
  write_csv(d, buf);
  const Dataset back = read_csv(buf, "y");
  CHECK(std::equal(x.begin(), x.end(), back.column("x").values().begin()));
  CHECK(std::equal(y.begin(), y.end(), back.response().begin()));
  CHECK(back.column("c").categories().codes == codes);
  CHECK(back.column("c").categories().levels == std::vector<std::string>{"u", "v", "w"});
}

TEST_CASE("split sizes and determinism") {
  const auto a = split_indices(10, {0.3, 1});
  CHECK(a.train.size() == 7);
  CHECK(a.validation.size() == 3);
  const auto b = split_indices(10, {0.3, 1});
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK_THROWS_AS(split_indices(1, {0.3, 1}), SplitError);
  CHECK_THROWS(split_indices(10, {0.0, 1}));
  CHECK_THROWS(split_indices(10, {1.0, 1}));
}

TEST_CASE("split is a partition for random sizes and fractions") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 500;
    const double f = std::uniform_real_distribution<double>(0.01, 0.99)(rng);
    SplitIndices s;
    try {
      s = split_indices(n, {f, rng()});
    } catch (const SplitError&) {
      // one side would be empty
      const auto train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - f)));
      CHECK((train == 0 || train == n));
      continue;
    }
    CHECK(s.train.size() == static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - f))));
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (auto i : s.validation) CHECK(all.insert(i).second);
    CHECK(all.size() == n);
    CHECK(*all.rbegin() == n - 1);
  }
}

TEST_CASE("concat merges categorical levels") {
  Dataset a({FeatureColumn::categorical("c", {"p", "q"}, {1, 2})}, {1.0, 2.0}, "y");
  Dataset b({FeatureColumn::categorical("c", {"r", "p"}, {1, 2})}, {3.0, 4.0}, "y");
  const Dataset ab = Dataset::concat(a, b);
  CHECK(ab.rows() == 4);
  CHECK(ab.column("c").categories().levels == std::vector<std::string>{"p", "q", "r"});
  CHECK(ab.column("c").categories().codes == std::vector<int>{1, 2, 3, 1});
}
