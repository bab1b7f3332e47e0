#include <catch_amalgamated.hpp>

#include "memperc/io.hpp"

#include <cmath>
#include <limits>
#include <sstream>

using namespace memperc;

TEST_CASE("doubles round-trip through text", "[io]") {
  for (double v : {0.0, -0.0, 0.1, 1.0 / 3.0, 6.02214076e23, -1e-300, 0.95}) {
    const auto s = format_double(v);
    CHECK(parse_double(s) == v);
  }
  CHECK(format_double(0.25) == "0.25");
  CHECK(format_double(100.0) == "100");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(std::isnan(parse_double(format_double(std::nan("")))));
  CHECK(parse_double("-inf") == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(parse_double("1.5x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_double(""), std::invalid_argument);
}

TEST_CASE("CSV writer and reader", "[io]") {
  std::ostringstream out;
  {
    CsvWriter w(out, {"name", "n", "x", "ok"});
    w.row() << "euler" << std::uint64_t{100} << 0.5 << true;
    w.row() << "rk4" << 7 << 1e-3 << false;
  }
  CHECK(out.str() == "name,n,x,ok\neuler,100,0.5,1\nrk4,7,0.001,0\n");

  std::istringstream in(out.str());
  const auto t = read_csv(in);
  CHECK(t.header.size() == 4);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.cell(1, "name") == "rk4");
  CHECK(t.number(0, "x") == 0.5);
  CHECK(t.has_column("ok"));
  CHECK_FALSE(t.has_column("y"));
  CHECK_THROWS(t.column("y"));

  std::ostringstream bad;
  CsvWriter w(bad, {"a", "b"});
  CHECK_THROWS_AS(w.row() << 1, std::logic_error);

  std::istringstream ragged("a,b\n1,2\n3\n");
  CHECK_THROWS_AS(read_csv(ragged), std::invalid_argument);
  std::istringstream crlf("a,b\r\n1,\r\n");
  const auto c = read_csv(crlf);
  CHECK(c.cell(0, "b").empty());
}

TEST_CASE("FNV-1a digests", "[io]") {
  // Published 64-bit FNV-1a test vectors.
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
  CHECK_THROWS(read_file("/nonexistent/file"));
}
