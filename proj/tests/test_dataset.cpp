#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "gimkit/dataset.hpp"

using namespace gimkit;

namespace {
Dataset parse(const std::string& text, SchemaKind kind) {
  std::istringstream in(text);
  return read_csv(in, kind);
}
}  // namespace

TEST_CASE("plain scalar csv") {
  const Dataset d = parse("z1\n1.5\n-2\n3e2\n", SchemaKind::Plain);
  REQUIRE(d.n() == 3);
  REQUIRE(d.dim() == 1);
  REQUIRE(d.matrix()(2, 0) == 300.0);
}

TEST_CASE("plain multivariate csv") {
  const Dataset d = parse("z1,z2\n1,2\n3,4\n", SchemaKind::Plain);
  REQUIRE(d.n() == 2);
  REQUIRE(d.dim() == 2);
}

TEST_CASE("regression csv requires x columns then y") {
  const Dataset d = parse("x1,x2,y\n1,0.5,4.2\n1,1.5,4.1\n", SchemaKind::Regression);
  REQUIRE(d.dim() == 3);
  REQUIRE_THROWS_AS(parse("x1,y2\n1,2\n", SchemaKind::Regression), SchemaError);
  REQUIRE_THROWS_AS(parse("x2,y\n1,2\n", SchemaKind::Regression), SchemaError);
}

TEST_CASE("dtr csv validates the treatment flag with a line number") {
  const Dataset d = parse("x1,x2,a,y\n211,4.2,1,10\n190,4.0,0,3\n", SchemaKind::Dtr);
  REQUIRE(d.n() == 2);
  try {
    parse("x1,x2,a,y\n211,4.2,1,10\n190,4.0,0.5,3\n", SchemaKind::Dtr);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("header is required and checked") {
  REQUIRE_THROWS_AS(parse("", SchemaKind::Plain), SchemaError);
  REQUIRE_THROWS_AS(parse("value\n1\n", SchemaKind::Plain), SchemaError);
  REQUIRE_THROWS_AS(parse("x1,x2,a\n1,2,0\n", SchemaKind::Dtr), SchemaError);
}

TEST_CASE("bad cells are reported with line and column") {
  try {
    parse("z1\n1.0\nabc\n", SchemaKind::Plain);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    REQUIRE(msg.find("line 3") != std::string::npos);
    REQUIRE(msg.find("column 1") != std::string::npos);
  }
  REQUIRE_THROWS_AS(parse("z1\n1.0x\n", SchemaKind::Plain), SchemaError);
  REQUIRE_THROWS_AS(parse("z1\ninf\n", SchemaKind::Plain), SchemaError);
  REQUIRE_THROWS_AS(parse("z1\nnan\n", SchemaKind::Plain), SchemaError);
}

TEST_CASE("ragged rows are rejected with a line number") {
  try {
    parse("z1,z2\n1,2\n3\n", SchemaKind::Plain);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("comment lines and empty header-only files") {
  const Dataset d = parse("# run config\n# more\nz1\n1\n# interior comment\n2\n", SchemaKind::Plain);
  REQUIRE(d.n() == 2);
  REQUIRE_THROWS_AS(parse("z1\n", SchemaKind::Plain), SchemaError);
}

TEST_CASE("dataset invariants") {
  REQUIRE_THROWS_AS(Dataset(RowMatrix(0, 1)), std::domain_error);
  RowMatrix bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(Dataset(std::move(bad)), std::domain_error);
}
