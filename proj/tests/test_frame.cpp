#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bregcal/errors.hpp"
#include "bregcal/frame.hpp"

using namespace bregcal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bregcal_frame_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }
};

}  // namespace

TEST_CASE("respondent frame round trip") {
  TempDir tmp;
  const auto path = tmp.file("resp.csv",
                             "id,y,x1,x2,pi\n"
                             "a,1.5,0.25,2,0.5\n"
                             "b,-2.0,1.5,3,0.25\n");
  const RespondentFrame f = read_respondents(path);
  REQUIRE(f.ids.size() == 2);
  CHECK(f.ids[0] == "a");
  CHECK(f.y[1] == doctest::Approx(-2.0));
  CHECK(f.X(0, 0) == doctest::Approx(0.25));
  CHECK(f.X(1, 1) == doctest::Approx(3.0));
  REQUIRE(f.has_pi);
  CHECK(f.pi[1] == doctest::Approx(0.25));

  const auto nopi = tmp.file("resp2.csv", "id,y,x1\nu,0.5,1\n");
  CHECK_FALSE(read_respondents(nopi).has_pi);
}

TEST_CASE("schema errors name the offending column") {
  TempDir tmp;
  const auto missing_y = tmp.file("m1.csv", "id,x1\nu,1\n");
  try {
    read_respondents(missing_y);
    CHECK(false);
  } catch (const SchemaError& e) {
    CHECK(e.column() == "y");
  }

  const auto bad_cell = tmp.file("m2.csv", "id,y,x1\nu,abc,1\n");
  try {
    read_respondents(bad_cell);
    CHECK(false);
  } catch (const SchemaError& e) {
    CHECK(e.column() == "y");
    CHECK(std::string(e.what()).find("abc") != std::string::npos);
  }

  const auto ragged = tmp.file("m3.csv", "id,y,x1\nu,1\n");
  CHECK_THROWS_AS(read_respondents(ragged), SchemaError);

  const auto no_x = tmp.file("m4.csv", "id,y\nu,1\n");
  CHECK_THROWS_AS(read_respondents(no_x), SchemaError);
}

TEST_CASE("population frame and delta validation") {
  TempDir tmp;
  const auto path = tmp.file("pop.csv",
                             "id,x1,x2,delta\n"
                             "a,1,2,1\n"
                             "b,3,4,0\n"
                             "c,5,6,1\n");
  const PopulationFrame f = read_population(path);
  CHECK(f.X.rows() == 3);
  CHECK(f.delta.sum() == 2);

  const auto bad = tmp.file("pop2.csv", "id,x1,delta\na,1,2\n");
  CHECK_THROWS_AS(read_population(bad), SchemaError);
}

TEST_CASE("targets frame is a single labelled row") {
  TempDir tmp;
  const auto path = tmp.file("t.csv", "x1,x2\n1.5,2.5\n");
  const TargetsFrame f = read_targets(path);
  REQUIRE(f.names.size() == 2);
  CHECK(f.values[0] == doctest::Approx(1.5));

  const auto tworows = tmp.file("t2.csv", "x1\n1\n2\n");
  CHECK_THROWS_AS(read_targets(tworows), SchemaError);
}

TEST_CASE("respondent ids must appear in the population") {
  TempDir tmp;
  const RespondentFrame r =
      read_respondents(tmp.file("r.csv", "id,y,x1\nu,1,1\nv,2,2\n"));
  const PopulationFrame ok = read_population(
      tmp.file("p1.csv", "id,x1,delta\nu,1,1\nv,2,1\nw,3,0\n"));
  CHECK_NOTHROW(check_ids_subset(r, ok));
  const PopulationFrame bad =
      read_population(tmp.file("p2.csv", "id,x1,delta\nu,1,1\nw,3,0\n"));
  CHECK_THROWS_AS(check_ids_subset(r, bad), SchemaError);
}

TEST_CASE("weights writer preserves full precision") {
  TempDir tmp;
  Eigen::VectorXd w(2);
  w << 1.0 / 3.0, 17.0 / 14.0;
  const std::string path = (tmp.path / "w.csv").string();
  write_weights_csv(path, {"a", "b"}, w);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "id,weight");
  std::getline(in, line);
  const double v = std::stod(line.substr(2));
  CHECK(v == w[0]);  // round trip exactly
}
