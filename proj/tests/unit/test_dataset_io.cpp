#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "percnn/dataset_io.hpp"

using namespace percnn;

TEST_CASE("dataset round trip") {
  Rng rng(3);
  Trajectory t;
  t.dt = 0.125;
  t.t0 = 2.0;
  for (int i = 0; i < 3; ++i) {
    Field f = testutil::random_field(rng, 2, {3, 4, 5});
    f.set_spacing({0.5, 0.25, 0.1});
    t.fields.push_back(f);
  }
  std::stringstream ss;
  write_dataset(ss, t, DatasetKind::grayscott3d);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "PCNF");
  const Dataset d = read_dataset(ss);
  CHECK(d.kind == DatasetKind::grayscott3d);
  CHECK(d.trajectory.dt == t.dt);
  CHECK(d.trajectory.t0 == t.t0);
  REQUIRE(d.trajectory.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(d.trajectory[i] == t[i]);
    CHECK(d.trajectory[i].spacing() == t[i].spacing());
  }

  std::stringstream again;
  write_dataset(again, d.trajectory, d.kind);
  CHECK(again.str() == bytes);

  SUBCASE("corruption is reported") {
    std::stringstream bad("PCNX" + bytes.substr(4));
    CHECK_THROWS_AS(read_dataset(bad), IoError);
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_dataset(cut), IoError);
    CHECK_THROWS_AS(read_dataset(std::filesystem::path("/nonexistent/x.pcnf")), IoError);
  }
}
