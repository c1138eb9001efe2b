// Copyright 2026 The lsmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "lsmpc/csv.hpp"
#include "lsmpc/scaling.hpp"

using namespace lsmpc;

TEST_CASE("scaler fit uses population statistics") {
  Eigen::MatrixXd rows(4, 2);
  rows << 1, 10, 2, 20, 3, 30, 4, 40;
  const Scaler s = Scaler::fit(rows);
  CHECK(s.mean()[0] == doctest::Approx(2.5));
  CHECK(s.mean()[1] == doctest::Approx(25.0));
  // Population variance of {1,2,3,4} is 1.25.
  CHECK(s.std()[0] == doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));
  CHECK(s.std()[1] == doctest::Approx(std::sqrt(125.0)).epsilon(1e-12));

  const Eigen::MatrixXd std_rows = s.apply_all(rows);
  CHECK(std_rows.col(0).mean() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std_rows.col(0).squaredNorm() / 4 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scaler roundtrip and errors") {
  const Scaler s(Eigen::Vector2d(5.0, -3.0), Eigen::Vector2d(2.0, 0.5));
  const Eigen::Vector2d x(7.3, -2.1);
  const Eigen::VectorXd z = s.apply(x);
  CHECK(z[0] == doctest::Approx((7.3 - 5.0) / 2.0));
  const Eigen::VectorXd back = s.invert(z);
  CHECK(back[0] == doctest::Approx(x[0]).epsilon(1e-14));
  CHECK(back[1] == doctest::Approx(x[1]).epsilon(1e-14));
  CHECK(s.apply(1, -3.0) == doctest::Approx(0.0));
  CHECK(s.invert(1, 2.0) == doctest::Approx(-2.0));

  Eigen::MatrixXd degenerate(3, 2);
  degenerate << 1, 7, 2, 7, 3, 7;
  CHECK_THROWS_WITH_AS(Scaler::fit(degenerate),
                       doctest::Contains("dimension 1"), std::invalid_argument);

  Eigen::MatrixXd single(1, 2);
  single << 1, 2;
  CHECK_THROWS_AS(Scaler::fit(single), std::invalid_argument);

  CHECK_THROWS_AS(Scaler(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)),
                  std::invalid_argument);
}

TEST_CASE("csv roundtrip preserves doubles bit for bit") {
  const std::string path = "test_roundtrip.csv";
  const double values[] = {1.0 / 3.0, 3.141592653589793, 1e-17, -0.0, 12345.6789,
                           5e-324, 1.7976931348623157e308};
  {
    CsvWriter w(path, {"a", "b"});
    for (double v : values) {
      w.begin_row();
      w.add(v);
      w.add(-v);
      w.end_row();
    }
    w.save();
  }
  const CsvTable t = read_csv(path);
  REQUIRE(t.header.size() == 2);
  REQUIRE(t.rows.size() == 7);
  for (int i = 0; i < 7; ++i) {
    CHECK(t.number(i, 0) == values[i]);
    CHECK(t.number(i, 1) == -values[i]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("csv errors are named") {
  const std::string path = "test_bad.csv";
  write_text_file(path, "a,b\n1,2\n3\n");
  CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains("row"),
                       std::runtime_error);
  write_text_file(path, "a,b\n1,2\n");
  const CsvTable t = read_csv(path);
  CHECK_THROWS_WITH_AS(t.column("missing"), doctest::Contains("missing"),
                       std::runtime_error);
  CHECK(t.column("b") == 1);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(read_csv("no_such_file.csv"), std::runtime_error);
}

TEST_CASE("format_double uses shortest exact form") {
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.5) == "0.5");
  const std::string third = format_double(1.0 / 3.0);
  CHECK(std::stod(third) == 1.0 / 3.0);
}

TEST_CASE("windows line endings are accepted") {
  const std::string path = "test_crlf.csv";
  write_text_file(path, "a,b\r\n1,2\r\n");
  const CsvTable t = read_csv(path);
  CHECK(t.number(0, 1) == 2.0);
  std::filesystem::remove(path);
}
