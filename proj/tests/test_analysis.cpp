// SPDX-License-Identifier: Apache-2.0
//
// Representation analysis: CKA properties, attention distance, plateaus.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cap/analysis.hpp"
#include "doctest.h"

using cap::Matd;
using cap::Vecd;

namespace {

Matd randm(cap::Rng& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
  Matd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = s * cap::gaussian(rng);
  return m;
}

// Random orthogonal matrix via QR of a Gaussian draw.
Matd random_orthogonal(cap::Rng& rng, Eigen::Index d) {
  const Matd a = randm(rng, d, d);
  Eigen::HouseholderQR<Matd> qr(a);
  Matd q = qr.householderQ();
  return q;
}

}  // namespace

TEST_CASE("CKA basic properties") {
  cap::Rng rng(61);
  const Matd x = randm(rng, 30, 6);
  const Matd y = randm(rng, 30, 4);
  CHECK(cap::linear_cka(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cap::linear_cka(x, y) == doctest::Approx(cap::linear_cka(y, x)));
  CHECK(cap::linear_cka(x, y) >= 0.0);
  CHECK(cap::linear_cka(x, y) <= 1.0);
  // Invariance to orthogonal maps and isotropic scaling.
  const Matd q = random_orthogonal(rng, 6);
  CHECK(cap::linear_cka(x, Matd(x * q)) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(cap::linear_cka(x, Matd(2.7 * x)) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cap::linear_cka(Matd(0.5 * x), y) ==
        doctest::Approx(cap::linear_cka(x, y)).epsilon(1e-10));
  // Errors and degenerate inputs.
  CHECK_THROWS_AS((void)cap::linear_cka(x, Matd(randm(rng, 29, 4))), cap::Error);
  CHECK_THROWS_AS((void)cap::linear_cka(Matd(randm(rng, 1, 3)),
                                        Matd(randm(rng, 1, 3))),
                  cap::Error);
  CHECK(cap::linear_cka(Matd(Matd::Zero(30, 3)), y) == 0.0);
  // Constant columns center to zero as well.
  CHECK(cap::linear_cka(Matd(Matd::Ones(30, 3)), y) == 0.0);
}

TEST_CASE("CKA equals the centered-Gram HSIC formula") {
  cap::Rng rng(62);
  const Matd x = randm(rng, 24, 5);
  const Matd y = randm(rng, 24, 7);
  auto centered = [](const Matd& m) {
    return Matd(m.rowwise() - m.colwise().mean());
  };
  const Matd k = centered(x) * centered(x).transpose();
  const Matd l = centered(y) * centered(y).transpose();
  const double hsic_xy = (k.array() * l.array()).sum();
  const double expect =
      hsic_xy / std::sqrt((k.array() * k.array()).sum() *
                          (l.array() * l.array()).sum());
  CHECK(cap::linear_cka(x, y) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("CKA grid flags shared and divergent layers") {
  cap::Rng rng(63);
  const Matd shared = randm(rng, 40, 6);
  const Matd input = randm(rng, 40, 6);
  std::vector<Matd> a{input, shared, randm(rng, 40, 6)};
  std::vector<Matd> b{input, Matd(shared * random_orthogonal(rng, 6)),
                      randm(rng, 40, 6)};
  const auto grid = cap::cka_grid(a, b, "ma", "mb");
  REQUIRE(grid.grid.rows() == 3);
  REQUIRE(grid.grid.cols() == 3);
  CHECK(grid.sample_size == 40);
  CHECK(grid.grid(1, 1) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(grid.grid(1, 1) > grid.grid(2, 2));
  // Within-model grid has a unit diagonal.
  const auto self = cap::cka_grid(a, a, "ma", "ma");
  for (int l = 0; l < 3; ++l)
    CHECK(self.grid(l, l) == doctest::Approx(1.0).epsilon(1e-10));

  const auto path =
      (std::filesystem::temp_directory_path() / "capbench_cka.csv").string();
  grid.save_csv(path);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.find("model_a=ma") != std::string::npos);
  CHECK(line.find("sample_size=40") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("attention distance fixtures") {
  const double period = 0.040;
  // Identity attention looks only at itself.
  std::vector<Matd> heads{Matd::Identity(5, 5)};
  CHECK(cap::mean_attention_distance(heads, period)[0] == 0.0);
  // Uniform attention over T' = 4: mean |i-j| = 1.25 frames.
  heads[0] = Matd::Constant(4, 4, 0.25);
  CHECK(cap::mean_attention_distance(heads, period)[0] ==
        doctest::Approx(1.25 * period));
  // Every frame fixed on frame 0 with T' = 3: (0 + 1 + 2) / 3 = 1 frame.
  Matd fix = Matd::Zero(3, 3);
  fix.col(0).setOnes();
  heads[0] = fix;
  CHECK(cap::mean_attention_distance(heads, period)[0] ==
        doctest::Approx(1.0 * period));
}

TEST_CASE("attention distance matches a brute-force double sum") {
  cap::Rng rng(64);
  std::vector<Matd> heads;
  for (int h = 0; h < 3; ++h) {
    Matd a(6, 6);
    for (Eigen::Index i = 0; i < 6; ++i) {
      for (Eigen::Index j = 0; j < 6; ++j)
        a(i, j) = cap::uniform(rng, 0.05, 1.0);
      a.row(i) /= a.row(i).sum();
    }
    heads.push_back(a);
  }
  const Vecd got = cap::mean_attention_distance(heads, 0.040);
  for (int h = 0; h < 3; ++h) {
    double acc = 0;
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index j = 0; j < 6; ++j)
        acc += heads[h](i, j) * std::abs(static_cast<double>(i - j));
    CHECK(got[h] == doctest::Approx(acc / 6.0 * 0.040).epsilon(1e-12));
  }
}

TEST_CASE("attention distance rejects unnormalized rows") {
  std::vector<Matd> heads{Matd::Constant(4, 4, 0.3)};
  CHECK_THROWS_WITH_AS((void)cap::mean_attention_distance(heads, 0.040),
                       doctest::Contains("not normalized"), cap::Error);
}

TEST_CASE("layer curves normalize positions and find the plateau") {
  const auto flat = cap::layer_curve("m", {1.0, 1.0, 1.0, 1.0});
  REQUIRE(flat.positions.size() == 4);
  CHECK(flat.positions.front() == 0.0);
  CHECK(flat.positions.back() == 1.0);
  CHECK(flat.positions[1] == doctest::Approx(1.0 / 3));
  CHECK(flat.plateau_begin == 0);
  CHECK(flat.plateau_end == 3);

  const auto curve =
      cap::layer_curve("m", {0.5, 0.6, 0.8, 0.81, 0.80, 0.6});
  CHECK(curve.plateau_begin == 2);
  CHECK(curve.plateau_end == 4);

  // A 9-point curve (8 layers + input) keeps its indices.
  std::vector<double> scores(9, 0.4);
  scores[5] = 0.9;
  scores[6] = 0.89;
  const auto nine = cap::layer_curve("m", scores);
  REQUIRE(nine.positions.size() == 9);
  CHECK(nine.plateau_begin == 5);
  CHECK(nine.plateau_end == 6);
}
