#include <doctest.h>

#include "oracles.hpp"
#include "wave/error.hpp"
#include "wave/kron.hpp"

using namespace wave;

namespace {

std::vector<Matrix> randoms(std::mt19937_64& rng, std::size_t n, std::size_t r, std::size_t c) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::random_matrix(rng, r, c));
  return out;
}

}  // namespace

TEST_CASE("kron_product hand examples") {
  const Matrix b = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix expected = Matrix::from_rows({{1, 2, 0, 0}, {3, 4, 0, 0}, {0, 0, 1, 2}, {0, 0, 3, 4}});
  CHECK(kron_product(Matrix::identity(2), b) == expected);
  CHECK(kron_product(Matrix::from_rows({{1, 2}}), Matrix::from_rows({{3}, {4}})) ==
        Matrix::from_rows({{3, 6}, {4, 8}}));
}

TEST_CASE("kron_product shape for full-width templates") {
  const Matrix k = kron_product(Matrix(192, 192, 1.0), Matrix(1, 4, 1.0));
  CHECK(k.rows() == 192);
  CHECK(k.cols() == 768);
}

TEST_CASE("kron_product matches index arithmetic on every shape up to 3x3") {
  std::mt19937_64 rng(1);
  for (std::size_t ar = 1; ar <= 3; ++ar)
    for (std::size_t ac = 1; ac <= 3; ++ac)
      for (std::size_t br = 1; br <= 3; ++br)
        for (std::size_t bc = 1; bc <= 3; ++bc) {
          const Matrix a = oracle::random_matrix(rng, ar, ac);
          const Matrix b = oracle::random_matrix(rng, br, bc);
          CHECK(kron_product(a, b) == oracle::kron(a, b));
        }
}

TEST_CASE("compose_weight") {
  std::mt19937_64 rng(2);
  const Matrix t1 = oracle::random_matrix(rng, 3, 3);
  const Matrix t2 = oracle::random_matrix(rng, 3, 3);

  SUBCASE("identity scaler") {
    CHECK(compose_weight(std::vector{t1}, std::vector{Matrix(1, 1, 1.0)}) == t1);
  }
  SUBCASE("linearity") {
    CHECK(max_abs_diff(compose_weight(std::vector{t1, t2}, std::vector{Matrix(1, 1, 1.0), Matrix(1, 1, -1.0)}),
                       t1 - t2) == 0.0);
  }
  SUBCASE("brute force 2x2 templates with 2x3 scalers") {
    const auto ts = randoms(rng, 2, 2, 2);
    const auto ss = randoms(rng, 2, 2, 3);
    const Matrix w = compose_weight(ts, ss);
    CHECK(w.rows() == 4);
    CHECK(w.cols() == 6);
    CHECK(max_abs_diff(w, oracle::compose(ts, ss)) < 1e-6);
  }
  SUBCASE("bilinearity") {
    const auto ta = randoms(rng, 3, 2, 2), tb = randoms(rng, 3, 2, 2);
    const auto ss = randoms(rng, 3, 3, 1);
    std::vector<Matrix> tsum;
    for (std::size_t i = 0; i < 3; ++i) tsum.push_back(ta[i] * 2.0 + tb[i]);
    const Matrix lhs = compose_weight(tsum, ss);
    const Matrix rhs = compose_weight(ta, ss) * 2.0 + compose_weight(tb, ss);
    CHECK(max_abs_diff(lhs, rhs) < 1e-6);

    const auto sa = randoms(rng, 3, 3, 1), sb = randoms(rng, 3, 3, 1);
    std::vector<Matrix> ssum;
    for (std::size_t i = 0; i < 3; ++i) ssum.push_back(sa[i] - sb[i] * 0.5);
    CHECK(max_abs_diff(compose_weight(ta, ssum), compose_weight(ta, sa) - compose_weight(ta, sb) * 0.5) < 1e-6);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(compose_weight(std::vector<Matrix>{}, std::vector<Matrix>{}), ShapeError);
    CHECK_THROWS_AS(compose_weight(std::vector{t1, t2}, std::vector{Matrix(1, 1)}), ShapeError);
    CHECK_THROWS_AS(compose_weight(std::vector{t1, Matrix(2, 2)}, std::vector{Matrix(1, 1), Matrix(1, 1)}),
                    ShapeError);
    CHECK_THROWS_AS(compose_weight(std::vector{t1, t2}, std::vector{Matrix(1, 1), Matrix(1, 2)}), ShapeError);
  }
}

TEST_CASE("shape law") {
  std::mt19937_64 rng(3);
  for (std::size_t t1 = 1; t1 <= 4; ++t1)
    for (std::size_t s2 = 1; s2 <= 4; ++s2) {
      const auto ts = randoms(rng, 2, t1, 5 - t1);
      const auto ss = randoms(rng, 2, 5 - s2, s2);
      const Matrix w = compose_weight(ts, ss);
      CHECK(w.rows() == t1 * (5 - s2));
      CHECK(w.cols() == (5 - t1) * s2);
    }
}

TEST_CASE("factor gradient closed forms") {
  SUBCASE("identity template, all-ones upstream") {
    const std::size_t t = 3;
    const auto ds = grad_scalers(Matrix(6, 6, 1.0), std::vector{Matrix::identity(t)});
    CHECK(ds[0] == Matrix(2, 2, static_cast<double>(t)));
  }
  SUBCASE("all-ones upstream, arbitrary template") {
    std::mt19937_64 rng(4);
    const Matrix tm = oracle::random_matrix(rng, 2, 3);
    double sum = 0.0;
    for (double v : tm.data()) sum += v;
    const auto ds = grad_scalers(Matrix(4, 6, 1.0), std::vector{tm});
    CHECK(max_abs_diff(ds[0], Matrix(2, 2, sum)) < 1e-12);
  }
  SUBCASE("unit scaler returns upstream") {
    std::mt19937_64 rng(5);
    const Matrix g = oracle::random_matrix(rng, 3, 4);
    CHECK(grad_templates(g, std::vector{Matrix(1, 1, 1.0)})[0] == g);
  }
  SUBCASE("all-ones scaler sums blocks") {
    std::mt19937_64 rng(6);
    const Matrix g = oracle::random_matrix(rng, 4, 6);
    const Matrix dt = grad_templates(g, std::vector{Matrix(2, 3, 1.0)})[0];
    REQUIRE(dt.rows() == 2);
    REQUIRE(dt.cols() == 2);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k) {
        double s = 0.0;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 3; ++b) s += g(j * 2 + a, k * 3 + b);
        CHECK(std::abs(dt(j, k) - s) < 1e-12);
      }
  }
  SUBCASE("non-divisible upstream") {
    CHECK_THROWS_AS(grad_scalers(Matrix(5, 4), std::vector{Matrix(2, 2)}), ShapeError);
    CHECK_THROWS_AS(grad_templates(Matrix(4, 5), std::vector{Matrix(2, 2)}), ShapeError);
  }
}

TEST_CASE("factor gradients match finite differences") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> dim(1, 3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = dim(rng), t1 = dim(rng), t2 = dim(rng), s1 = dim(rng), s2 = dim(rng);
    auto ts = randoms(rng, n, t1, t2);
    auto ss = randoms(rng, n, s1, s2);
    const Matrix c = oracle::random_matrix(rng, t1 * s1, t2 * s2);
    // smooth nonlinear scalar: sum c * tanh(W)
    auto f = [&] {
      Matrix w = compose_weight(ts, ss);
      for (double& v : w.data()) v = std::tanh(v);
      return oracle::probe(w, c);
    };
    Matrix g = compose_weight(ts, ss);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double th = std::tanh(g.data()[i]);
      g.data()[i] = c.data()[i] * (1.0 - th * th);
    }
    const auto dt = grad_templates(g, ss);
    const auto ds = grad_scalers(g, ts);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < ts[i].size(); ++k)
        CHECK(oracle::relative_error(dt[i].data()[k], oracle::central_diff(f, ts[i].data()[k])) < 1e-4);
      for (std::size_t k = 0; k < ss[i].size(); ++k)
        CHECK(oracle::relative_error(ds[i].data()[k], oracle::central_diff(f, ss[i].data()[k])) < 1e-4);
    }
  }
}

TEST_CASE("block partition") {
  const Matrix w2 = Matrix::from_rows({{1, 2}, {3, 4}});
  const BlockGrid g2 = block_partition(w2, 2, 2);
  CHECK(g2[1][0] == Matrix::from_rows({{3}}));

  Matrix w(4, 6);
  for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<double>(i);
  const BlockGrid g = block_partition(w, 2, 3);
  REQUIRE(g.size() == 2);
  REQUIRE(g[0].size() == 3);
  for (std::size_t bj = 0; bj < 2; ++bj)
    for (std::size_t bk = 0; bk < 3; ++bk) {
      REQUIRE(g[bj][bk].rows() == 2);
      REQUIRE(g[bj][bk].cols() == 2);
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(g[bj][bk](r, c) == static_cast<double>((bj * 2 + r) * 6 + bk * 2 + c));
    }
  CHECK(block_assemble(g) == w);

  try {
    block_partition(w, 3, 3);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("rows") != std::string::npos);
  }
  CHECK_THROWS_AS(block_partition(w, 2, 4), ShapeError);
}
