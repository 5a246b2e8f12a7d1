#include <doctest.h>

#include <cmath>

#include "k3gaps/errors.hpp"
#include "k3gaps/random.hpp"
#include "k3gaps/surface.hpp"

using namespace k3gaps;
using namespace k3gaps::surface;

namespace {

const Complex I(0.0, 1.0);

Complex wehler_direct(const Point& p) {
  const Complex x = p[0], y = p[1], z = p[2];
  return (1.0 + x * x) * (1.0 + y * y) * (1.0 + z * z) + x * y * z - 1.0;
}

Point random_point(Rng& rng, double scale) {
  Point p;
  for (int i = 0; i < 3; ++i) p[i] = Complex(rng.uniform(-scale, scale), rng.uniform(-scale, scale));
  return p;
}

}  // namespace

TEST_SUITE("surface") {
  TEST_CASE("presets") {
    Rng rng(1);
    const auto w = SurfaceCoefficients::wehler_example();
    for (int t = 0; t < 100; ++t) {
      const Point p = random_point(rng, 2.0);
      CHECK(std::abs(evaluate(w, p) - wehler_direct(p)) < 1e-12 * (1.0 + std::abs(wehler_direct(p))));
    }
    const auto s = SurfaceCoefficients::preset("sphere");
    CHECK(std::abs(evaluate(s, Point(0.6, 0.8, 0.0))) < 1e-15);
    CHECK(s.is_real());
    CHECK_THROWS_AS(SurfaceCoefficients::preset("cubic"), ConfigError);
  }

  TEST_CASE("gradient matches finite differences") {
    Rng rng(2);
    const auto w = SurfaceCoefficients::wehler_example();
    const double h = 1e-6;
    for (int t = 0; t < 50; ++t) {
      const Point p = random_point(rng, 1.0);
      const Point g = gradient(w, p);
      for (int k = 0; k < 3; ++k) {
        Point a = p, b = p;
        a[k] += h;
        b[k] -= h;
        const Complex fd = (evaluate(w, a) - evaluate(w, b)) / (2.0 * h);
        CHECK(std::abs(fd - g[k]) < 1e-6 * (1.0 + std::abs(g[k])));
      }
    }
  }

  TEST_CASE("singular point of the example") {
    const auto w = SurfaceCoefficients::wehler_example();
    CHECK(is_singular_at(w, Point::Zero()));
    CHECK_FALSE(is_singular_at(SurfaceCoefficients::sphere(), Point(1.0, 0.0, 0.0)));
    CHECK_THROWS_AS(is_singular_at(w, Point(1.0, 1.0, 1.0)), DomainError);
    CHECK_THROWS_AS(make_point(w, Point(1.0, 0.0, 0.0)), DomainError);
  }

  TEST_CASE("flips are involutions preserving the surface") {
    const auto c = perturb({SurfaceCoefficients::wehler_example(), 1e-2, PerturbationMode::complex, 4});
    const auto pts = sample_points(c, BallRegion{Point::Zero(), 1.0}, 40, SampleMode::complex);
    for (const SurfacePoint& p : pts) {
      for (Axis a : {Axis::x, Axis::y, Axis::z}) {
        const SurfacePoint q = vieta_involution(a, c, p);
        CHECK(std::abs(evaluate(c, q.coords)) < 1e-9);
        const int k = static_cast<int>(a);
        for (int j = 0; j < 3; ++j)
          if (j != k) CHECK(q.coords[j] == p.coords[j]);
        const SurfacePoint back = vieta_involution(a, c, q);
        CHECK((back.coords - p.coords).norm() < 1e-9);
      }
    }
  }

  TEST_CASE("derivatives at the origin of the example") {
    const auto w = SurfaceCoefficients::wehler_example();
    for (int k = 0; k < 3; ++k) {
      const Matrix3c d = derivative_at_fixed_point(static_cast<Axis>(k), w, Point::Zero());
      Matrix3c expected = Matrix3c::Identity();
      expected(k, k) = -1.0;
      CHECK((d - expected).norm() < 1e-10);
    }
    CHECK_THROWS_AS(derivative_at_fixed_point(Axis::x, w, Point(0.5, 0.0, 0.0)), FixedPointError);
  }

  TEST_CASE("flip jacobian matches finite differences") {
    Rng rng(8);
    const auto w = SurfaceCoefficients::wehler_example();
    const Involutions maps(w);
    const double h = 1e-6;
    for (int t = 0; t < 30; ++t) {
      const Point p = random_point(rng, 0.5);
      for (int a = 0; a < 3; ++a) {
        const Matrix3c j = flip_jacobian(static_cast<Axis>(a), w, p);
        for (int k = 0; k < 3; ++k) {
          Point u = p, v = p;
          u[k] += h;
          v[k] -= h;
          REQUIRE(maps.flip(static_cast<Axis>(a), u, 1e-12) == StepStatus::ok);
          REQUIRE(maps.flip(static_cast<Axis>(a), v, 1e-12) == StepStatus::ok);
          const Point col = (u - v) / (2.0 * h);
          CHECK((col - j.col(k)).norm() < 1e-6);
        }
      }
    }
  }

  TEST_CASE("words act left to right") {
    const auto c = perturb({SurfaceCoefficients::wehler_example(), 1e-2, PerturbationMode::complex, 2});
    const auto pts = sample_points(c, BallRegion{Point::Zero(), 0.8}, 10, SampleMode::complex, {200000, 3, 1e-9});
    for (const SurfacePoint& p : pts) {
      const WordImage xy = apply_word(words::Word::parse("x y"), c, p);
      const SurfacePoint step = vieta_involution(Axis::y, c, vieta_involution(Axis::x, c, p));
      CHECK((xy.point.coords - step.coords).norm() < 1e-12);
      CHECK(xy.drift.steps == 2);
      const WordImage id = apply_word(words::Word::parse("x y z z y x"), c, p);
      CHECK((id.point.coords - p.coords).norm() < 1e-12);
    }
    CHECK_THROWS_AS(apply_word(words::Word::parse("g1"), c, pts[0]), DomainError);
  }

  TEST_CASE("poles are reported") {
    const auto w = SurfaceCoefficients::wehler_example();
    // (1 + y^2) vanishes at y = i; x z = -i puts the point on the surface.
    const SurfacePoint p = make_point(w, Point(1.0, I, -I));
    CHECK_THROWS_AS(vieta_involution(Axis::x, w, p), PoleError);
    try {
      apply_word(words::Word::parse("y x"), w, p);
      FAIL("expected a pole");
    } catch (const PoleError& e) {
      CHECK(e.step() <= 1);
    } catch (const DivergenceError&) {
    }
  }

  TEST_CASE("perturbation") {
    const auto base = SurfaceCoefficients::wehler_example();
    const auto a = perturb({base, 1e-3, PerturbationMode::complex, 1});
    const auto b = perturb({base, 1e-3, PerturbationMode::complex, 1});
    CHECK(a == b);
    const auto r = perturb({base, 1e-3, PerturbationMode::real, 1});
    CHECK(r.is_real());
    for (std::size_t i = 0; i < 27; ++i) {
      CHECK(std::abs(a.data()[i] - base.data()[i]) <= 1e-3 + 1e-18);
      CHECK(std::abs(r.data()[i] - base.data()[i]) <= 1e-3 + 1e-18);
    }
    CHECK_FALSE(perturb({base, 1e-3, PerturbationMode::complex, 2}) == a);
    CHECK_THROWS_AS(perturb({base, -1.0, PerturbationMode::real, 1}), DomainError);
  }

  TEST_CASE("sampling") {
    const auto s = SurfaceCoefficients::sphere();
    const auto real = sample_points(s, BoxRegion{Eigen::Vector3d(-1, -1, -1), Eigen::Vector3d(1, 1, 1)}, 50,
                                    SampleMode::real);
    REQUIRE(real.size() == 50);
    for (const SurfacePoint& p : real) {
      CHECK(std::abs(evaluate(s, p.coords)) < 1e-9);
      for (int k = 0; k < 3; ++k) CHECK(p.coords[k].imag() == 0.0);
    }
    const auto cplx = sample_points(s, BallRegion{Point(0.0, 0.0, 1.0), 0.3}, 30, SampleMode::complex);
    for (const SurfacePoint& p : cplx) CHECK((p.coords - Point(0.0, 0.0, 1.0)).norm() <= 0.3 + 1e-12);
    const auto w = perturb({SurfaceCoefficients::wehler_example(), 1e-3, PerturbationMode::complex, 1});
    CHECK_THROWS_AS(sample_points(w, BallRegion{}, 5, SampleMode::real), DomainError);
  }

  TEST_CASE("quadratic roots") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
      const Complex a(rng.uniform(-2, 2), rng.uniform(-2, 2)), b(rng.uniform(-2, 2), rng.uniform(-2, 2)),
          c(rng.uniform(-2, 2), rng.uniform(-2, 2));
      const auto r = quadratic_roots(a, b, c);
      for (const Complex& x : r) CHECK(std::abs(a * x * x + b * x + c) < 1e-10);
      CHECK(std::abs(r[0] + r[1] + b / a) < 1e-10);
    }
    // Cancellation-prone case.
    const auto r = quadratic_roots(1.0, 1e8, 1.0);
    CHECK(std::abs(r[0] * r[1] - 1.0) < 1e-12);
  }
}
