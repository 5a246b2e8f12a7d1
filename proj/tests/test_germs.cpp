#include <doctest.h>

#include <cmath>
#include <memory>

#include <boost/multiprecision/cpp_int.hpp>

#include "k3gaps/errors.hpp"
#include "k3gaps/germs.hpp"
#include "support.hpp"

using namespace k3gaps;
using namespace k3gaps::germs;
using words::Word;

namespace {

Point eval(const GermMap& g, Point z) {
  REQUIRE(g.apply(z) == EvalStatus::ok);
  return z;
}

std::array<Matrix3c, 3> no_quadratic() { return {Matrix3c::Zero(), Matrix3c::Zero(), Matrix3c::Zero()}; }

// z -> z + (q z_1^2, 0, 0).
GermMap square_bump(double q) {
  std::array<Matrix3c, 3> quad = no_quadratic();
  quad[0](0, 0) = q;
  return GermMap::polynomial(Point::Zero(), Matrix3c::Identity(), quad);
}

}  // namespace

TEST_SUITE("germs") {
  TEST_CASE("composition order and inverses") {
    const Point c(1.0, 0.5, -0.25);
    Matrix3c a = Matrix3c::Identity();
    a(0, 1) = 2.0;
    const GermMap t = GermMap::translation(c), l = GermMap::linear(a);
    const Point z(0.1, 0.2, 0.3);
    CHECK((eval(compose(l, t), z) - a * (z + c)).norm() < 1e-14);
    CHECK((eval(compose(t, l), z) - (a * z + c)).norm() < 1e-14);

    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
      const GermMap f = testing::random_near_identity(rng, 0.5, 0.05);
      const Point w = 0.4 * testing::random_vector(rng);
      CHECK((eval(compose(f, f.inverse()), w) - w).norm() < 1e-12);
      CHECK((eval(compose(f.inverse(), f), w) - w).norm() < 1e-12);
    }
  }

  TEST_CASE("commuting maps") {
    Matrix3c a = Matrix3c::Identity(), b = Matrix3c::Identity();
    a(0, 0) = 1.1;
    b(1, 1) = 0.9;
    const GermMap c = commutator(GermMap::linear(a), GermMap::linear(b));
    const auto d = sup_deviation(c, BallSpec{Point::Zero(), 1.0}, {200});
    CHECK(d.sup < 1e-14);
  }

  TEST_CASE("sup deviation of explicit maps") {
    const Point c(0.3, Complex(0.0, 0.4), 0.0);
    CHECK(std::abs(sup_deviation(GermMap::translation(c), BallSpec{Point::Zero(), 2.0}).sup - 0.5) < 1e-14);

    // A = I + diag(0.2, 0, 0): the sup of |A z - z| over |z| = r is 0.2 r.
    Matrix3c a = Matrix3c::Identity();
    a(0, 0) = 1.2;
    for (SamplingMethod m : {SamplingMethod::random, SamplingMethod::sphere_grid, SamplingMethod::random_polish}) {
      const auto d = sup_deviation(GermMap::linear(a), BallSpec{Point::Zero(), 0.5}, {500, m});
      CHECK(d.sup <= 0.1 + 1e-15);
      CHECK(d.sup >= (m == SamplingMethod::random_polish ? 0.0999 : 0.09));
      CHECK(d.certifying());
    }
  }

  TEST_CASE("sampling is deterministic and thread independent") {
    Rng rng(2);
    const GermMap f = testing::random_near_identity(rng, 0.5, 0.05);
    const BallSpec ball{Point::Zero(), 0.5};
    const auto a = sup_deviation(f, ball, {300, SamplingMethod::random, 5, 1});
    const auto b = sup_deviation(f, ball, {300, SamplingMethod::random, 5, 4});
    CHECK(a.sup == b.sup);
    CHECK(a.argmax == b.argmax);
    for (std::size_t i = 0; i < 50; ++i) {
      CHECK(std::abs(sphere_direction(SamplingMethod::random, 3, i).norm() - 1.0) < 1e-14);
      CHECK(sphere_direction(SamplingMethod::sphere_grid, 3, i) == sphere_direction(SamplingMethod::sphere_grid, 3, i));
    }
    CHECK(parse_sampling_method(to_string(SamplingMethod::random_polish)) == SamplingMethod::random_polish);
  }

  TEST_CASE("domain failures are counted") {
    const GermMap f = GermMap::polynomial(Point::Zero(), Matrix3c::Identity(), no_quadratic(), BallSpec{Point::Zero(), 0.1});
    const auto d = sup_deviation(f, BallSpec{Point::Zero(), 0.2}, {50});
    CHECK(d.failures == 50);
    CHECK_FALSE(d.certifying());
  }

  TEST_CASE("jacobians") {
    Rng rng(3);
    const GermMap f = testing::random_near_identity(rng, 1.0, 0.3);
    // Central differences are exact for quadratics up to rounding.
    const Point z(0.1, Complex(0.0, 0.2), -0.1);
    const Matrix3c j = numeric_jacobian(f, z, 1e-5);
    const double h = 1e-7;
    for (int k = 0; k < 3; ++k) {
      Point e = Point::Zero();
      e[k] = h;
      const Point col = (eval(f, z + e) - eval(f, z)) / h;
      CHECK((col - j.col(k)).norm() < 1e-5);
    }
    Matrix3c d = Matrix3c::Zero();
    d(0, 0) = 3.0;
    d(1, 1) = Complex(0.0, -2.0);
    CHECK(std::abs(spectral_norm(d) - 3.0) < 1e-14);
  }

  TEST_CASE("surface word germs") {
    auto maps = std::make_shared<const surface::Involutions>(surface::SurfaceCoefficients::wehler_example());
    const GermMap x = GermMap::surface_word(Word::parse("x"), maps);
    Matrix3c expected = Matrix3c::Identity();
    expected(0, 0) = -1.0;
    CHECK((numeric_jacobian(x, Point::Zero()) - expected).norm() < 1e-8);

    const std::vector<GermMap> gens = {GermMap::surface_word(Word::parse("x y"), maps),
                                       GermMap::surface_word(Word::parse("y z"), maps)};
    const GermMap viaword = word_germ(Word::parse("g1 g2 g1'"), gens);
    const GermMap direct = GermMap::surface_word(Word::parse("x y y z y x"), maps);
    const Point z(0.05, -0.02, Complex(0.0, 0.03));
    CHECK((eval(viaword, z) - eval(direct, z)).norm() < 1e-14);
    CHECK((eval(compose(direct, direct.inverse()), z) - z).norm() < 1e-12);
  }

  TEST_CASE("chart conjugation") {
    const auto s = surface::SurfaceCoefficients::sphere();
    const Chart chart{Point(0.6, 0.0, 0.8), 0.4};
    const Word w = Word::parse("x y");
    const GermMap g = chart_conjugate(w, s, chart);
    const Point z(0.1, 0.2, -0.1);
    Point p = chart.center + chart.rho * z;
    REQUIRE(surface::Involutions(s).apply(w, p, {}) == surface::StepStatus::ok);
    CHECK((eval(g, z) - (p - chart.center) / chart.rho).norm() < 1e-13);
    CHECK_THROWS_AS(chart_conjugate(w, s, Chart{chart.center, 0.0}), DomainError);
  }

  TEST_CASE("epsilon search on a quadratic bump") {
    // Deviation on B(eps) is eps^2 for the forward map, so the seed condition
    // with a 10% margin holds up to eps = 0.9/32, slightly less for the inverse.
    const std::vector<GermMap> gens = {square_bump(1.0), square_bump(1.0).inverse()};
    const EpsilonSearch s = find_epsilon(gens, {1e-4, 1.0}, {400, SamplingMethod::random_polish});
    REQUIRE(s.found);
    CHECK(s.derivative_ok);
    CHECK(s.epsilon <= 0.9 / 32.0 + 1e-9);
    CHECK(s.epsilon >= 0.025);
    CHECK(s.seed.holds);

    Matrix3c twice = 2.0 * Matrix3c::Identity();
    const std::vector<GermMap> bad = {GermMap::linear(twice)};
    CHECK_FALSE(find_epsilon(bad, {1e-4, 1.0}).found);
  }

  TEST_CASE("hessian constant") {
    // Sampled directions only approach the maximum 2 along e_0 from below.
    const double h = estimate_hessian_constant(square_bump(2.0));
    CHECK(h <= 2.0 + 1e-6);
    CHECK(h >= 1.5);
    CHECK(estimate_hessian_constant(square_bump(2.0), 1e-2, 4000) >= 1.9);
    CHECK(estimate_hessian_constant(GermMap::translation(Point(1.0, 0.0, 0.0))) < 1e-6);
  }

  TEST_CASE("induction identities in exact arithmetic") {
    using Q = boost::multiprecision::cpp_rational;
    for (const Q eps : {Q(1, 2), Q(1, 37), Q(3, 1000)}) {
      for (int n = 0; n < 40; ++n) {
        const Q r = level_radius(eps, n), d = level_delta(eps, n), t = level_tau(eps, n);
        CHECK(r >= eps / 2);
        CHECK(r - 4 * d - t == level_radius(eps, n + 1));
        CHECK(2 / t * d * d == d / 2);
      }
    }
  }

  TEST_CASE("contraction parameters") {
    CHECK_NOTHROW((ContractionParams{0.5, 0.005, 0.05}.validate()));
    CHECK_THROWS_AS((ContractionParams{0.5, 0.1, 0.2}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ContractionParams{0.0, 0.001, 0.01}.validate()), std::invalid_argument);
    CHECK((ContractionParams{0.5, 0.005, 0.05}.inner_radius()) == doctest::Approx(0.43));
  }

  TEST_CASE("commutator estimate on random pairs") {
    Rng rng(4);
    const ContractionParams p{0.5, 0.005, 0.05};
    for (int i = 0; i < 25; ++i) {
      const GermMap f = testing::random_near_identity(rng, p.r, p.delta);
      const GermMap g = testing::random_near_identity(rng, p.r, p.delta);
      const ContractionReport rep = commutator_contraction_check(f, g, p, {300});
      CHECK(rep.holds);
      CHECK(rep.deviation_commutator <= rep.bound);
    }
    const GermMap big = GermMap::translation(Point(0.1, 0.0, 0.0));
    CHECK_THROWS_AS(commutator_contraction_check(big, big, p), HypothesisViolation);
  }

  TEST_CASE("decay table on synthetic generators") {
    const std::vector<GermMap> gens = {square_bump(0.3), GermMap::translation(Point(0.0, 1e-4, 0.0))};
    DecayOptions opts;
    opts.max_level = 2;
    opts.full_levels = 1;
    opts.level_cap = 8;
    opts.sampling = {64};
    const DecayTable t = derived_decay_table(gens, 0.02, opts);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.passed());
    CHECK(t.rows[0].evaluated == 4);
    CHECK(t.rows[1].complete);
    CHECK(t.rows[2].evaluated == 8);
    CHECK(t.to_csv().rfind("level,count_evaluated,max_dev,bound,ratio\r\n", 0) == 0);

    const std::vector<GermMap> far = {GermMap::translation(Point(1.0, 0.0, 0.0)), gens[1]};
    CHECK_THROWS_AS(derived_decay_table(far, 0.02, opts), HypothesisViolation);

    const std::vector<GermMap> tiny = {
        GermMap::polynomial(Point::Zero(), Matrix3c::Identity(), no_quadratic(), BallSpec{Point::Zero(), 1e-3}),
        gens[1]};
    opts.verify_seed = false;
    CHECK_THROWS_AS(derived_decay_table(tiny, 0.02, opts), DomainFailure);
  }
}
