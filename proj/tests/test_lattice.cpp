#include <doctest.h>

#include <cmath>
#include <complex>

#include <Eigen/Eigenvalues>

#include "k3gaps/errors.hpp"
#include "k3gaps/lattice.hpp"
#include "k3gaps/random.hpp"

using namespace k3gaps;
using namespace k3gaps::lattice;
using words::Word;

namespace {

using Plain = std::array<BigInt, 9>;

const Plain kG = {0, 2, 2, 2, 0, 2, 2, 2, 0};

Plain mul(const Plain& a, const Plain& b) {
  Plain c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      BigInt s = 0;
      for (int k = 0; k < 3; ++k) s += a[3 * i + k] * b[3 * k + j];
      c[3 * i + j] = s;
    }
  return c;
}

Plain transpose(const Plain& a) {
  Plain t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[3 * j + i] = a[3 * i + j];
  return t;
}

Plain identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

// sigma_x fixes L_y, L_z and sends L_x to 2 L_y + 2 L_z - L_x; columns are images.
Plain sigma(int axis) {
  Plain m = identity();
  for (int i = 0; i < 3; ++i) m[3 * i + axis] = i == axis ? -1 : 2;
  return m;
}

// Pushforward of a word in x, y, z, first letter applied first.
Plain push(const Word& w) {
  Plain m = identity();
  for (const auto& l : w.letters()) m = mul(sigma(l.generator), m);
  return m;
}

Word substitute(const Word& w, const std::vector<Word>& gens) {
  Word out;
  for (const auto& l : w.letters()) out = out * (l.inverted ? gens[l.generator].inverse() : gens[l.generator]);
  return out;
}

// 1^T G M 1 = 12 <M_* omega_0, omega_0>.
BigInt lambda12(const Plain& m) {
  BigInt s = 0;
  const Plain gm = mul(kG, m);
  for (const BigInt& e : gm) s += e;
  return s;
}

Word random_involution_word(Rng& rng, std::size_t n) {
  std::vector<words::Letter> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(words::Letter::sigma(static_cast<std::uint8_t>(rng.below(3))));
  return Word::reduce(v);
}

double eigen_radius(const IsometryMatrix& m) {
  Eigen::EigenSolver<Eigen::Matrix3d> es(m.normalized());
  double r = 0.0;
  for (int i = 0; i < 3; ++i) r = std::max(r, std::abs(es.eigenvalues()[i]));
  return r * std::exp(m.log_scale());
}

}  // namespace

TEST_SUITE("lattice") {
  TEST_CASE("involution matrices") {
    for (int a = 0; a < 3; ++a) {
      const IsometryMatrix m = involution_matrix(a);
      CHECK(m.integers() == sigma(a));
      CHECK(m.gram_invariant());
      CHECK(m.times(m).is_identity());
      CHECK(m.determinant() == -1);
      CHECK(mul(transpose(sigma(a)), mul(kG, sigma(a))) == kG);
    }
  }

  TEST_CASE("word matrices") {
    Rng rng(17);
    for (int t = 0; t < 300; ++t) {
      const Word u = random_involution_word(rng, rng.below(12));
      const Word v = random_involution_word(rng, rng.below(12));
      const IsometryMatrix mu = word_matrix(u), mv = word_matrix(v);
      CHECK(mu.integers() == push(u));
      CHECK(word_matrix(u * v).integers() == mv.times(mu).integers());
      CHECK(mu.times(mu.inverse()).is_identity());
      CHECK(mu.gram_invariant());
      CHECK(mu.determinant() == ((u.size() % 2) ? -1 : 1));
      CHECK(commutator_matrix(mu, mv).integers() == push(words::commutator(u, v)));
    }
  }

  TEST_CASE("schreier matrices") {
    const auto gens = words::schreier_generators();
    const auto mats = schreier_matrices();
    REQUIRE(mats.size() == gens.size());
    for (std::size_t i = 0; i < gens.size(); ++i) {
      CHECK(mats[i].integers() == push(gens[i]));
      CHECK(mats[i].determinant() == 1);
    }
    const Word w = Word::parse("g1 g3' g2 g5 g4' g1'");
    CHECK(word_matrix(w, mats).integers() == push(substitute(w, gens)));
  }

  TEST_CASE("classification fixtures") {
    const IsometryMatrix xyz = word_matrix(Word::parse("x y z"));
    // Characteristic polynomial (t + 1)(t^2 - 18 t + 1) = t^3 - 17 t^2 - 17 t + 1.
    const Plain& m = xyz.integers();
    const BigInt minors = m[0] * m[4] - m[1] * m[3] + m[0] * m[8] - m[2] * m[6] + m[4] * m[8] - m[5] * m[7];
    CHECK(xyz.trace() == 17);
    CHECK(minors == -17);
    CHECK(xyz.determinant() == -1);
    const Classification c = classify(xyz);
    CHECK(c.type == IsometryType::loxodromic);
    CHECK(std::abs(c.spectral_radius - (9.0 + 4.0 * std::sqrt(5.0))) < 1e-9);
    CHECK(c.trace_minus_det == "18");
    CHECK(std::abs(eigen_radius(xyz) - c.spectral_radius) < 1e-9);

    CHECK(classify(word_matrix(Word::parse("x y"))).type == IsometryType::parabolic);
    CHECK(classify(IsometryMatrix()).type == IsometryType::elliptic);
    CHECK(classify(involution_matrix(0)).type == IsometryType::elliptic);
  }

  TEST_CASE("classification agrees with eigenvalues") {
    Rng rng(23);
    for (int t = 0; t < 200; ++t) {
      const IsometryMatrix m = word_matrix(random_involution_word(rng, 1 + rng.below(10)));
      const Classification c = classify(m);
      const double r = eigen_radius(m);
      if (c.type == IsometryType::loxodromic) {
        CHECK(std::abs(r - c.spectral_radius) < 1e-7 * c.spectral_radius);
        CHECK(r > 1.0 + 1e-6);
      } else {
        CHECK(std::abs(c.spectral_radius - 1.0) < 1e-12);
      }
    }
  }

  TEST_CASE("float mode") {
    const IsometryMatrix xyz = word_matrix(Word::parse("x y z"));
    IsometryMatrix exact, loose;
    for (int k = 0; k < 20; ++k) {
      exact = exact.times(xyz);
      loose = loose.times(xyz, 16);
    }
    CHECK(exact.exact());
    CHECK_FALSE(loose.exact());
    CHECK((exact.normalized() - loose.normalized()).norm() < 1e-12);
    CHECK(std::abs(exact.log_scale() - loose.log_scale()) < 1e-12);
    CHECK_THROWS_AS(loose.integers(), std::logic_error);
    CHECK(classify(loose).type == IsometryType::loxodromic);
    CHECK(std::abs(classify(loose).log_spectral_radius - 20.0 * std::log(9.0 + 4.0 * std::sqrt(5.0))) < 1e-8);
  }

  TEST_CASE("json of large entries") {
    IsometryMatrix m;
    const IsometryMatrix xyz = word_matrix(Word::parse("x y z"));
    for (int k = 0; k < 15; ++k) m = m.times(xyz);
    const auto j = m.to_json();
    CHECK(j.dump().find('"') != std::string::npos);
  }

  TEST_CASE("canonical path structure") {
    const auto path = canonical_path(schreier_matrices(), 4);
    REQUIRE(path.elements.size() == 4);
    REQUIRE(path.partners.size() == 3);
    CHECK(path.elements[0] == Word::parse("g1 g2 g1' g2'"));
    for (std::size_t n = 0; n + 1 < path.elements.size(); ++n) {
      CHECK(path.elements[n + 1] == words::commutator(path.elements[n], path.partners[n]));
      CHECK(path.partners[n] != path.elements[n]);
      CHECK(path.partners[n] != path.elements[n].inverse());
    }
  }

  TEST_CASE("lambda fixtures") {
    const auto path = canonical_path(schreier_matrices(), 6);
    const LambdaSequence seq = lambda_sequence(path.matrices);
    REQUIRE(seq.entries.size() == 6);
    CHECK(seq.strictly_increasing());
    CHECK(seq.entries[0].lambda12 == "499724");
    CHECK(seq.entries[1].lambda12 == "2013706264487638597644");
    CHECK(seq.entries[2].lambda12 ==
          "12009150252331340654801813664835377992810910400801584654365965309783238428852236");
    const std::size_t digits[] = {6, 22, 80, 270, 917, 3177};
    for (std::size_t n = 0; n < 6; ++n) {
      CHECK(seq.entries[n].exact);
      CHECK(seq.entries[n].lambda12.size() == digits[n]);
      CHECK(seq.entries[n].pushforward_self_pairing_exact);
      CHECK(seq.entries[n].self_pairing_residual < 1e-12);
    }
    CHECK(seq.entries[5].normalized_self_pairing <= 1e-6);

    // Independent oracle: expand the path words into x, y, z and multiply.
    const auto gens = words::schreier_generators();
    for (std::size_t n = 0; n < 4; ++n) {
      const Plain m = push(substitute(path.elements[n], gens));
      CHECK(lambda12(m).str() == seq.entries[n].lambda12);
    }
  }

  TEST_CASE("rays") {
    const Vector3 w0 = omega0();
    CHECK(std::abs(GramForm::pair(w0, w0) - 1.0) < 1e-15);

    const IsometryMatrix xyz = word_matrix(Word::parse("x y z"));
    const RayClass plus = expanding_ray(xyz), minus = contracting_ray(xyz);
    CHECK(std::abs(GramForm::pair(plus.vector, plus.vector)) < 1e-9);
    CHECK(std::abs(GramForm::pair(plus.vector, w0) - 1.0) < 1e-12);
    CHECK(ray_distance(plus, plus) < 1e-12);
    CHECK(std::abs(ray_distance(plus, minus) - ray_distance(minus, plus)) < 1e-12);
    CHECK(ray_distance(plus, minus) > 0.1);
    CHECK_FALSE(plus.rational);

    const LambdaSequence pw = lambda_sequence(power_path(xyz, 12));
    const BoundaryLimit lim = boundary_limit(pw);
    CHECK(lim.converged);
    CHECK(ray_distance(lim.ray, plus) < 1e-6);

    const auto para = parabolic_ray(word_matrix(Word::parse("x y")));
    REQUIRE(para.has_value());
    CHECK(para->rational);
    REQUIRE(para->integer_vector.has_value());
    std::array<BigInt, 3> v{(*para->integer_vector)[0], (*para->integer_vector)[1], (*para->integer_vector)[2]};
    CHECK(GramForm::pair(v, v) == 0);
    CHECK(word_matrix(Word::parse("x y")).apply(v) == v);
    CHECK_FALSE(parabolic_ray(xyz).has_value());
  }

  TEST_CASE("canonical limit") {
    const auto path = canonical_path(schreier_matrices(), 6);
    const BoundaryLimit lim = boundary_limit(lambda_sequence(path.matrices));
    CHECK(lim.converged);
    CHECK(std::abs(lim.final_self_pairing) <= 1e-6);
    CHECK(std::abs(GramForm::pair(lim.ray.vector, omega0()) - 1.0) < 1e-9);
    const auto cc = circle_coordinates(lim.ray);
    CHECK(std::abs(std::hypot(cc[0], cc[1]) - 1.0) < 1e-6);
    // A too-short path does not leave the divergence threshold behind.
    const auto shortp = power_path(word_matrix(Word::parse("x y z")), 2);
    CHECK_THROWS_AS(boundary_limit(lambda_sequence(shortp)), NonConvergenceError);
  }

  TEST_CASE("rational directions") {
    const Vector3 v = Vector3(1, 2, 3).normalized();
    const auto r = rational_direction(v);
    REQUIRE(r.has_value());
    CHECK(*r == std::array<long long, 3>{1, 2, 3});
    CHECK_FALSE(rational_direction(Vector3(1.0, std::sqrt(2.0), std::acos(-1.0))).has_value());
  }

  TEST_CASE("short parabolic rays") {
    for (const auto& [w, ray] : short_parabolic_rays(4)) {
      CHECK(classify(word_matrix(w)).type == IsometryType::parabolic);
      CHECK(ray.rational);
    }
    CHECK_FALSE(short_parabolic_rays(2).empty());
  }
}
