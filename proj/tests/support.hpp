#pragma once

#include <array>
#include <cmath>

#include "k3gaps/germs.hpp"
#include "k3gaps/random.hpp"

namespace k3gaps::testing {

inline germs::Point random_vector(Rng& rng) {
  germs::Point v;
  for (int i = 0; i < 3; ++i) v[i] = germs::Complex(rng.normal(), rng.normal());
  return v.normalized();
}

inline germs::Matrix3c random_matrix(Rng& rng) {
  germs::Matrix3c m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = germs::Complex(rng.normal(), rng.normal());
  return m;
}

/// z -> z + c + L z + Q(z) with ||c|| + ||L|| r + ||Q|| r^2 <= budget, so the
/// deviation from the identity on B(r) is at most `budget`.
inline germs::GermMap random_near_identity(Rng& rng, double r, double budget) {
  double w[3];
  double total = 0.0;
  for (double& x : w) total += (x = rng.uniform(0.05, 1.0));
  const double scale = budget * rng.uniform(0.3, 1.0) / total;
  const germs::Point c = w[0] * scale * random_vector(rng);
  germs::Matrix3c l = random_matrix(rng);
  l *= w[1] * scale / r / germs::spectral_norm(l);
  std::array<germs::Matrix3c, 3> q;
  double qn = 0.0;
  for (auto& m : q) {
    m = random_matrix(rng);
    m = (0.5 * (m + m.transpose())).eval();
    qn += std::pow(germs::spectral_norm(m), 2);
  }
  // |Q(z)| <= sqrt(sum_k ||Q_k||^2) |z|^2.
  for (auto& m : q) m *= w[2] * scale / (r * r) / std::sqrt(qn);
  return germs::GermMap::polynomial(c, germs::Matrix3c::Identity() + l, q);
}

}  // namespace k3gaps::testing
