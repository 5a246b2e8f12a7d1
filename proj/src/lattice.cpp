#include "k3gaps/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "k3gaps/errors.hpp"

namespace k3gaps::lattice {

namespace {

constexpr double kLn2 = std::numbers::ln2;

// |x| = mantissa * 2^exponent with mantissa in [0.5, 1) (0 for x = 0).
std::pair<double, long long> split(const BigInt& x) {
  if (x == 0) return {0.0, 0};
  const BigInt a = abs(x);
  const long long bits = static_cast<long long>(msb(a)) + 1;
  const long long shift = std::max(0LL, bits - 62);
  const double top = static_cast<double>(static_cast<long long>(a >> static_cast<unsigned>(shift)));
  int e = 0;
  const double m = std::frexp(top, &e);
  return {m, shift + e};
}

double log_abs(const BigInt& x) {
  const auto [m, e] = split(x);
  if (m == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(m) + static_cast<double>(e) * kLn2;
}

// x / y as a double, for big integers of any size.
double ratio(const BigInt& x, const BigInt& y) {
  if (y == 0) throw std::domain_error("division by zero");
  if (x == 0) return 0.0;
  const auto [mx, ex] = split(x);
  const auto [my, ey] = split(y);
  const double sign = ((x < 0) != (y < 0)) ? -1.0 : 1.0;
  return sign * std::ldexp(mx / my, static_cast<int>(std::clamp(ex - ey, -100000LL, 100000LL)));
}

double to_double(const BigInt& x) { return ratio(x, BigInt(1)); }

const std::array<std::array<long long, 9>, 3> kInvolutions = {{
    {-1, 0, 0, 2, 1, 0, 2, 0, 1},
    {1, 2, 0, 0, -1, 0, 0, 2, 1},
    {1, 0, 2, 0, 1, 2, 0, 0, -1},
}};

// 4 G^-1 = [[-1,1,1],[1,-1,1],[1,1,-1]].
constexpr std::array<int, 9> kGramInverse4 = {-1, 1, 1, 1, -1, 1, 1, 1, -1};

IntMatrix multiply(const IntMatrix& a, const IntMatrix& b) {
  IntMatrix c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      BigInt s = 0;
      for (int k = 0; k < 3; ++k) s += a[static_cast<std::size_t>(3 * i + k)] * b[static_cast<std::size_t>(3 * k + j)];
      c[static_cast<std::size_t>(3 * i + j)] = std::move(s);
    }
  return c;
}

IntMatrix identity_ints() {
  IntMatrix m;
  for (int i = 0; i < 9; ++i) m[static_cast<std::size_t>(i)] = (i % 4 == 0) ? 1 : 0;
  return m;
}

std::string decimal(const BigInt& x) { return x.str(); }

}  // namespace

const std::array<int, 9>& GramForm::entries() {
  static const std::array<int, 9> g = {0, 2, 2, 2, 0, 2, 2, 2, 0};
  return g;
}

Eigen::Matrix3d GramForm::matrix() {
  Eigen::Matrix3d g;
  g << 0, 2, 2, 2, 0, 2, 2, 2, 0;
  return g;
}

double GramForm::pair(const Vector3& u, const Vector3& v) { return u.dot(matrix() * v); }

BigInt GramForm::pair(const std::array<BigInt, 3>& u, const std::array<BigInt, 3>& v) {
  BigInt s = 0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) s += 2 * u[i] * v[j];
  return s;
}

IsometryMatrix::IsometryMatrix() : m_(identity_ints()) {}

IsometryMatrix IsometryMatrix::from_integers(const std::array<long long, 9>& m, std::string provenance) {
  IntMatrix x;
  for (std::size_t i = 0; i < 9; ++i) x[i] = m[i];
  return from_exact(std::move(x), std::move(provenance));
}

IsometryMatrix IsometryMatrix::from_exact(IntMatrix m, std::string provenance) {
  IsometryMatrix out;
  out.m_ = std::move(m);
  out.provenance_ = std::move(provenance);
  out.refresh_float();
  return out;
}

void IsometryMatrix::refresh_float() {
  long long top = std::numeric_limits<long long>::min();
  for (const BigInt& e : m_) {
    if (e != 0) top = std::max(top, split(e).second);
  }
  if (top == std::numeric_limits<long long>::min()) throw DomainError("zero matrix is not an isometry");
  for (int i = 0; i < 9; ++i) {
    const auto [mant, ex] = split(m_[static_cast<std::size_t>(i)]);
    const double sign = m_[static_cast<std::size_t>(i)] < 0 ? -1.0 : 1.0;
    normalized_(i / 3, i % 3) = sign * std::ldexp(mant, static_cast<int>(std::max(ex - top, -2000LL)));
  }
  const double peak = normalized_.cwiseAbs().maxCoeff();
  normalized_ /= peak;
  log_scale_ = static_cast<double>(top) * kLn2 + std::log(peak);
}

const IntMatrix& IsometryMatrix::integers() const {
  if (!exact_) throw std::logic_error("matrix is in floating-point mode");
  return m_;
}

std::size_t IsometryMatrix::max_bits() const {
  std::size_t bits = 0;
  if (!exact_) return 0;
  for (const BigInt& e : m_)
    if (e != 0) bits = std::max<std::size_t>(bits, msb(abs(e)) + 1);
  return bits;
}

IsometryMatrix IsometryMatrix::to_float() const {
  IsometryMatrix out = *this;
  out.exact_ = false;
  out.overflowed_ = true;
  out.m_ = IntMatrix{};
  return out;
}

IsometryMatrix IsometryMatrix::times(const IsometryMatrix& rhs, std::size_t bit_threshold) const {
  if (exact_ && rhs.exact_) {
    IsometryMatrix out = from_exact(multiply(m_, rhs.m_));
    if (out.max_bits() <= bit_threshold) return out;
    return out.to_float();
  }
  IsometryMatrix out;
  out.exact_ = false;
  out.overflowed_ = true;
  out.m_ = IntMatrix{};
  Eigen::Matrix3d p = normalized_ * rhs.normalized_;
  const double peak = p.cwiseAbs().maxCoeff();
  if (!(peak > 0.0) || !std::isfinite(peak)) throw NonConvergenceError("floating-point matrix product degenerated");
  out.normalized_ = p / peak;
  out.log_scale_ = log_scale_ + rhs.log_scale_ + std::log(peak);
  return out;
}

IsometryMatrix IsometryMatrix::inverse() const {
  // M^-1 = G^-1 M^T G; 4 G^-1 is integral and the quotient by 4 is exact.
  if (exact_) {
    IntMatrix mt_g;
    const auto& g = GramForm::entries();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        BigInt s = 0;
        for (int k = 0; k < 3; ++k) {
          if (g[static_cast<std::size_t>(3 * k + j)] != 0)
            s += m_[static_cast<std::size_t>(3 * k + i)] * g[static_cast<std::size_t>(3 * k + j)];
        }
        mt_g[static_cast<std::size_t>(3 * i + j)] = std::move(s);
      }
    IntMatrix inv;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        BigInt s = 0;
        for (int k = 0; k < 3; ++k) s += kGramInverse4[static_cast<std::size_t>(3 * i + k)] * mt_g[static_cast<std::size_t>(3 * k + j)];
        if (s % 4 != 0) throw DomainError("matrix is not an isometry of the Gram form");
        inv[static_cast<std::size_t>(3 * i + j)] = s / 4;
      }
    IsometryMatrix out = from_exact(std::move(inv));
    return out;
  }
  const Eigen::Matrix3d g = GramForm::matrix();
  Eigen::Matrix3d p = g.inverse() * normalized_.transpose() * g;
  const double peak = p.cwiseAbs().maxCoeff();
  IsometryMatrix out = *this;
  out.provenance_.clear();
  out.normalized_ = p / peak;
  out.log_scale_ = log_scale_ + std::log(peak);
  return out;
}

BigInt IsometryMatrix::trace() const {
  const IntMatrix& m = integers();
  return m[0] + m[4] + m[8];
}

BigInt IsometryMatrix::determinant() const {
  const IntMatrix& m = integers();
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6]);
}

bool IsometryMatrix::is_identity() const {
  if (!exact_) return false;
  return m_ == identity_ints();
}

bool IsometryMatrix::gram_invariant() const {
  const IntMatrix& m = integers();
  const auto& g = GramForm::entries();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      BigInt s = 0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          if (g[static_cast<std::size_t>(3 * a + b)] != 0)
            s += m[static_cast<std::size_t>(3 * a + i)] * g[static_cast<std::size_t>(3 * a + b)] *
                 m[static_cast<std::size_t>(3 * b + j)];
      if (s != g[static_cast<std::size_t>(3 * i + j)]) return false;
    }
  return true;
}

std::array<BigInt, 3> IsometryMatrix::apply(const std::array<BigInt, 3>& v) const {
  const IntMatrix& m = integers();
  std::array<BigInt, 3> out;
  for (std::size_t i = 0; i < 3; ++i) out[i] = m[3 * i] * v[0] + m[3 * i + 1] * v[1] + m[3 * i + 2] * v[2];
  return out;
}

Vector3 IsometryMatrix::apply_direction(const Vector3& v) const {
  const Vector3 w = normalized_ * v;
  return w / w.norm();
}

nlohmann::json IsometryMatrix::to_json() const {
  nlohmann::json j;
  j["provenance"] = provenance_;
  j["exact"] = exact_;
  j["overflowed"] = overflowed_;
  if (exact_) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < 3; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < 3; ++k) {
        const BigInt& e = m_[static_cast<std::size_t>(3 * i + k)];
        if (abs(e) < BigInt(1) << 53) row.push_back(static_cast<long long>(e));
        else row.push_back(decimal(e));
      }
      rows.push_back(row);
    }
    j["matrix"] = rows;
  } else {
    j["normalized"] = {{normalized_(0, 0), normalized_(0, 1), normalized_(0, 2)},
                       {normalized_(1, 0), normalized_(1, 1), normalized_(1, 2)},
                       {normalized_(2, 0), normalized_(2, 1), normalized_(2, 2)}};
    j["log_scale"] = log_scale_;
  }
  return j;
}

IsometryMatrix involution_matrix(int axis) {
  if (axis < 0 || axis > 2) throw DomainError("axis must be 0, 1 or 2");
  static const char* names[3] = {"x", "y", "z"};
  return IsometryMatrix::from_integers(kInvolutions[static_cast<std::size_t>(axis)], names[axis]);
}

IsometryMatrix word_matrix(const words::Word& w) {
  if (!w.is_involution_word()) throw DomainError("word_matrix needs a word in x, y, z");
  // f = l_n o ... o l_1, so f_* = M_{l_n} ... M_{l_1}.
  IntMatrix m = identity_ints();
  for (const words::Letter& l : w.letters()) {
    IntMatrix next;
    const auto& a = kInvolutions[l.generator];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        next[static_cast<std::size_t>(3 * i + j)] = a[static_cast<std::size_t>(3 * i)] * m[static_cast<std::size_t>(j)] +
                                                    a[static_cast<std::size_t>(3 * i + 1)] * m[static_cast<std::size_t>(3 + j)] +
                                                    a[static_cast<std::size_t>(3 * i + 2)] * m[static_cast<std::size_t>(6 + j)];
    m = std::move(next);
  }
  return IsometryMatrix::from_exact(std::move(m), w.to_string());
}

IsometryMatrix word_matrix(const words::Word& w, std::span<const IsometryMatrix> generators,
                           std::size_t bit_threshold) {
  IsometryMatrix m;
  for (const words::Letter& l : w.letters()) {
    if (l.alphabet != words::Alphabet::free || l.generator >= generators.size()) {
      throw DomainError("no generator matrix for letter " + words::to_string(l));
    }
    const IsometryMatrix& g = generators[l.generator];
    m = (l.inverted ? g.inverse() : g).times(m, bit_threshold);
  }
  m.set_provenance(w.to_string());
  return m;
}

IsometryMatrix commutator_matrix(const IsometryMatrix& u, const IsometryMatrix& v, std::size_t bit_threshold) {
  // Word u v u^-1 v^-1 acts as v^-1 o u^-1 o v o u.
  return v.inverse().times(u.inverse(), bit_threshold).times(v, bit_threshold).times(u, bit_threshold);
}

std::vector<IsometryMatrix> schreier_matrices() {
  std::vector<IsometryMatrix> out;
  for (const words::Word& w : words::schreier_generators()) out.push_back(word_matrix(w));
  return out;
}

TreeMatrices::TreeMatrices(const words::DerivedSeries& series, std::vector<IsometryMatrix> generators,
                           std::size_t bit_threshold)
    : series_(series), generators_(std::move(generators)), bit_threshold_(bit_threshold) {}

const IsometryMatrix& TreeMatrices::matrix(words::NodeRef ref) {
  if (ref.level < 0 || ref.level > series_.depth()) throw DomainError("node level out of range");
  if (memo_.size() <= static_cast<std::size_t>(ref.level)) memo_.resize(static_cast<std::size_t>(ref.level) + 1);
  auto& row = memo_[static_cast<std::size_t>(ref.level)];
  if (row.size() < series_.size(ref.level)) row.resize(series_.size(ref.level));
  std::optional<IsometryMatrix>& slot = row.at(ref.index);
  if (!slot) {
    if (ref.level == 0) {
      slot = word_matrix(series_.seeds().at(ref.index), generators_, bit_threshold_);
    } else {
      const words::CommutatorNode& n = series_.node(ref.level, ref.index);
      const IsometryMatrix u = matrix({ref.level - 1, n.left});
      const IsometryMatrix v = matrix({ref.level - 1, n.right});
      slot = commutator_matrix(u, v, bit_threshold_);
    }
  }
  return *slot;
}

std::string to_string(IsometryType t) {
  switch (t) {
    case IsometryType::elliptic: return "elliptic";
    case IsometryType::parabolic: return "parabolic";
    case IsometryType::loxodromic: return "loxodromic";
  }
  return "elliptic";
}

nlohmann::json Classification::to_json() const {
  nlohmann::json j = {{"type", to_string(type)}, {"log_spectral_radius", log_spectral_radius},
                      {"trace_minus_det", trace_minus_det}};
  if (std::isfinite(spectral_radius)) j["spectral_radius"] = spectral_radius;
  else j["spectral_radius"] = nullptr;
  return j;
}

Classification classify(const IsometryMatrix& m) {
  Classification c;
  if (!m.exact()) {
    // Float mode only arises for huge entries; the spectral radius then
    // dominates the matrix norm.
    const Eigen::EigenSolver<Eigen::Matrix3d> es(m.normalized());
    double top = 0.0;
    for (int i = 0; i < 3; ++i) top = std::max(top, std::abs(es.eigenvalues()[i]));
    c.type = IsometryType::loxodromic;
    c.log_spectral_radius = m.log_scale() + std::log(top);
    c.spectral_radius = std::exp(c.log_spectral_radius);
    c.trace_minus_det = "approx " + std::to_string(c.spectral_radius);
    return c;
  }
  const BigInt det = m.determinant();
  if (det != 1 && det != -1) throw DomainError("determinant must be +-1");
  const BigInt s = m.trace() - det;
  const IntMatrix& x = m.integers();
  const BigInt minors = x[0] * x[4] - x[1] * x[3] + x[0] * x[8] - x[2] * x[6] + x[4] * x[8] - x[5] * x[7];
  if (minors != 1 + det * s) throw DomainError("characteristic polynomial is not of isometry type");
  c.trace_minus_det = decimal(s);
  const BigInt as = abs(s);
  if (as > 2) {
    c.type = IsometryType::loxodromic;
    if (msb(as) < 500) {
      const double sd = static_cast<double>(as);
      c.spectral_radius = (sd + std::sqrt(sd * sd - 4.0)) / 2.0;
      c.log_spectral_radius = std::log(c.spectral_radius);
    } else {
      c.log_spectral_radius = log_abs(as);  // the correction is below double precision
      c.spectral_radius = std::exp(c.log_spectral_radius);
    }
    return c;
  }
  c.spectral_radius = 1.0;
  c.log_spectral_radius = 0.0;
  if (as == 2) {
    IsometryMatrix p = m;
    bool finite = false;
    for (int k = 1; k <= 12; ++k) {
      if (p.is_identity()) {
        finite = true;
        break;
      }
      p = p.times(m);
    }
    c.type = finite ? IsometryType::elliptic : IsometryType::parabolic;
  } else {
    c.type = IsometryType::elliptic;
  }
  return c;
}

Vector3 omega0() { return Vector3::Constant(1.0 / std::sqrt(12.0)); }

nlohmann::json RayClass::to_json() const {
  nlohmann::json j = {{"vector", {vector[0], vector[1], vector[2]}},
                      {"normalization", "pairing with omega0 = 1"},
                      {"self_pairing", self_pairing},
                      {"rational", rational}};
  if (integer_vector) j["integer_vector"] = *integer_vector;
  return j;
}

RayClass ray_from_class(const Vector3& v) {
  const Vector3 o = omega0();
  const double p = GramForm::pair(v, o);
  if (!(p > 0.0)) throw DomainError("class is not forward");
  const Vector3 w = v / p - o;
  const double q = -GramForm::pair(w, w);
  if (!(q > 0.0)) throw DomainError("class is proportional to omega0");
  RayClass r;
  r.vector = o + w / std::sqrt(q);
  r.self_pairing = GramForm::pair(r.vector, r.vector);
  r.integer_vector = rational_direction(r.vector);
  r.rational = r.integer_vector.has_value();
  return r;
}

double ray_distance(const RayClass& a, const RayClass& b) {
  const Vector3 o = omega0();
  auto part = [&](const Vector3& v) {
    const Vector3 w = v / GramForm::pair(v, o) - o;
    return Vector3(w / std::sqrt(-GramForm::pair(w, w)));
  };
  const Vector3 wa = part(a.vector), wb = part(b.vector);
  const double c = std::clamp(-GramForm::pair(wa, wb), -1.0, 1.0);
  // atan2 form keeps precision for nearby rays.
  const Vector3 d = wa - wb;
  const double chord = std::sqrt(std::max(0.0, -GramForm::pair(d, d)));
  return 2.0 * std::atan2(chord / 2.0, std::sqrt(std::max(0.0, (1.0 + c) / 2.0)));
}

std::optional<std::array<long long, 3>> rational_direction(const Vector3& v, long long max_denominator) {
  int lead = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(v[i]) > std::abs(v[lead])) lead = i;
  if (v[lead] == 0.0) return std::nullopt;
  const Vector3 u = v / v[lead];
  // Best rational approximation of each ratio by continued fractions.
  auto approx = [&](double x) -> std::optional<std::pair<long long, long long>> {
    long long h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double r = x;
    for (int it = 0; it < 64; ++it) {
      const double a = std::floor(r);
      if (std::abs(a) > 1e12) break;
      const long long ai = static_cast<long long>(a);
      const long long h2 = ai * h1 + h0, k2 = ai * k1 + k0;
      if (k2 > max_denominator) break;
      h0 = h1, h1 = h2, k0 = k1, k1 = k2;
      // Accept only far better than a convergent of an irrational would be.
      const double err = std::abs(x - static_cast<double>(h1) / static_cast<double>(k1));
      const double kk = static_cast<double>(k1) * static_cast<double>(k1);
      if (err <= 1e-12 * std::max(1.0, std::abs(x)) && err * kk <= 1e-4) {
        return std::make_pair(h1, k1);
      }
      const double frac = r - a;
      if (frac < 1e-15) break;
      r = 1.0 / frac;
    }
    return std::nullopt;
  };
  std::array<long long, 3> num{}, den{};
  for (int i = 0; i < 3; ++i) {
    const auto a = approx(u[i]);
    if (!a) return std::nullopt;
    num[static_cast<std::size_t>(i)] = a->first;
    den[static_cast<std::size_t>(i)] = a->second;
  }
  long long l = 1;
  for (long long d : den) {
    l = std::lcm(l, d);
    if (l > max_denominator) return std::nullopt;
  }
  std::array<long long, 3> out{};
  long long g = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = num[i] * (l / den[i]);
    g = std::gcd(g, std::abs(out[i]));
  }
  const long long sign = v[lead] < 0 ? -1 : 1;
  for (auto& x : out) x = sign * x / g;
  return out;
}

std::array<double, 2> circle_coordinates(const RayClass& r) {
  // Orthonormal basis of omega0^perp for -G: e1 ~ (1,-1,0), e2 ~ (1,1,-2).
  const Vector3 o = omega0();
  Vector3 e1(1, -1, 0), e2(1, 1, -2);
  e1 /= std::sqrt(-GramForm::pair(e1, e1));
  e2 /= std::sqrt(-GramForm::pair(e2, e2));
  const Vector3 w = r.vector / GramForm::pair(r.vector, o) - o;
  const double n = std::sqrt(-GramForm::pair(w, w));
  return {-GramForm::pair(w, e1) / n, -GramForm::pair(w, e2) / n};
}

bool LambdaSequence::strictly_increasing() const {
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (!(entries[i].log_lambda > entries[i - 1].log_lambda)) return false;
    if (entries[i].exact && entries[i - 1].exact && BigInt(entries[i].lambda12) <= BigInt(entries[i - 1].lambda12))
      return false;
  }
  return true;
}

namespace {

std::string lambda_text(const LambdaEntry& e) {
  if (std::isfinite(e.lambda)) {
    std::ostringstream out;
    out << std::setprecision(17) << e.lambda;
    return out.str();
  }
  // Scientific notation from log10.
  const double l10 = e.log_lambda / std::numbers::ln10;
  const double ex = std::floor(l10);
  std::ostringstream out;
  out << std::setprecision(15) << std::pow(10.0, l10 - ex) << "e+" << static_cast<long long>(ex);
  return out.str();
}

}  // namespace

nlohmann::json LambdaSequence::to_json() const {
  nlohmann::json j;
  j["normalization"] = "lambda_n = <(s_n)_* omega0, omega0>, omega0 = (1,1,1)/sqrt(12)";
  j["strictly_increasing"] = strictly_increasing();
  j["warnings"] = warnings;
  j["entries"] = nlohmann::json::array();
  for (const LambdaEntry& e : entries) {
    nlohmann::json r = {{"n", e.n},
                        {"exact", e.exact},
                        {"lambda", lambda_text(e)},
                        {"log_lambda", e.log_lambda},
                        {"normalized_class", {e.normalized[0], e.normalized[1], e.normalized[2]}},
                        {"normalized_self_pairing", e.normalized_self_pairing},
                        {"self_pairing_residual", e.self_pairing_residual},
                        {"pushforward_self_pairing_exact", e.pushforward_self_pairing_exact}};
    if (e.exact) r["lambda_times_12"] = e.lambda12;
    j["entries"].push_back(r);
  }
  return j;
}

std::string LambdaSequence::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "n,lambda,log_lambda,self_pairing_residual\r\n";
  for (const LambdaEntry& e : entries) {
    out << e.n << ',' << lambda_text(e) << ',' << e.log_lambda << ',' << e.self_pairing_residual << "\r\n";
  }
  return out.str();
}

LambdaSequence lambda_sequence(std::span<const IsometryMatrix> path) {
  LambdaSequence seq;
  const std::array<BigInt, 3> one = {1, 1, 1};
  for (std::size_t i = 0; i < path.size(); ++i) {
    const IsometryMatrix& m = path[i];
    LambdaEntry e;
    e.n = static_cast<int>(i) + 1;
    e.exact = m.exact();
    if (m.exact()) {
      const std::array<BigInt, 3> v = m.apply(one);
      const BigInt l12 = GramForm::pair(v, one);
      if (l12 <= 0) throw DomainError("path element does not preserve the forward cone");
      e.lambda12 = decimal(l12);
      e.log_lambda = log_abs(l12) - std::log(12.0);
      e.lambda = std::exp(e.log_lambda);
      if (msb(l12) < 900) e.lambda = static_cast<double>(l12) / 12.0;
      e.pushforward_self_pairing_exact = GramForm::pair(v, v) == 12;
      // v_hat = sqrt(12) M 1 / (1^T G M 1)
      for (int k = 0; k < 3; ++k) e.normalized[k] = std::sqrt(12.0) * ratio(v[static_cast<std::size_t>(k)], l12);
    } else {
      const Vector3 v = m.normalized() * Vector3::Ones();
      const double p = GramForm::pair(v, Vector3::Ones());
      if (!(p > 0.0)) throw DomainError("path element does not preserve the forward cone");
      e.log_lambda = m.log_scale() + std::log(p / 12.0);
      e.lambda = std::exp(e.log_lambda);
      e.normalized = std::sqrt(12.0) * v / p;
    }
    e.normalized_self_pairing = GramForm::pair(e.normalized, e.normalized);
    const double inv2 = std::exp(-2.0 * e.log_lambda);
    e.self_pairing_residual = std::abs(e.normalized_self_pairing - inv2);
    if (!e.exact && e.self_pairing_residual > 1e-8) {
      seq.warnings.push_back("self-pairing residual " + std::to_string(e.self_pairing_residual) + " at n = " +
                             std::to_string(e.n));
    }
    if (!seq.entries.empty() && !(e.log_lambda > seq.entries.back().log_lambda)) {
      seq.warnings.push_back("lambda stagnates at n = " + std::to_string(e.n) + "; re-select the path");
    }
    seq.entries.push_back(std::move(e));
  }
  return seq;
}

nlohmann::json CanonicalPath::to_json() const {
  nlohmann::json j;
  j["rule"] = "s_{n+1} = [s_n, t_n], t_n first element of S^(n) other than s_n, s_n^-1";
  j["elements"] = nlohmann::json::array();
  for (std::size_t i = 0; i < elements.size(); ++i) {
    nlohmann::json e = {{"n", i + 1}, {"free_length", elements[i].size()}, {"exact", matrices[i].exact()}};
    if (elements[i].size() <= 64) e["word"] = elements[i].to_string();
    if (i < partners.size()) {
      e["partner_length"] = partners[i].size();
      if (partners[i].size() <= 64) e["partner"] = partners[i].to_string();
    }
    j["elements"].push_back(e);
  }
  return j;
}

CanonicalPath canonical_path(std::span<const IsometryMatrix> generators, int length, std::size_t first_index,
                             std::size_t bit_threshold) {
  if (length < 1) throw DomainError("path length must be at least 1");
  if (generators.size() < 2) throw DomainError("canonical path needs at least two generators");
  const auto seeds = words::free_seeds(static_cast<int>(generators.size()));
  const std::size_t need = std::max<std::size_t>(first_index + 1, 4);
  const words::DerivedSeries series =
      words::DerivedSeries::prefix(seeds, std::max(1, length - 1), need, 1);
  std::vector<IsometryMatrix> gens(generators.begin(), generators.end());
  TreeMatrices memo(series, gens, bit_threshold);

  CanonicalPath path;
  if (series.size(1) <= first_index) throw DomainError("first_index beyond S^(1)");
  words::Word s = series.expand(1, first_index);
  IsometryMatrix ms = memo.matrix({1, first_index});
  for (int n = 1; n <= length; ++n) {
    ms.set_provenance("s_" + std::to_string(n));
    path.elements.push_back(s);
    path.matrices.push_back(ms);
    if (n == length) break;
    const words::Word s_inv = s.inverse();
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < series.size(n); ++i) {
      const words::Word t = series.expand(n, i);
      if (t != s && t != s_inv) {
        pick = i;
        break;
      }
    }
    if (!pick) throw DomainError("no partner for s_" + std::to_string(n));
    const words::Word t = series.expand(n, *pick);
    path.partners.push_back(t);
    s = words::commutator(s, t);
    if (s.empty()) throw DomainError("canonical path hit the identity at n = " + std::to_string(n + 1));
    ms = commutator_matrix(ms, memo.matrix({n, *pick}), bit_threshold);
  }
  return path;
}

std::vector<IsometryMatrix> power_path(const IsometryMatrix& g, int n) {
  std::vector<IsometryMatrix> out;
  IsometryMatrix p = g;
  for (int k = 1; k <= n; ++k) {
    p.set_provenance(g.provenance() + "^" + std::to_string(k));
    out.push_back(p);
    p = p.times(g);
  }
  return out;
}

nlohmann::json BoundaryLimit::to_json() const {
  return {{"ray", ray.to_json()},
          {"successive_differences", differences},
          {"final_self_pairing", final_self_pairing},
          {"converged", converged}};
}

BoundaryLimit boundary_limit(const LambdaSequence& seq, double divergence_threshold) {
  if (seq.entries.size() < 2) throw DomainError("boundary limit needs at least two path elements");
  if (!seq.strictly_increasing()) throw NonConvergenceError("lambda_n is not increasing along the path");
  if (!(seq.entries.back().log_lambda > std::log(divergence_threshold))) {
    throw NonConvergenceError("lambda_n stays below the divergence threshold");
  }
  BoundaryLimit out;
  for (std::size_t i = 1; i < seq.entries.size(); ++i) {
    out.differences.push_back((seq.entries[i].normalized - seq.entries[i - 1].normalized).norm());
  }
  constexpr double floor = 1e-13;
  const std::size_t tail = std::min<std::size_t>(3, out.differences.size());
  for (std::size_t i = out.differences.size() - tail + 1; i < out.differences.size(); ++i) {
    const double prev = *std::max_element(out.differences.begin(), out.differences.begin() + static_cast<long>(i));
    const double cur = out.differences[i];
    if (cur > floor && cur > 0.5 * prev) {
      throw NonConvergenceError("successive differences do not decrease geometrically: " + std::to_string(prev) +
                                " then " + std::to_string(cur));
    }
  }
  const Vector3& last = seq.entries.back().normalized;
  out.final_self_pairing = GramForm::pair(last, last);
  out.ray = ray_from_class(last);
  out.converged = true;
  return out;
}

namespace {

RayClass eigen_ray(const IsometryMatrix& m, bool expanding) {
  if (classify(m).type != IsometryType::loxodromic) throw DomainError("matrix is not loxodromic");
  // Power iteration on the normalized matrix; the expanding eigenvalue is
  // simple and separated from the rest by a factor of at least radius.
  const IsometryMatrix a = expanding ? m : m.inverse();
  Vector3 v = Vector3::Ones();
  for (int it = 0; it < 200; ++it) {
    const Vector3 next = a.normalized() * v;
    const Vector3 u = next / next.norm();
    const double change = std::min((u - v / v.norm()).norm(), (u + v / v.norm()).norm());
    v = u;
    if (change < 1e-15) break;
  }
  if (GramForm::pair(v, omega0()) < 0) v = -v;
  return ray_from_class(v);
}

}  // namespace

RayClass expanding_ray(const IsometryMatrix& m) { return eigen_ray(m, true); }
RayClass contracting_ray(const IsometryMatrix& m) { return eigen_ray(m, false); }

std::optional<RayClass> parabolic_ray(const IsometryMatrix& m) {
  if (!m.exact() || classify(m).type != IsometryType::parabolic) return std::nullopt;
  const BigInt s = m.trace() - m.determinant();
  const int e = s > 0 ? 1 : -1;
  IntMatrix a = m.integers();
  a[0] -= e, a[4] -= e, a[8] -= e;
  // The kernel of M - eI is spanned by the cross product of two independent rows.
  for (int r1 = 0; r1 < 3; ++r1)
    for (int r2 = r1 + 1; r2 < 3; ++r2) {
      const auto row = [&](int r, int c) { return a[static_cast<std::size_t>(3 * r + c)]; };
      std::array<BigInt, 3> k = {row(r1, 1) * row(r2, 2) - row(r1, 2) * row(r2, 1),
                                 row(r1, 2) * row(r2, 0) - row(r1, 0) * row(r2, 2),
                                 row(r1, 0) * row(r2, 1) - row(r1, 1) * row(r2, 0)};
      if (k[0] == 0 && k[1] == 0 && k[2] == 0) continue;
      BigInt g = gcd(gcd(abs(k[0]), abs(k[1])), abs(k[2]));
      for (auto& x : k) x /= g;
      if (k[0] + k[1] + k[2] < 0)
        for (auto& x : k) x = -x;
      const Vector3 v(to_double(k[0]), to_double(k[1]), to_double(k[2]));
      RayClass r;
      r.vector = v / GramForm::pair(v, omega0());
      r.self_pairing = GramForm::pair(r.vector, r.vector);
      r.rational = true;
      r.integer_vector = std::array<long long, 3>{static_cast<long long>(k[0]), static_cast<long long>(k[1]),
                                                  static_cast<long long>(k[2])};
      return r;
    }
  return std::nullopt;
}

std::vector<std::pair<words::Word, RayClass>> short_parabolic_rays(int max_length) {
  std::vector<std::pair<words::Word, RayClass>> out;
  std::vector<words::Word> frontier = {words::Word()};
  for (int len = 1; len <= max_length; ++len) {
    std::vector<words::Word> next;
    for (const words::Word& w : frontier) {
      for (std::uint8_t a = 0; a < 3; ++a) {
        if (!w.empty() && w[w.size() - 1].generator == a) continue;
        next.push_back(w * words::Word::reduce({words::Letter::sigma(a)}));
      }
    }
    for (const words::Word& w : next) {
      if (auto r = parabolic_ray(word_matrix(w))) {
        const bool seen = std::any_of(out.begin(), out.end(),
                                      [&](const auto& p) { return (p.second.vector - r->vector).norm() < 1e-12; });
        if (!seen) out.emplace_back(w, *r);
      }
    }
    frontier = std::move(next);
  }
  return out;
}

}  // namespace k3gaps::lattice
