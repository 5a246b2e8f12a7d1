#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace k3gaps::words {

// Two alphabets share one letter type. Involution letters (x, y, z) are their
// own inverses and generate (Z/2)*(Z/2)*(Z/2); free letters g1, g2, ... carry a
// formal inverse g1', g2', ... and generate a free group.
enum class Alphabet : std::uint8_t { involution, free };

struct Letter {
  Alphabet alphabet = Alphabet::free;
  std::uint8_t generator = 0;  // 0..2 for x, y, z; 0-based index for g1, g2, ...
  bool inverted = false;       // always false for involution letters

  static constexpr Letter sigma(std::uint8_t axis) { return {Alphabet::involution, axis, false}; }
  static constexpr Letter free_generator(std::uint8_t index, bool inverted = false) {
    return {Alphabet::free, index, inverted};
  }

  constexpr Letter inverse() const {
    return alphabet == Alphabet::involution ? *this : Letter{alphabet, generator, !inverted};
  }
  constexpr bool cancels(const Letter& other) const { return other == inverse(); }

  friend constexpr auto operator<=>(const Letter&, const Letter&) = default;
};

std::string to_string(const Letter& letter);

/// A reduced word. The only way to build one is through reduce(), so adjacent
/// cancelling pairs never appear; the empty word is the identity.
class Word {
 public:
  Word() = default;

  static Word reduce(std::span<const Letter> letters);
  static Word reduce(std::initializer_list<Letter> letters) {
    return reduce(std::span<const Letter>(letters.begin(), letters.size()));
  }
  // Parses "x y z", "xyz", "g1 g2' g3" or "e"; throws DomainError on an unknown token.
  static Word parse(std::string_view text);

  std::span<const Letter> letters() const { return letters_; }
  std::size_t size() const { return letters_.size(); }
  bool empty() const { return letters_.empty(); }
  const Letter& operator[](std::size_t i) const { return letters_[i]; }

  Word inverse() const;
  bool is_involution_word() const;

  friend Word operator*(const Word& lhs, const Word& rhs);
  friend bool operator==(const Word&, const Word&) = default;
  friend auto operator<=>(const Word& lhs, const Word& rhs) {
    if (auto c = lhs.letters_.size() <=> rhs.letters_.size(); c != 0) return c;
    return lhs.letters_ <=> rhs.letters_;
  }

  std::string to_string() const;

 private:
  explicit Word(std::vector<Letter> reduced) : letters_(std::move(reduced)) {}
  std::vector<Letter> letters_;
};

Word commutator(const Word& lhs, const Word& rhs);

// Abstract generators g1..gk followed by their inverses.
std::vector<Word> free_seeds(int k);

using KleinVector = std::array<std::uint8_t, 3>;

/// Parity of the x, y, z letter counts; the homomorphism onto (Z/2)^3.
KleinVector klein_image(const Word& w);

/// Free generators of the kernel of Gamma_sigma -> (Z/2)^3, with a = xy and b = yz:
/// a^2, b^2, [b,a], a b a b^-1, a b^2 a^-1 (reduced).
std::vector<Word> schreier_generators();

// ---------------------------------------------------------------------------
// Derived series

struct NodeRef {
  int level = 0;
  std::size_t index = 0;
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

// A level-n element: commutator of two level-(n-1) elements, by index. At
// level 0, `left` is the seed index.
struct CommutatorNode {
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t length = 0;  // reduced length of the expansion
};

struct SeriesLimits {
  std::size_t cardinality_cap = 100000;
};

/// Iterated commutator level sets S^(0), S^(1), ... over a seed set closed
/// under inversion. Elements above level 0 are stored by reference to the
/// previous level; commutators with an empty reduced expansion are omitted.
/// Levels are ordered lexicographically by (left, right).
///
/// A level is either complete, or a lexicographic prefix of the true level
/// set (all elements with left index 0, taken in order).
class DerivedSeries {
 public:
  explicit DerivedSeries(std::vector<Word> seeds, SeriesLimits limits = {});

  // Builds S^(0..n) in full. Throws ResourceLimitError past the cardinality cap.
  static DerivedSeries full(std::vector<Word> seeds, int n, SeriesLimits limits = {});

  // Levels up to full_levels are complete; higher levels up to n hold at least
  // the lexicographically first `count` elements of the true level set.
  static DerivedSeries prefix(std::vector<Word> seeds, int n, std::size_t count, int full_levels,
                              SeriesLimits limits = {});

  int depth() const { return static_cast<int>(levels_.size()) - 1; }
  std::size_t size(int level) const;
  bool complete(int level) const { return complete_.at(level); }
  const std::vector<Word>& seeds() const { return seeds_; }
  const CommutatorNode& node(int level, std::size_t index) const { return levels_.at(level).at(index); }

  Word expand(NodeRef ref) const;
  Word expand(int level, std::size_t index) const { return expand(NodeRef{level, index}); }
  std::size_t expanded_length(NodeRef ref) const;

  // Index of the seed that is the inverse of seed i.
  std::size_t seed_inverse(std::size_t i) const { return seed_inverses_.at(i); }

  void ensure_complete(int level);
  void ensure_prefix(int level, std::size_t count);

  nlohmann::json manifest() const;

 private:
  std::vector<Word> level_words(int level) const;
  void append_complete_level();

  std::vector<Word> seeds_;
  std::vector<std::size_t> seed_inverses_;
  SeriesLimits limits_;
  std::vector<std::vector<CommutatorNode>> levels_;
  std::vector<bool> complete_;
};

// ---------------------------------------------------------------------------
// Fast ramification and tree branching

struct RamificationViolation {
  std::vector<std::pair<int, int>> pairs;  // (i, j) for each factor [a_i, a_j], 0-based
  std::size_t reduced_length = 0;
};

struct RamificationReport {
  int k = 0;
  int trials = 0;
  int max_factors = 0;
  std::int64_t min_slack = 0;  // min over trials of reduced length - (2N + 2)
  std::vector<RamificationViolation> violations;
};

// Whether the product of the given commutator pairs meets the non-cancellation condition.
bool admissible_product(std::span<const std::pair<int, int>> pairs);

// Reduced word of [a_i1, a_j1] ... [a_iN, a_jN].
Word commutator_product(std::span<const std::pair<int, int>> pairs);

RamificationReport verify_fast_ramification(int k, int trials, int max_factors, std::uint64_t seed = 1);

struct TreeBranchingReport {
  int depth = 0;
  std::vector<std::size_t> min_branching;  // per level, each leaf count capped at branching_cap
  std::size_t branching_cap = 0;
  double bound = 1.0;  // product of the per-level minima
};

/// Lower bound on the number of distinct depth-`depth` path prefixes in the
/// commutator tree over g1..gk: leaves at level n are elements s of S^(n) and
/// their children the distinct nontrivial commutators [s, t], t in S^(n).
/// Throws ResourceLimitError if a needed level exceeds the cap, and
/// std::logic_error if some level branches fewer than three ways.
TreeBranchingReport tree_path_count(int k, int depth, std::size_t branching_cap = 16,
                                    SeriesLimits limits = {});

}  // namespace k3gaps::words
