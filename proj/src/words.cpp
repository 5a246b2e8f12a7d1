#include "k3gaps/words.hpp"

#include <algorithm>
#include <limits>
#include <cctype>
#include <set>
#include <sstream>

#include "k3gaps/errors.hpp"
#include "k3gaps/random.hpp"

namespace k3gaps::words {

std::string to_string(const Letter& letter) {
  if (letter.alphabet == Alphabet::involution) {
    return std::string(1, "xyz"[letter.generator]);
  }
  std::string out = "g" + std::to_string(letter.generator + 1);
  if (letter.inverted) out += '\'';
  return out;
}

Word Word::reduce(std::span<const Letter> letters) {
  std::vector<Letter> stack;
  stack.reserve(letters.size());
  for (const Letter& l : letters) {
    if (!stack.empty() && stack.back().cancels(l)) {
      stack.pop_back();
    } else {
      stack.push_back(l);
    }
  }
  return Word(std::move(stack));
}

Word Word::parse(std::string_view text) {
  std::vector<Letter> raw;
  std::size_t i = 0;
  auto fail = [&](std::string_view what) {
    throw DomainError("unknown letter '" + std::string(what) + "' in word \"" + std::string(text) + "\"");
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == '.' || c == '*') {
      ++i;
      continue;
    }
    if (c == 'x' || c == 'y' || c == 'z') {
      raw.push_back(Letter::sigma(static_cast<std::uint8_t>(c - 'x')));
      ++i;
    } else if (c == 'e' && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
      ++i;
    } else if (c == 'g') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j == i + 1) fail(text.substr(i, 1));
      const int index = std::stoi(std::string(text.substr(i + 1, j - i - 1)));
      if (index < 1 || index > 255) fail(text.substr(i, j - i));
      bool inverted = false;
      if (j < text.size() && text[j] == '\'') {
        inverted = true;
        ++j;
      }
      raw.push_back(Letter::free_generator(static_cast<std::uint8_t>(index - 1), inverted));
      i = j;
    } else {
      std::size_t j = i;
      while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      fail(text.substr(i, j - i));
    }
  }
  if (!raw.empty()) {
    const Alphabet a = raw.front().alphabet;
    if (std::any_of(raw.begin(), raw.end(), [a](const Letter& l) { return l.alphabet != a; })) {
      throw DomainError("word mixes involution and free letters: \"" + std::string(text) + "\"");
    }
  }
  return reduce(raw);
}

Word Word::inverse() const {
  std::vector<Letter> out;
  out.reserve(letters_.size());
  for (auto it = letters_.rbegin(); it != letters_.rend(); ++it) out.push_back(it->inverse());
  return Word(std::move(out));
}

bool Word::is_involution_word() const {
  return std::all_of(letters_.begin(), letters_.end(),
                     [](const Letter& l) { return l.alphabet == Alphabet::involution; });
}

Word operator*(const Word& lhs, const Word& rhs) {
  // Cancellation can only happen at the junction.
  std::size_t cut = 0;
  const std::size_t n = lhs.size();
  while (cut < n && cut < rhs.size() && lhs.letters_[n - 1 - cut].cancels(rhs.letters_[cut])) ++cut;
  std::vector<Letter> out;
  out.reserve(n + rhs.size() - 2 * cut);
  out.insert(out.end(), lhs.letters_.begin(), lhs.letters_.end() - static_cast<std::ptrdiff_t>(cut));
  out.insert(out.end(), rhs.letters_.begin() + static_cast<std::ptrdiff_t>(cut), rhs.letters_.end());
  return Word(std::move(out));
}

std::string Word::to_string() const {
  if (letters_.empty()) return "e";
  std::string out;
  for (std::size_t i = 0; i < letters_.size(); ++i) {
    if (i) out += ' ';
    out += words::to_string(letters_[i]);
  }
  return out;
}

Word commutator(const Word& lhs, const Word& rhs) {
  return lhs * rhs * lhs.inverse() * rhs.inverse();
}

std::vector<Word> free_seeds(int k) {
  std::vector<Word> seeds;
  for (int i = 0; i < k; ++i) seeds.push_back(Word::reduce({Letter::free_generator(static_cast<std::uint8_t>(i))}));
  for (int i = 0; i < k; ++i) seeds.push_back(seeds[static_cast<std::size_t>(i)].inverse());
  return seeds;
}

KleinVector klein_image(const Word& w) {
  KleinVector v{0, 0, 0};
  for (const Letter& l : w.letters()) {
    if (l.alphabet != Alphabet::involution) {
      throw DomainError("klein_image: letter " + to_string(l) + " is not an involution");
    }
    v[l.generator] ^= 1;
  }
  return v;
}

std::vector<Word> schreier_generators() {
  const Word x = Word::reduce({Letter::sigma(0)});
  const Word y = Word::reduce({Letter::sigma(1)});
  const Word z = Word::reduce({Letter::sigma(2)});
  const Word a = x * y;
  const Word b = y * z;
  return {a * a, b * b, commutator(b, a), a * b * a * b.inverse(), a * b * b * a.inverse()};
}

// ---------------------------------------------------------------------------

DerivedSeries::DerivedSeries(std::vector<Word> seeds, SeriesLimits limits)
    : seeds_(std::move(seeds)), limits_(limits) {
  if (seeds_.empty()) throw DomainError("derived series needs at least one seed");
  seed_inverses_.resize(seeds_.size());
  std::vector<CommutatorNode> level0;
  for (std::size_t i = 0; i < seeds_.size(); ++i) {
    const Word inv = seeds_[i].inverse();
    auto it = std::find(seeds_.begin(), seeds_.end(), inv);
    if (it == seeds_.end()) {
      throw DomainError("seed set is not closed under inversion: missing inverse of " + seeds_[i].to_string());
    }
    seed_inverses_[i] = static_cast<std::size_t>(it - seeds_.begin());
    level0.push_back({static_cast<std::uint32_t>(i), 0, static_cast<std::uint32_t>(seeds_[i].size())});
  }
  levels_.push_back(std::move(level0));
  complete_.push_back(true);
}

DerivedSeries DerivedSeries::full(std::vector<Word> seeds, int n, SeriesLimits limits) {
  DerivedSeries s(std::move(seeds), limits);
  s.ensure_complete(n);
  return s;
}

DerivedSeries DerivedSeries::prefix(std::vector<Word> seeds, int n, std::size_t count, int full_levels,
                                    SeriesLimits limits) {
  DerivedSeries s(std::move(seeds), limits);
  s.ensure_complete(std::min(n, full_levels));
  if (n > full_levels) s.ensure_prefix(n, count);
  return s;
}

std::size_t DerivedSeries::size(int level) const { return levels_.at(static_cast<std::size_t>(level)).size(); }

Word DerivedSeries::expand(NodeRef ref) const {
  const CommutatorNode& n = node(ref.level, ref.index);
  if (ref.level == 0) return seeds_.at(n.left);
  return commutator(expand(ref.level - 1, n.left), expand(ref.level - 1, n.right));
}

std::size_t DerivedSeries::expanded_length(NodeRef ref) const { return node(ref.level, ref.index).length; }

std::vector<Word> DerivedSeries::level_words(int level) const {
  std::vector<Word> out;
  out.reserve(size(level));
  if (level == 0) return seeds_;
  const std::vector<Word> below = level_words(level - 1);
  for (const CommutatorNode& n : levels_[static_cast<std::size_t>(level)]) {
    out.push_back(commutator(below[n.left], below[n.right]));
  }
  return out;
}

void DerivedSeries::append_complete_level() {
  const int below = depth();
  if (!complete_.back()) {
    throw std::logic_error("cannot build a complete level above an incomplete one");
  }
  const std::size_t m = size(below);
  if (m * m > limits_.cardinality_cap && m * (m - 1) > limits_.cardinality_cap) {
    throw ResourceLimitError("level " + std::to_string(below + 1) + " would hold up to " + std::to_string(m * m) +
                             " elements, above the cap of " + std::to_string(limits_.cardinality_cap));
  }
  const std::vector<Word> words = level_words(below);
  std::vector<CommutatorNode> next;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const Word c = commutator(words[i], words[j]);
      if (c.empty()) continue;
      next.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(c.size())});
      if (next.size() > limits_.cardinality_cap) {
        throw ResourceLimitError("level " + std::to_string(below + 1) + " exceeds the cap of " +
                                 std::to_string(limits_.cardinality_cap));
      }
    }
  }
  levels_.push_back(std::move(next));
  complete_.push_back(true);
}

void DerivedSeries::ensure_complete(int level) {
  if (level < 0) throw DomainError("level must be nonnegative");
  for (int l = 1; l <= level; ++l) {
    if (l <= depth() && complete(l)) continue;
    if (l <= depth()) {
      // Drop the prefix and everything above, then rebuild.
      levels_.resize(static_cast<std::size_t>(l));
      complete_.resize(static_cast<std::size_t>(l));
    }
    append_complete_level();
  }
}

void DerivedSeries::ensure_prefix(int level, std::size_t count) {
  if (level <= 0 || (level <= depth() && (complete(level) || size(level) >= count))) return;
  if (count > limits_.cardinality_cap) {
    throw ResourceLimitError("requested prefix of " + std::to_string(count) + " elements exceeds the cap");
  }
  // Row 0 of the pair table: [u_0, u_j]. Trivial entries are rare, so ask the
  // level below for a little more than `count` and grow if needed.
  std::size_t want_below = count + 2;
  for (;;) {
    ensure_prefix(level - 1, want_below);
    const bool below_complete = complete(level - 1);
    const std::size_t m = size(level - 1);
    const std::vector<Word> words = level_words(level - 1);
    std::vector<CommutatorNode> next;
    bool row_exhausted = true;
    for (std::size_t i = 0; i < m && next.size() < count; ++i) {
      if (i > 0 && !below_complete) {
        row_exhausted = false;
        break;
      }
      for (std::size_t j = 0; j < m && next.size() < count; ++j) {
        const Word c = commutator(words[i], words[j]);
        if (!c.empty()) {
          next.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(c.size())});
        }
      }
    }
    if (next.size() >= count || (below_complete && row_exhausted)) {
      levels_.resize(static_cast<std::size_t>(level));
      complete_.resize(static_cast<std::size_t>(level));
      const bool whole = below_complete && next.size() < count;
      levels_.push_back(std::move(next));
      complete_.push_back(whole);
      return;
    }
    want_below *= 2;
    if (want_below > limits_.cardinality_cap) {
      throw ResourceLimitError("prefix of level " + std::to_string(level) + " needs too many elements below");
    }
  }
}

nlohmann::json DerivedSeries::manifest() const {
  nlohmann::json j;
  j["seeds"] = nlohmann::json::array();
  for (const Word& w : seeds_) j["seeds"].push_back(w.to_string());
  j["levels"] = nlohmann::json::array();
  for (std::size_t l = 1; l < levels_.size(); ++l) {
    nlohmann::json level;
    level["level"] = l;
    level["complete"] = static_cast<bool>(complete_[l]);
    level["nodes"] = nlohmann::json::array();
    for (const CommutatorNode& n : levels_[l]) level["nodes"].push_back({n.left, n.right, n.length});
    j["levels"].push_back(std::move(level));
  }
  return j;
}

// ---------------------------------------------------------------------------

bool admissible_product(std::span<const std::pair<int, int>> pairs) {
  for (const auto& [i, j] : pairs) {
    if (i == j) return false;
  }
  for (std::size_t l = 0; l + 1 < pairs.size(); ++l) {
    if (pairs[l].first == pairs[l + 1].second && pairs[l].second == pairs[l + 1].first) return false;
  }
  return true;
}

Word commutator_product(std::span<const std::pair<int, int>> pairs) {
  std::vector<Letter> raw;
  raw.reserve(4 * pairs.size());
  for (const auto& [i, j] : pairs) {
    const auto a = static_cast<std::uint8_t>(i);
    const auto b = static_cast<std::uint8_t>(j);
    raw.push_back(Letter::free_generator(a));
    raw.push_back(Letter::free_generator(b));
    raw.push_back(Letter::free_generator(a, true));
    raw.push_back(Letter::free_generator(b, true));
  }
  return Word::reduce(raw);
}

RamificationReport verify_fast_ramification(int k, int trials, int max_factors, std::uint64_t seed) {
  if (k < 2) throw DomainError("fast ramification needs k >= 2");
  if (max_factors < 1) throw DomainError("max_factors must be positive");
  RamificationReport report{k, trials, max_factors, std::numeric_limits<std::int64_t>::max(), {}};
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(t));
    const int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_factors)));
    std::vector<std::pair<int, int>> pairs;
    while (static_cast<int>(pairs.size()) < n) {
      const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(k - 1)));
      if (j >= i) ++j;
      if (!pairs.empty() && pairs.back().first == j && pairs.back().second == i) continue;
      pairs.emplace_back(i, j);
    }
    const Word w = commutator_product(pairs);
    const auto slack = static_cast<std::int64_t>(w.size()) - (2 * n + 2);
    report.min_slack = std::min(report.min_slack, slack);
    if (slack < 0) report.violations.push_back({pairs, w.size()});
  }
  if (trials <= 0) report.min_slack = 0;
  return report;
}

TreeBranchingReport tree_path_count(int k, int depth, std::size_t branching_cap, SeriesLimits limits) {
  if (k < 4) throw DomainError("tree branching needs k >= 4 generators (at least 8 seeds)");
  if (depth < 0) throw DomainError("depth must be nonnegative");
  TreeBranchingReport report{depth, {}, branching_cap, 1.0};
  if (depth == 0) return report;

  DerivedSeries series(free_seeds(k), limits);
  // Step 1 joins the root to every element of S^(1).
  series.ensure_complete(1);
  report.min_branching.push_back(std::min(series.size(1), branching_cap));

  for (int level = 1; level < depth; ++level) {
    series.ensure_complete(level);
    const std::vector<Word> words = [&] {
      std::vector<Word> w;
      for (std::size_t i = 0; i < series.size(level); ++i) w.push_back(series.expand(level, i));
      return w;
    }();
    std::size_t level_min = branching_cap;
    for (const Word& s : words) {
      std::set<Word> children;
      for (const Word& t : words) {
        Word c = commutator(s, t);
        if (!c.empty()) children.insert(std::move(c));
        if (children.size() >= branching_cap) break;
      }
      level_min = std::min(level_min, children.size());
    }
    report.min_branching.push_back(level_min);
  }
  for (std::size_t b : report.min_branching) {
    if (b < 3) throw std::logic_error("commutator tree branches fewer than three ways at some leaf");
    report.bound *= static_cast<double>(b);
  }
  return report;
}

}  // namespace k3gaps::words
