#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace silo {

using Residue = std::uint8_t;

class Sequence;

// Ordered residue vocabulary with one designated neutral symbol (alanine
// for proteins) used by the alanine-scan variant.
class Alphabet {
 public:
  Alphabet(std::string symbols, std::size_t neutral_index);

  // The 20 standard amino acids in canonical one-letter order, neutral 'A'.
  static Alphabet amino_acids();

  std::size_t size() const { return symbols_.size(); }
  const std::string& symbols() const { return symbols_; }
  Residue neutral() const { return static_cast<Residue>(neutral_index_); }
  char symbol(Residue r) const;
  Residue index_of(char c) const;

  Sequence parse(std::string_view text) const;
  std::string format(const Sequence& seq) const;

  friend bool operator==(const Alphabet&, const Alphabet&) = default;

 private:
  std::string symbols_;
  std::size_t neutral_index_;
};

// Fixed-length residue string. Immutable once built; edits return copies.
class Sequence {
 public:
  Sequence() = default;
  explicit Sequence(std::vector<Residue> residues) : residues_(std::move(residues)) {}

  std::size_t size() const { return residues_.size(); }
  bool empty() const { return residues_.empty(); }
  Residue operator[](std::size_t i) const { return residues_[i]; }
  std::span<const Residue> residues() const { return residues_; }

  // FNV-1a over the residue indices; identifies x_start in trajectories.
  std::uint64_t hash() const;

  friend bool operator==(const Sequence&, const Sequence&) = default;
  friend auto operator<=>(const Sequence&, const Sequence&) = default;

 private:
  std::vector<Residue> residues_;
};

struct SequenceHash {
  std::size_t operator()(const Sequence& s) const { return static_cast<std::size_t>(s.hash()); }
};

struct EditAction {
  std::size_t position = 0;
  Residue residue = 0;

  friend bool operator==(const EditAction&, const EditAction&) = default;
  friend auto operator<=>(const EditAction&, const EditAction&) = default;
};

// Ordered edits applied to the start sequence identified by start_hash.
// logprob is the natural-log probability under the policy that produced it.
struct Trajectory {
  std::uint64_t start_hash = 0;
  std::vector<EditAction> actions;
  double logprob = 0.0;
};

std::size_t hamming(const Sequence& x, const Sequence& y);

// Substitute a.residue at a.position. Throws BoundsError if either index is
// out of range for (x, alphabet).
Sequence apply_action(const Sequence& x, EditAction a, const Alphabet& alphabet);

// Positions where x differs from x_start, ascending.
std::vector<std::size_t> mutated_positions(const Sequence& x, const Sequence& x_start);

// Left fold of apply_action over t.actions. Throws ProvenanceError when
// t.start_hash does not identify x_start.
Sequence replay(const Sequence& x_start, const Trajectory& t, const Alphabet& alphabet);

Trajectory make_trajectory(const Sequence& x_start, std::vector<EditAction> actions,
                           double logprob = 0.0);

}  // namespace silo
