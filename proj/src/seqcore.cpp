#include "silo/seqcore.hpp"

#include <algorithm>

#include "silo/errors.hpp"

namespace silo {

Alphabet::Alphabet(std::string symbols, std::size_t neutral_index)
    : symbols_(std::move(symbols)), neutral_index_(neutral_index) {
  if (symbols_.size() < 2) throw ConfigError("alphabet needs at least 2 symbols");
  if (symbols_.size() > 255) throw ConfigError("alphabet larger than 255 symbols");
  if (neutral_index_ >= symbols_.size()) throw ConfigError("neutral index outside alphabet");
  std::string sorted = symbols_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("alphabet symbols must be unique: " + symbols_);
}

Alphabet Alphabet::amino_acids() { return Alphabet("ACDEFGHIKLMNPQRSTVWY", 0); }

char Alphabet::symbol(Residue r) const {
  if (r >= symbols_.size()) throw BoundsError("residue index " + std::to_string(r) + " outside alphabet");
  return symbols_[r];
}

Residue Alphabet::index_of(char c) const {
  auto pos = symbols_.find(c);
  if (pos == std::string::npos) throw ParseError(std::string("symbol '") + c + "' not in alphabet " + symbols_);
  return static_cast<Residue>(pos);
}

Sequence Alphabet::parse(std::string_view text) const {
  std::vector<Residue> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(index_of(c));
  return Sequence(std::move(out));
}

std::string Alphabet::format(const Sequence& seq) const {
  std::string out;
  out.reserve(seq.size());
  for (Residue r : seq.residues()) out.push_back(symbol(r));
  return out;
}

std::uint64_t Sequence::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Residue r : residues_) {
    h ^= r;
    h *= 0x100000001b3ULL;
  }
  // Mix in the length so "" and sequences of index 0 differ.
  h ^= residues_.size();
  h *= 0x100000001b3ULL;
  return h;
}

std::size_t hamming(const Sequence& x, const Sequence& y) {
  if (x.size() != y.size())
    throw DimensionError("hamming: lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  std::size_t d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) d += x[i] != y[i];
  return d;
}

Sequence apply_action(const Sequence& x, EditAction a, const Alphabet& alphabet) {
  if (a.position >= x.size())
    throw BoundsError("position " + std::to_string(a.position) + " outside length " + std::to_string(x.size()));
  if (a.residue >= alphabet.size())
    throw BoundsError("residue " + std::to_string(a.residue) + " outside alphabet of size " +
                      std::to_string(alphabet.size()));
  std::vector<Residue> r(x.residues().begin(), x.residues().end());
  r[a.position] = a.residue;
  return Sequence(std::move(r));
}

std::vector<std::size_t> mutated_positions(const Sequence& x, const Sequence& x_start) {
  if (x.size() != x_start.size()) throw DimensionError("mutated_positions: length mismatch");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != x_start[i]) out.push_back(i);
  return out;
}

Sequence replay(const Sequence& x_start, const Trajectory& t, const Alphabet& alphabet) {
  if (t.start_hash != x_start.hash()) throw ProvenanceError("trajectory was not recorded from this start sequence");
  Sequence x = x_start;
  for (const auto& a : t.actions) x = apply_action(x, a, alphabet);
  return x;
}

Trajectory make_trajectory(const Sequence& x_start, std::vector<EditAction> actions, double logprob) {
  return Trajectory{x_start.hash(), std::move(actions), logprob};
}

}  // namespace silo
