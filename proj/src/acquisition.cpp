#include "silo/acquisition.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

#include "silo/errors.hpp"

namespace silo {

Sequence afs_variant(const Sequence& x, const Sequence& x_start, const Alphabet& alphabet) {
  if (x.size() != x_start.size()) throw DimensionError("afs_variant: length mismatch");
  std::vector<Residue> r(x.residues().begin(), x.residues().end());
  for (auto pos : mutated_positions(x, x_start)) r[pos] = alphabet.neutral();
  return Sequence(std::move(r));
}

std::vector<ScoredCandidate> score_candidates(std::span<const Candidate> cands, const Scorer& scorer,
                                              const Sequence& x_start, const Alphabet& alphabet, double gamma1,
                                              double gamma2, bool use_afs) {
  std::vector<ScoredCandidate> out;
  if (cands.empty()) return out;
  std::vector<Sequence> xs;
  for (const auto& c : cands) {
    if (replay(x_start, c.trajectory, alphabet) != c.sequence)
      throw ProvenanceError("candidate trajectory does not replay to its sequence");
    xs.push_back(c.sequence);
  }
  if (use_afs)
    for (const auto& c : cands) xs.push_back(afs_variant(c.sequence, x_start, alphabet));
  const auto preds = scorer.predict_batch(xs);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    ScoredCandidate s{cands[i].sequence, cands[i].trajectory, preds[i].mu, preds[i].sigma, 0.0, 0.0, 0.0, i};
    s.score = ucb(s.mu, s.sigma, gamma1);
    if (use_afs) {
      s.mu_afs = preds[cands.size() + i].mu;
      s.sigma_afs = preds[cands.size() + i].sigma;
      s.score += ucb(s.mu_afs, s.sigma_afs, gamma2);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoredCandidate> select_topk_unique(std::span<const ScoredCandidate> scored, std::size_t K) {
  if (K == 0) throw PreconditionError("select_topk_unique: K must be >= 1");
  std::vector<const ScoredCandidate*> order;
  for (const auto& s : scored) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const ScoredCandidate* a, const ScoredCandidate* b) {
    if (a->score != b->score) return a->score > b->score;
    if (a->sequence != b->sequence) return a->sequence < b->sequence;
    return a->index < b->index;
  });
  std::vector<ScoredCandidate> out;
  std::set<Sequence> seen;
  for (const auto* s : order) {
    if (out.size() == K) break;
    if (!seen.insert(s->sequence).second) continue;
    out.push_back(*s);
  }
  return out;
}

void write_candidates_csv(const std::filesystem::path& path, std::span<const ScoredCandidate> scored,
                          std::span<const ScoredCandidate> selected, const Alphabet& alphabet) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  std::set<std::size_t> chosen;
  for (const auto& s : selected) chosen.insert(s.index);
  out << "sequence,score,mu,sigma,mu_afs,sigma_afs,selected\n";
  for (const auto& s : scored)
    out << alphabet.format(s.sequence) << ',' << s.score << ',' << s.mu << ',' << s.sigma << ',' << s.mu_afs << ','
        << s.sigma_afs << ',' << (chosen.count(s.index) ? 1 : 0) << '\n';
}

}  // namespace silo
