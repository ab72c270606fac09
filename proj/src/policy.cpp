#include "silo/policy.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "silo/errors.hpp"
#include "silo/rng.hpp"

namespace silo {

EpisodeState EpisodeState::start(const Sequence& x) { return EpisodeState{x, std::vector<std::uint8_t>(x.size(), 0), 0}; }

bool EpisodeState::legal(EditAction a) const {
  return a.position < current.size() && !edited[a.position] && a.residue != current[a.position];
}

EpisodeState EpisodeState::advance(EditAction a, const Alphabet& alphabet) const {
  if (a.position >= current.size()) throw ProvenanceError("action position outside sequence");
  if (edited[a.position]) throw ProvenanceError("position " + std::to_string(a.position) + " edited twice");
  if (a.residue == current[a.position]) throw ProvenanceError("substitution does not change the residue");
  EpisodeState next{apply_action(current, a, alphabet), edited, step + 1};
  next.edited[a.position] = 1;
  return next;
}

namespace {

nn::Tensor uniform_init(nn::Shape shape, double bound, Rng& rng) {
  nn::Tensor t(std::move(shape));
  for (auto& v : t.data) v = (2.0 * rng.uniform_open() - 1.0) * bound;
  return t;
}

nn::Tensor normal_init(nn::Shape shape, double stddev, Rng& rng) {
  nn::Tensor t(std::move(shape));
  if (stddev == 0.0) return t;
  for (auto& v : t.data) v = stddev * rng.normal();
  return t;
}

void add_linear(nn::ParamStore& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  p.add(name + ".w", uniform_init({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng));
  p.add(name + ".b", nn::Tensor({out}));
}

void add_norm(nn::ParamStore& p, const std::string& name, std::size_t dim) {
  p.add(name + ".g", nn::Tensor({dim}, 1.0));
  p.add(name + ".b", nn::Tensor({dim}));
}

}  // namespace

PolicyModel::PolicyModel(std::size_t length, Alphabet alphabet, PolicyConfig cfg, std::uint64_t seed)
    : length_(length), alphabet_(std::move(alphabet)), cfg_(cfg) {
  if (length_ == 0) throw ConfigError("policy needs L >= 1");
  if (cfg_.dim == 0 || cfg_.heads == 0 || cfg_.dim % cfg_.heads != 0)
    throw ConfigError("policy latent dim must be a positive multiple of the head count");
  if (cfg_.head_init_std < 0.0) throw ConfigError("policy head_init_std must be >= 0");
  const auto D = cfg_.dim, V = alphabet_.size();
  Rng rng(seed);
  const double emb = 1.0 / std::sqrt(static_cast<double>(D));
  params_.add("embed.token", normal_init({V, D}, emb, rng));
  params_.add("embed.position", normal_init({length_, D}, emb, rng));
  params_.add("embed.edited", normal_init({2, D}, emb, rng));
  for (std::size_t b = 0; b < cfg_.blocks; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    add_norm(params_, pre + "ln1", D);
    add_linear(params_, pre + "q", D, D, rng);
    add_linear(params_, pre + "k", D, D, rng);
    add_linear(params_, pre + "v", D, D, rng);
    add_linear(params_, pre + "o", D, D, rng);
    add_norm(params_, pre + "ln2", D);
    add_linear(params_, pre + "ff1", D, 4 * D, rng);
    add_linear(params_, pre + "ff2", 4 * D, D, rng);
  }
  add_norm(params_, "final_ln", D);
  params_.add("head0.w", normal_init({D, 1}, cfg_.head_init_std, rng));
  params_.add("head0.b", nn::Tensor({1}));
  params_.add("head1.w", normal_init({D, V}, cfg_.head_init_std, rng));
  params_.add("head1.b", nn::Tensor({V}));
}

PolicyModel::Heads PolicyModel::forward(nn::Tape& tape, std::span<const EpisodeState> states, bool trainable) const {
  if (states.empty()) throw StateError("policy forward on an empty batch");
  const auto B = states.size(), L = length_;
  auto bind = [&](const std::string& name) {
    return trainable ? tape.parameter(params_, name) : tape.constant(params_.value(name));
  };
  std::vector<std::size_t> tokens(B * L), positions(B * L), flags(B * L);
  for (std::size_t b = 0; b < B; ++b) {
    const auto& s = states[b];
    if (s.current.size() != L || s.edited.size() != L)
      throw DimensionError("policy expects length " + std::to_string(L) + ", got " + std::to_string(s.current.size()));
    for (std::size_t l = 0; l < L; ++l) {
      tokens[b * L + l] = s.current[l];
      positions[b * L + l] = l;
      flags[b * L + l] = s.edited[l] ? 1 : 0;
    }
  }
  auto x = nn::add(nn::add(nn::embedding(bind("embed.token"), tokens), nn::embedding(bind("embed.position"), positions)),
                   nn::embedding(bind("embed.edited"), flags));
  for (std::size_t blk = 0; blk < cfg_.blocks; ++blk) {
    const std::string pre = "block" + std::to_string(blk) + ".";
    auto lin = [&](nn::Var in, const std::string& name) { return nn::affine(in, bind(pre + name + ".w"), bind(pre + name + ".b")); };
    auto h = nn::layer_norm(x, bind(pre + "ln1.g"), bind(pre + "ln1.b"));
    auto a = nn::attention(lin(h, "q"), lin(h, "k"), lin(h, "v"), B, cfg_.heads);
    x = nn::add(x, lin(a, "o"));
    h = nn::layer_norm(x, bind(pre + "ln2.g"), bind(pre + "ln2.b"));
    x = nn::add(x, lin(nn::relu(lin(h, "ff1")), "ff2"));
  }
  auto H = nn::layer_norm(x, bind("final_ln.g"), bind("final_ln.b"));
  auto pos = nn::reshape(nn::affine(H, bind("head0.w"), bind("head0.b")), {B, L});
  auto res = nn::affine(H, bind("head1.w"), bind("head1.b"));
  return {pos, res};
}

std::vector<std::uint8_t> position_mask(std::span<const EpisodeState> states) {
  std::vector<std::uint8_t> m;
  for (const auto& s : states)
    for (auto e : s.edited) m.push_back(e ? 0 : 1);
  return m;
}

std::vector<std::uint8_t> residue_mask(std::span<const EpisodeState> states, std::size_t alphabet_size) {
  std::vector<std::uint8_t> m;
  for (const auto& s : states)
    for (std::size_t l = 0; l < s.current.size(); ++l)
      for (std::size_t r = 0; r < alphabet_size; ++r) m.push_back(r == s.current[l] ? 0 : 1);
  return m;
}

std::vector<StepLogProbs> PolicyModel::log_probs(std::span<const EpisodeState> states) const {
  nn::Tape tape;
  auto heads = forward(tape, states, false);
  const auto pmask = position_mask(states);
  const auto rmask = residue_mask(states, alphabet_.size());
  const auto& lp_pos = nn::log_softmax(heads.position, pmask).value();
  const auto& lp_res = nn::log_softmax(heads.residue, rmask).value();
  const auto L = length_, V = alphabet_.size();
  std::vector<StepLogProbs> out(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    out[b].position.assign(lp_pos.data.begin() + static_cast<std::ptrdiff_t>(b * L),
                           lp_pos.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * L));
    out[b].residue.assign(lp_res.data.begin() + static_cast<std::ptrdiff_t>(b * L * V),
                          lp_res.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * L * V));
  }
  return out;
}

std::vector<double> position_distribution(const PolicyModel& p, const EpisodeState& s) {
  return p.log_probs(std::span(&s, 1)).front().position;
}

std::vector<double> residue_distribution(const PolicyModel& p, const EpisodeState& s, std::size_t pos) {
  if (pos >= s.current.size()) throw PreconditionError("residue_distribution: position out of range");
  if (s.edited[pos]) throw PreconditionError("residue_distribution: position already edited");
  const auto lp = p.log_probs(std::span(&s, 1)).front();
  const auto V = p.alphabet().size();
  return {lp.residue.begin() + static_cast<std::ptrdiff_t>(pos * V),
          lp.residue.begin() + static_cast<std::ptrdiff_t>((pos + 1) * V)};
}

double trajectory_logprob(const PolicyModel& p, const Sequence& x_start, const Trajectory& t) {
  if (t.start_hash != x_start.hash()) throw ProvenanceError("trajectory was not recorded from this start sequence");
  if (t.actions.empty()) return 0.0;
  std::vector<EpisodeState> states{EpisodeState::start(x_start)};
  for (std::size_t i = 0; i + 1 < t.actions.size(); ++i) states.push_back(states.back().advance(t.actions[i], p.alphabet()));
  if (!states.back().legal(t.actions.back())) throw ProvenanceError("final action is illegal under the episode masks");
  const auto lps = p.log_probs(states);
  const auto V = p.alphabet().size();
  double total = 0.0;
  for (std::size_t i = 0; i < t.actions.size(); ++i) {
    const auto& a = t.actions[i];
    total += lps[i].position[a.position] + lps[i].residue[a.position * V + a.residue];
  }
  return total;
}

std::vector<ImitationPair> imitation_pairs(const PolicyModel& p, std::span<const Demonstration> demos) {
  std::vector<ImitationPair> pairs;
  for (const auto& demo : demos) {
    if (demo.trajectory.start_hash != demo.x_start.hash())
      throw ProvenanceError("demonstration trajectory does not match its start sequence");
    if (demo.x_start.size() != p.length()) throw DimensionError("demonstration length does not match the policy");
    auto state = EpisodeState::start(demo.x_start);
    for (const auto& a : demo.trajectory.actions) {
      if (!state.legal(a)) throw ProvenanceError("demonstration contains an illegal action");
      pairs.push_back({state, a});
      state = state.advance(a, p.alphabet());
    }
  }
  return pairs;
}

nn::Var imitation_loss(nn::Tape& tape, const PolicyModel& p, std::span<const ImitationPair> pairs, bool trainable) {
  std::vector<EpisodeState> states;
  std::vector<std::size_t> pos_targets, rows, res_targets;
  const auto L = p.length();
  for (std::size_t b = 0; b < pairs.size(); ++b) {
    states.push_back(pairs[b].state);
    pos_targets.push_back(pairs[b].action.position);
    rows.push_back(b * L + pairs[b].action.position);
    res_targets.push_back(pairs[b].action.residue);
  }
  auto heads = p.forward(tape, states, trainable);
  const auto pmask = position_mask(states);
  auto lp_pos = nn::pick(nn::log_softmax(heads.position, pmask), pos_targets);
  // Residue logits only for the chosen row of each pair.
  auto chosen = nn::gather_rows(heads.residue, rows);
  std::vector<std::uint8_t> rmask;
  for (const auto& pair : pairs)
    for (std::size_t r = 0; r < p.alphabet().size(); ++r) rmask.push_back(r == pair.state.current[pair.action.position] ? 0 : 1);
  auto lp_res = nn::pick(nn::log_softmax(chosen, rmask), res_targets);
  return nn::scale(nn::mean(nn::add(lp_pos, lp_res)), -1.0);
}

std::vector<double> imitation_update(PolicyModel& p, std::span<const Demonstration> demos, std::size_t steps,
                                     std::size_t batch, double lr, std::uint64_t seed) {
  if (demos.empty()) throw PreconditionError("imitation_update needs at least one demonstration");
  if (batch == 0) throw ConfigError("imitation batch must be >= 1");
  const auto pairs = imitation_pairs(p, demos);
  std::vector<double> trace;
  if (steps == 0) return trace;
  if (pairs.empty()) throw PreconditionError("demonstrations contain no actions");
  Rng rng(seed);
  const nn::AdamConfig adam{lr, 0.9, 0.999, 1e-8, 0.0};
  std::vector<ImitationPair> sample(batch);
  for (std::size_t step = 0; step < steps; ++step) {
    for (auto& s : sample) s = pairs[rng.below(pairs.size())];
    auto [loss, grads] = nn::value_and_grad([&](nn::Tape& tape) { return imitation_loss(tape, p, sample, true); });
    if (!std::isfinite(loss)) throw TrainingError("imitation loss is not finite at step " + std::to_string(step));
    nn::adam_update(p.params(), grads, adam);
    trace.push_back(loss);
  }
  return trace;
}

}  // namespace silo
