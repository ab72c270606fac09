#include "silo/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "silo/errors.hpp"

namespace silo {

using nlohmann::json;

namespace {

const std::vector<std::pair<std::string, bool Modes::*>>& mode_fields() {
  static const std::vector<std::pair<std::string, bool Modes::*>> fields{
      {"random_baseline", &Modes::random_baseline}, {"bs_instead_of_sbs", &Modes::bs_instead_of_sbs},
      {"no_afs", &Modes::no_afs},                   {"frozen_policy", &Modes::frozen_policy},
      {"noisy_proxy", &Modes::noisy_proxy},         {"lowdata", &Modes::lowdata},
  };
  return fields;
}

}  // namespace

Modes parse_modes(std::string_view list) {
  Modes m;
  std::string text(list);
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, e - b + 1);
    if (item == "full") continue;
    bool found = false;
    for (const auto& [name, field] : mode_fields())
      if (name == item) {
        m.*field = true;
        found = true;
      }
    if (!found) throw ConfigError("mode: unknown mode '" + item + "'");
  }
  return m;
}

std::string format_modes(const Modes& m) {
  std::string out;
  for (const auto& [name, field] : mode_fields())
    if (m.*field) out += (out.empty() ? "" : ",") + name;
  return out.empty() ? "full" : out;
}

namespace {

using Setter = std::function<void(ExperimentConfig&, const json&)>;

template <typename T>
Setter field(T RunConfig::*member) {
  return [member](ExperimentConfig& c, const json& v) { c.run.*member = v.get<T>(); };
}
template <typename T>
Setter task_field(T TaskConfig::*member) {
  return [member](ExperimentConfig& c, const json& v) { c.task.*member = v.get<T>(); };
}
template <typename T>
Setter proxy_field(T ProxyConfig::*member) {
  return [member](ExperimentConfig& c, const json& v) { c.run.proxy.*member = v.get<T>(); };
}
template <typename T>
Setter policy_field(T PolicyConfig::*member) {
  return [member](ExperimentConfig& c, const json& v) { c.run.policy.*member = v.get<T>(); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"rounds", field(&RunConfig::rounds)},
      {"budget", field(&RunConfig::budget)},
      {"instances", field(&RunConfig::instances)},
      {"dmax", field(&RunConfig::dmax)},
      {"beam", field(&RunConfig::beam)},
      {"bestfound", field(&RunConfig::bestfound)},
      {"gamma1", field(&RunConfig::gamma1)},
      {"gamma2", field(&RunConfig::gamma2)},
      {"mode", [](ExperimentConfig& c, const json& v) { c.run.modes = parse_modes(v.get<std::string>()); }},
      {"snr", field(&RunConfig::snr)},
      {"lowdata_fraction", field(&RunConfig::lowdata_fraction)},
      {"seed", field(&RunConfig::seed)},
      {"top_r", field(&RunConfig::top_r)},
      {"median_r", field(&RunConfig::median_r)},
      {"checkpoints", field(&RunConfig::checkpoints)},
      {"sbs_trace", field(&RunConfig::sbs_trace)},
      {"proxy_ensemble", proxy_field(&ProxyConfig::ensemble_size)},
      {"proxy_lr", proxy_field(&ProxyConfig::lr)},
      {"proxy_weight_decay", proxy_field(&ProxyConfig::weight_decay)},
      {"proxy_batch", proxy_field(&ProxyConfig::batch_size)},
      {"proxy_max_epochs", proxy_field(&ProxyConfig::max_epochs)},
      {"proxy_patience", proxy_field(&ProxyConfig::patience)},
      {"proxy_channels", proxy_field(&ProxyConfig::channels)},
      {"proxy_kernel", proxy_field(&ProxyConfig::kernel)},
      {"proxy_val_fraction", proxy_field(&ProxyConfig::val_fraction)},
      {"policy_dim", policy_field(&PolicyConfig::dim)},
      {"policy_heads", policy_field(&PolicyConfig::heads)},
      {"policy_blocks", policy_field(&PolicyConfig::blocks)},
      {"policy_head_init_std", policy_field(&PolicyConfig::head_init_std)},
      {"policy_lr", policy_field(&PolicyConfig::lr)},
      {"imitation_batch", policy_field(&PolicyConfig::batch)},
      {"imitation_steps", policy_field(&PolicyConfig::steps)},
      {"landscape", task_field(&TaskConfig::landscape)},
      {"length", task_field(&TaskConfig::length)},
      {"nk_k", task_field(&TaskConfig::nk_k)},
      {"alphabet", task_field(&TaskConfig::alphabet)},
      {"neutral", task_field(&TaskConfig::neutral)},
      {"landscape_seed", task_field(&TaskConfig::landscape_seed)},
      {"wildtype", task_field(&TaskConfig::wildtype)},
      {"critical_positions", task_field(&TaskConfig::critical_positions)},
      {"critical_penalty", task_field(&TaskConfig::critical_penalty)},
      {"table_path", task_field(&TaskConfig::table_path)},
      {"initial_data_path", task_field(&TaskConfig::initial_data_path)},
      {"initial_size", task_field(&TaskConfig::initial_size)},
      {"initial_min_radius", task_field(&TaskConfig::initial_min_radius)},
      {"initial_max_radius", task_field(&TaskConfig::initial_max_radius)},
  };
  return table;
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second(c, value);
    } catch (const json::exception& e) {
      throw ConfigError("field '" + key + "': " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("field '" + key + "': " + e.what());
    }
  }
  for (auto* path : {&c.task.table_path, &c.task.initial_data_path})
    if (!path->empty() && std::filesystem::path(*path).is_relative() && !base_dir.empty())
      *path = (base_dir / *path).string();
  validate(c);
  return c;
}

json to_json(const ExperimentConfig& c) {
  const auto& r = c.run;
  const auto& t = c.task;
  return json{
      {"rounds", r.rounds},
      {"budget", r.budget},
      {"instances", r.instances},
      {"dmax", r.dmax},
      {"beam", r.beam},
      {"bestfound", r.bestfound},
      {"gamma1", r.gamma1},
      {"gamma2", r.gamma2},
      {"mode", format_modes(r.modes)},
      {"snr", r.snr},
      {"lowdata_fraction", r.lowdata_fraction},
      {"seed", r.seed},
      {"top_r", r.top_r},
      {"median_r", r.median_r},
      {"checkpoints", r.checkpoints},
      {"sbs_trace", r.sbs_trace},
      {"proxy_ensemble", r.proxy.ensemble_size},
      {"proxy_lr", r.proxy.lr},
      {"proxy_weight_decay", r.proxy.weight_decay},
      {"proxy_batch", r.proxy.batch_size},
      {"proxy_max_epochs", r.proxy.max_epochs},
      {"proxy_patience", r.proxy.patience},
      {"proxy_channels", r.proxy.channels},
      {"proxy_kernel", r.proxy.kernel},
      {"proxy_val_fraction", r.proxy.val_fraction},
      {"policy_dim", r.policy.dim},
      {"policy_heads", r.policy.heads},
      {"policy_blocks", r.policy.blocks},
      {"policy_head_init_std", r.policy.head_init_std},
      {"policy_lr", r.policy.lr},
      {"imitation_batch", r.policy.batch},
      {"imitation_steps", r.policy.steps},
      {"landscape", t.landscape},
      {"length", t.length},
      {"nk_k", t.nk_k},
      {"alphabet", t.alphabet},
      {"neutral", t.neutral},
      {"landscape_seed", t.landscape_seed},
      {"wildtype", t.wildtype},
      {"critical_positions", t.critical_positions},
      {"critical_penalty", t.critical_penalty},
      {"table_path", t.table_path},
      {"initial_data_path", t.initial_data_path},
      {"initial_size", t.initial_size},
      {"initial_min_radius", t.initial_min_radius},
      {"initial_max_radius", t.initial_max_radius},
  };
}

void validate(const ExperimentConfig& c) {
  const auto& r = c.run;
  const auto& t = c.task;
  auto fail = [](const std::string& key, const std::string& msg) { throw ConfigError("field '" + key + "': " + msg); };
  if (r.budget < 1) fail("budget", "must be >= 1");
  if (r.instances < 1) fail("instances", "must be >= 1");
  if (r.beam < 1) fail("beam", "must be >= 1");
  if (r.bestfound < 1) fail("bestfound", "must be >= 1");
  if (r.dmax.empty()) fail("dmax", "needs at least one mutational budget");
  if (r.instances * r.dmax.size() * r.beam < r.budget)
    fail("budget", "instances x |dmax| x beam must be >= budget");
  if (r.top_r < 1) fail("top_r", "must be >= 1");
  if (r.median_r < 1) fail("median_r", "must be >= 1");
  if (r.proxy.ensemble_size < 1) fail("proxy_ensemble", "must be >= 1");
  if (r.proxy.kernel % 2 == 0) fail("proxy_kernel", "must be odd");
  if (r.proxy.channels < 1) fail("proxy_channels", "must be >= 1");
  if (r.proxy.batch_size < 1) fail("proxy_batch", "must be >= 1");
  if (r.proxy.max_epochs < 1) fail("proxy_max_epochs", "must be >= 1");
  if (r.proxy.patience < 1) fail("proxy_patience", "must be >= 1");
  if (!(r.proxy.val_fraction > 0.0 && r.proxy.val_fraction < 1.0)) fail("proxy_val_fraction", "must be in (0, 1)");
  if (r.policy.dim < 1 || r.policy.heads < 1 || r.policy.dim % r.policy.heads != 0)
    fail("policy_dim", "must be a positive multiple of policy_heads");
  if (r.policy.head_init_std < 0.0) fail("policy_head_init_std", "must be >= 0");
  if (r.policy.batch < 1) fail("imitation_batch", "must be >= 1");
  if (r.modes.lowdata && !(r.lowdata_fraction > 0.0 && r.lowdata_fraction <= 1.0))
    fail("lowdata_fraction", "must be in (0, 1]");

  if (t.landscape != "nk" && t.landscape != "table") fail("landscape", "must be 'nk' or 'table'");
  if (t.alphabet.size() < 2) fail("alphabet", "needs at least two symbols");
  if (t.neutral >= t.alphabet.size()) fail("neutral", "index outside the alphabet");
  if (t.landscape == "nk") {
    if (t.length < 1) fail("length", "must be >= 1");
    if (t.nk_k >= t.length) fail("nk_k", "must be < length");
    if (!t.wildtype.empty() && t.wildtype.size() != t.length) fail("wildtype", "length differs from 'length'");
    if (t.initial_data_path.empty()) {
      if (t.initial_size < 2) fail("initial_size", "must be >= 2");
      if (t.initial_min_radius > t.initial_max_radius || t.initial_max_radius > t.length)
        fail("initial_max_radius", "need initial_min_radius <= initial_max_radius <= length");
    }
  } else {
    if (t.table_path.empty()) fail("table_path", "required for a table landscape");
    if (t.initial_data_path.empty()) fail("initial_data_path", "required for a table landscape");
  }
  for (auto d : r.dmax)
    if (d < 1 || (t.landscape == "nk" && d > t.length)) fail("dmax", "each budget must be in [1, length]");
  for (auto p : t.critical_positions)
    if (t.landscape == "nk" && p >= t.length) fail("critical_positions", "position outside the sequence");
  if (!(t.critical_penalty >= 0.0 && t.critical_penalty <= 1.0)) fail("critical_penalty", "must be in [0, 1]");
}

namespace {

json preset_json(const std::string& name) {
  if (name == "nk_default") return json::object();
  if (name == "nk_small")
    return json{{"length", 12},          {"nk_k", 2},           {"alphabet", "ACDEFGHI"},  {"landscape_seed", 3},
                {"initial_size", 100},   {"rounds", 10},        {"budget", 64},            {"instances", 3},
                {"beam", 16},            {"bestfound", 16},     {"proxy_channels", 16},    {"proxy_lr", 3e-3},
                {"proxy_max_epochs", 60}, {"proxy_batch", 64},  {"policy_dim", 32},        {"policy_heads", 4},
                {"policy_lr", 3e-4},     {"imitation_steps", 60}, {"imitation_batch", 16}, {"policy_head_init_std", 0.0}};
  if (name == "critical")
    return json{{"length", 12},
                {"nk_k", 1},
                {"alphabet", "ACDEFGHI"},
                {"landscape_seed", 5},
                {"critical_positions", {1, 4, 7, 10}},
                {"critical_penalty", 0.2},
                {"initial_size", 150},
                {"rounds", 1},
                {"budget", 32},
                {"instances", 2},
                {"beam", 16},
                {"proxy_channels", 16},
                {"proxy_lr", 3e-3},
                {"proxy_max_epochs", 60},
                {"proxy_batch", 64},
                {"policy_dim", 32},
                {"mode", "frozen_policy"}};
  throw ConfigError("config '" + name + "' is neither a file nor a preset");
}

}  // namespace

std::vector<std::string> preset_names() { return {"nk_default", "nk_small", "critical"}; }

ExperimentConfig load_config(const std::string& path_or_preset) {
  const std::filesystem::path path(path_or_preset);
  if (std::filesystem::is_regular_file(path)) {
    std::ifstream in(path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
  }
  for (const auto& name : preset_names())
    if (name == path_or_preset) return parse_config(preset_json(name));
  throw ConfigError("config file not found: " + path_or_preset);
}

}  // namespace silo
