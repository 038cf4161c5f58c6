#include "cmil/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cmil {

namespace {

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_num(const std::string& key, const std::string& raw);

template <>
double parse_num<double>(const std::string& key, const std::string& raw) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(raw, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value for '" + key + "': " + raw);
  }
  if (pos != raw.size())
    throw std::invalid_argument("config: bad numeric value for '" + key + "': " + raw);
  return v;
}

template <>
long parse_num<long>(const std::string& key, const std::string& raw) {
  const double v = parse_num<double>(key, raw);
  const long out = static_cast<long>(v);
  if (static_cast<double>(out) != v)
    throw std::invalid_argument("config: expected integer for '" + key + "': " + raw);
  return out;
}

template <>
int parse_num<int>(const std::string& key, const std::string& raw) {
  return static_cast<int>(parse_num<long>(key, raw));
}

template <>
std::uint64_t parse_num<std::uint64_t>(const std::string& key, const std::string& raw) {
  const long v = parse_num<long>(key, raw);
  if (v < 0) throw std::invalid_argument("config: expected non-negative for '" + key + "'");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& raw) {
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw std::invalid_argument("config: expected true/false for '" + key + "': " + raw);
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> m;
    auto str = [&m](const std::string& key, std::string RunConfig::* f) {
      m[key] = {[f](RunConfig& c, const std::string& v) { c.*f = v; },
                [f](const RunConfig& c) { return c.*f; }};
    };
    auto num = [&m]<typename T>(const std::string& key, T RunConfig::* f) {
      m[key] = {[key, f](RunConfig& c, const std::string& v) { c.*f = parse_num<T>(key, v); },
                [f](const RunConfig& c) { return fmt_num(static_cast<double>(c.*f)); }};
    };
    auto flag = [&m](const std::string& key, bool RunConfig::* f) {
      m[key] = {[key, f](RunConfig& c, const std::string& v) { c.*f = parse_bool(key, v); },
                [f](const RunConfig& c) { return std::string(c.*f ? "true" : "false"); }};
    };
    str("env", &RunConfig::env);
    str("demos_path", &RunConfig::demos_path);
    str("out_dir", &RunConfig::out_dir);
    num("seed", &RunConfig::seed);
    num("gamma", &RunConfig::gamma);
    num("lambda", &RunConfig::lambda);
    num("horizon", &RunConfig::horizon);
    num("ensemble_size", &RunConfig::ensemble_size);
    num("latent_dim", &RunConfig::latent_dim);
    num("alpha", &RunConfig::alpha);
    num("beta", &RunConfig::beta);
    num("noise_variance", &RunConfig::noise_variance);
    num("tau", &RunConfig::tau);
    num("disc_eps", &RunConfig::disc_eps);
    num("model_lr", &RunConfig::model_lr);
    num("actor_lr", &RunConfig::actor_lr);
    num("critic_lr", &RunConfig::critic_lr);
    num("disc_lr", &RunConfig::disc_lr);
    num("free_nats", &RunConfig::free_nats);
    num("seq_len", &RunConfig::seq_len);
    num("batch_size", &RunConfig::batch_size);
    num("imagine_batch", &RunConfig::imagine_batch);
    num("model_warmup_steps", &RunConfig::model_warmup_steps);
    num("bc_pretrain_steps", &RunConfig::bc_pretrain_steps);
    num("seed_episodes", &RunConfig::seed_episodes);
    num("env_steps_per_update", &RunConfig::env_steps_per_update);
    num("total_env_steps", &RunConfig::total_env_steps);
    num("eval_interval", &RunConfig::eval_interval);
    num("eval_episodes", &RunConfig::eval_episodes);
    num("replay_capacity", &RunConfig::replay_capacity);
    flag("bc_only", &RunConfig::bc_only);
    return m;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(gamma >= 0.0 && gamma < 1.0, "gamma must be in [0, 1)");
  require(lambda >= 0.0 && lambda < 1.0, "lambda must be in [0, 1)");
  require(horizon >= 1, "horizon must be >= 1");
  require(ensemble_size >= 2, "ensemble_size must be >= 2");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(alpha >= 0.0, "alpha must be >= 0");
  require(beta >= 0.0, "beta must be >= 0");
  require(noise_variance >= 0.0, "noise_variance must be >= 0");
  require(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
  require(disc_eps > 0.0 && disc_eps < 0.5, "disc_eps must be in (0, 0.5)");
  require(model_lr > 0.0, "model_lr must be > 0");
  require(actor_lr > 0.0, "actor_lr must be > 0");
  require(critic_lr > 0.0, "critic_lr must be > 0");
  require(disc_lr > 0.0, "disc_lr must be > 0");
  require(free_nats >= 0.0, "free_nats must be >= 0");
  require(seq_len >= 2, "seq_len must be >= 2");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(imagine_batch >= 0, "imagine_batch must be >= 0");
  require(model_warmup_steps >= 0, "model_warmup_steps must be >= 0");
  require(bc_pretrain_steps >= 0, "bc_pretrain_steps must be >= 0");
  require(seed_episodes >= 0, "seed_episodes must be >= 0");
  require(env_steps_per_update >= 1, "env_steps_per_update must be >= 1");
  require(total_env_steps >= 0, "total_env_steps must be >= 0");
  require(eval_interval >= 1, "eval_interval must be >= 1");
  require(eval_episodes >= 1, "eval_episodes must be >= 1");
  require(replay_capacity >= seq_len, "replay_capacity must hold at least one sequence");
  require(!env.empty(), "env must be set");
}

void apply_override(RunConfig& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("config: expected key=value, got '" + kv + "'");
  const std::string key = trim(kv.substr(0, eq));
  const std::string value = trim(kv.substr(eq + 1));
  const auto it = fields().find(key);
  if (it == fields().end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  it->second.set(cfg, value);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& [key, field] : fields()) out << key << "=" << field.get(cfg) << "\n";
  return out.str();
}

}  // namespace cmil
