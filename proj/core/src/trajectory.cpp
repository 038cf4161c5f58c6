#include "cmil/trajectory.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cmil {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("demo file: truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void Trajectory::check_consistent() const {
  if (obs_dim <= 0 || act_dim <= 0)
    throw std::invalid_argument("Trajectory: dimensions must be positive");
  const int T = length();
  if (static_cast<int>(observations.size()) != (T + 1) * obs_dim)
    throw std::invalid_argument("Trajectory: observation/action lengths inconsistent");
  if (!oracle_rewards.empty() && static_cast<int>(oracle_rewards.size()) != T)
    throw std::invalid_argument("Trajectory: oracle reward length inconsistent");
}

void write_demos(const std::string& path, const DemoSet& demos) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("demo file: cannot open '" + path + "' for writing");
  os.write(kDemoMagic, 8);
  put_u32(os, kDemoVersion);
  put_u32(os, static_cast<std::uint32_t>(demos.obs_dim));
  put_u32(os, static_cast<std::uint32_t>(demos.act_dim));
  put_u32(os, static_cast<std::uint32_t>(demos.episodes.size()));
  for (const Trajectory& ep : demos.episodes) {
    ep.check_consistent();
    put_u32(os, static_cast<std::uint32_t>(ep.length()));
    os.write(reinterpret_cast<const char*>(ep.observations.data()),
             static_cast<std::streamsize>(ep.observations.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(ep.actions.data()),
             static_cast<std::streamsize>(ep.actions.size() * sizeof(float)));
    const unsigned char s = ep.success ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&s), 1);
  }
  if (!os) throw std::runtime_error("demo file: write failed for '" + path + "'");
}

DemoSet read_demos(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("demo file: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kDemoMagic, 8) != 0)
    throw std::runtime_error("demo file: bad magic in '" + path + "'");
  const std::uint32_t version = get_u32(is, "version");
  if (version != kDemoVersion)
    throw std::runtime_error("demo file: unsupported version " + std::to_string(version));
  DemoSet out;
  out.obs_dim = static_cast<int>(get_u32(is, "obs_dim"));
  out.act_dim = static_cast<int>(get_u32(is, "act_dim"));
  const std::uint32_t n = get_u32(is, "episode count");
  for (std::uint32_t e = 0; e < n; ++e) {
    const std::string where = "episode " + std::to_string(e);
    const std::uint32_t T = get_u32(is, "length of " + where);
    Trajectory ep;
    ep.obs_dim = out.obs_dim;
    ep.act_dim = out.act_dim;
    ep.observations.resize(static_cast<std::size_t>(T + 1) * out.obs_dim);
    ep.actions.resize(static_cast<std::size_t>(T) * out.act_dim);
    if (!is.read(reinterpret_cast<char*>(ep.observations.data()),
                 static_cast<std::streamsize>(ep.observations.size() * sizeof(float))))
      throw std::runtime_error("demo file: truncated observations in " + where);
    if (!is.read(reinterpret_cast<char*>(ep.actions.data()),
                 static_cast<std::streamsize>(ep.actions.size() * sizeof(float))))
      throw std::runtime_error("demo file: truncated actions in " + where);
    unsigned char s = 0;
    if (!is.read(reinterpret_cast<char*>(&s), 1))
      throw std::runtime_error("demo file: truncated success flag in " + where);
    ep.success = s != 0;
    out.episodes.push_back(std::move(ep));
  }
  return out;
}

Trajectory rollout_expert(Env& env, Expert& expert) {
  Trajectory ep;
  ep.obs_dim = env.obs_dim();
  ep.act_dim = env.act_dim();
  expert.reset();
  std::vector<double> obs = env.reset();
  for (double x : obs) ep.observations.push_back(static_cast<float>(x));
  bool done = false;
  while (!done) {
    const std::vector<double> action = expert.act(obs);
    StepResult r = env.step(action);
    for (double x : action) ep.actions.push_back(static_cast<float>(x));
    for (double x : r.obs) ep.observations.push_back(static_cast<float>(x));
    ep.oracle_rewards.push_back(r.oracle_reward);
    ep.success = r.success;
    obs = std::move(r.obs);
    done = r.done;
  }
  return ep;
}

DemoSet collect_demos(Env& env, Expert& expert, int n, const std::string& env_name) {
  if (n < 1) throw std::invalid_argument("collect_demos: n must be >= 1");
  DemoSet out;
  out.env_name = env_name;
  out.obs_dim = env.obs_dim();
  out.act_dim = env.act_dim();
  int attempts = 0, successes = 0;
  while (out.count() < n) {
    Trajectory ep = rollout_expert(env, expert);
    ++attempts;
    if (ep.success) {
      ++successes;
      out.episodes.push_back(std::move(ep));
    }
    if (attempts >= std::max(20, 4 * n) && successes * 2 < attempts)
      throw std::runtime_error("collect_demos: expert success rate " +
                               std::to_string(static_cast<double>(successes) / attempts) +
                               " after " + std::to_string(attempts) +
                               " episodes is below 50%; refusing to collect demos");
  }
  return out;
}

}  // namespace cmil
