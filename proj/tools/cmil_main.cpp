// Command-line front end: demo collection, training, evaluation, exact
// bound verification, and metrics plotting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cmil/checkpoint.hpp"
#include "cmil/config.hpp"
#include "cmil/env.hpp"
#include "cmil/metrics.hpp"
#include "cmil/svg_plot.hpp"
#include "cmil/theory.hpp"
#include "cmil/trainer.hpp"
#include "cmil/trajectory.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_usage(std::ostream& out) {
  out << "usage: cmil <command> [args]\n"
         "  collect-demos <env> <n> <out> [--seed S]\n"
         "  train <config-path> [--override k=v]...\n"
         "  eval <ckpt> <env> [--episodes N] [--seed S] [--config path]\n"
         "  verify-bounds <prop1|thm1|thm2|gap-curves> [--seed S] [--n N] [--out csv]\n"
         "  plot <metrics.csv> <out.svg> [--normalize] [--columns a,b,...]\n";
}

struct Args {
  std::vector<std::string> positional;
  std::vector<std::pair<std::string, std::string>> options;  // --key value

  std::string opt(const std::string& key, const std::string& fallback) const {
    for (const auto& [k, v] : options)
      if (k == key) return v;
    return fallback;
  }
  bool has_flag(const std::string& key) const {
    for (const auto& [k, v] : options)
      if (k == key) return true;
    return false;
  }
};

long parse_long(const std::string& raw, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw UsageError("expected an integer for " + what + ", got '" + raw + "'");
  }
}

Args parse_args(int argc, char** argv, int first,
                const std::vector<std::string>& flag_names) {
  Args out;
  for (int i = first; i < argc; ++i) {
    const std::string a = argv[i];
    if (a.rfind("--", 0) == 0) {
      const std::string key = a.substr(2);
      bool is_flag = false;
      for (const std::string& f : flag_names) is_flag = is_flag || f == key;
      if (is_flag) {
        out.options.emplace_back(key, "");
      } else {
        if (i + 1 >= argc) throw UsageError("option --" + key + " needs a value");
        out.options.emplace_back(key, argv[++i]);
      }
    } else {
      out.positional.push_back(a);
    }
  }
  return out;
}

int cmd_collect_demos(const Args& args) {
  if (args.positional.size() != 3)
    throw UsageError("collect-demos needs <env> <n> <out>");
  const std::string env_id = args.positional[0];
  const long n = parse_long(args.positional[1], "demo count");
  if (n < 1) throw UsageError("demo count must be >= 1");
  const std::string out_path = args.positional[2];
  const std::uint64_t seed =
      static_cast<std::uint64_t>(parse_long(args.opt("seed", "0"), "--seed"));

  std::unique_ptr<cmil::Env> env = cmil::make_env(env_id, seed);
  std::unique_ptr<cmil::Expert> expert = cmil::make_expert(env_id, *env, seed + 1);
  const cmil::DemoSet demos = cmil::collect_demos(*env, *expert, static_cast<int>(n), env_id);
  cmil::write_demos(out_path, demos);
  double ret = 0.0;
  for (const cmil::Trajectory& t : demos.episodes) ret += t.oracle_return();
  std::cout << "wrote " << demos.count() << " demos to " << out_path
            << " (mean oracle return " << ret / demos.count() << ")\n";
  return 0;
}

int cmd_train(const Args& args) {
  if (args.positional.size() != 1) throw UsageError("train needs <config-path>");
  const std::string cfg_path = args.positional[0];
  if (!std::filesystem::exists(cfg_path))
    throw UsageError("config file not found: " + cfg_path);
  cmil::RunConfig cfg = cmil::load_config(cfg_path);
  for (const auto& [k, v] : args.options) {
    if (k != "override") throw UsageError("unknown option --" + k);
    try {
      cmil::apply_override(cfg, v);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  cfg.validate();
  const cmil::TrainResult res = cmil::run_training(cfg);
  std::cout << "env steps: " << res.env_steps << "\n"
            << "final success rate: " << res.final_success_rate << "\n"
            << "expert return: " << res.expert_return << "\n"
            << "checkpoint: " << res.checkpoint_path << "\n"
            << "metrics: " << res.metrics_path << "\n";
  return 0;
}

int cmd_eval(const Args& args) {
  if (args.positional.size() != 2) throw UsageError("eval needs <ckpt> <env>");
  const std::string ckpt = args.positional[0];
  const std::string env_id = args.positional[1];
  const long episodes = parse_long(args.opt("episodes", "20"), "--episodes");
  if (episodes < 1) throw UsageError("--episodes must be >= 1");
  const std::uint64_t seed =
      static_cast<std::uint64_t>(parse_long(args.opt("seed", "0"), "--seed"));

  // Network shapes come from the run config saved next to the checkpoint
  // unless one is given explicitly.
  cmil::RunConfig cfg;
  std::string cfg_path = args.opt("config", "");
  if (cfg_path.empty()) {
    const std::filesystem::path sibling =
        std::filesystem::path(ckpt).parent_path() / "config.cfg";
    if (std::filesystem::exists(sibling)) cfg_path = sibling.string();
  }
  if (!cfg_path.empty()) cfg = cmil::load_config(cfg_path);
  cfg.env = env_id;

  std::unique_ptr<cmil::Env> env = cmil::make_env(env_id, seed);
  cmil::Rng init(0);
  cmil::AgentBundle agent(cfg, env->obs_dim(), env->act_dim(), init);
  agent.load(ckpt);
  const cmil::EvalResult res =
      cmil::evaluate(agent.policy, agent.model, *env, static_cast<int>(episodes));
  std::cout << "episodes: " << episodes << "\n"
            << "success rate: " << res.success_rate << "\n"
            << "mean oracle return: " << res.mean_return << "\n";
  return 0;
}

void write_report_csv(const std::string& path, const cmil::BoundReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "name,lhs,rhs,slack,pass\n";
  char buf[64];
  for (const cmil::BoundCheck& c : report.checks) {
    double rhs = 0.0;
    for (double t : c.rhs_terms) rhs += t;
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g", c.lhs, rhs, c.slack);
    out << c.name << ',' << buf << ',' << (c.pass ? 1 : 0) << "\n";
  }
}

int cmd_verify_bounds(const Args& args) {
  if (args.positional.size() != 1)
    throw UsageError("verify-bounds needs a suite: prop1, thm1, thm2, or gap-curves");
  const std::string suite = args.positional[0];
  const std::uint64_t seed =
      static_cast<std::uint64_t>(parse_long(args.opt("seed", "1"), "--seed"));
  const std::string out_path = args.opt("out", "bounds_" + suite + ".csv");

  cmil::BoundReport report;
  if (suite == "prop1") {
    const long n = parse_long(args.opt("n", "1000"), "--n");
    report = cmil::prop1_suite(seed, static_cast<int>(n));
    write_report_csv(out_path, report);
  } else if (suite == "thm1") {
    const long n = parse_long(args.opt("n", "1000"), "--n");
    report = cmil::thm1_suite(seed, static_cast<int>(n));
    write_report_csv(out_path, report);
  } else if (suite == "thm2") {
    const long n = parse_long(args.opt("n", "500"), "--n");
    report = cmil::thm2_suite(seed, static_cast<int>(n));
    write_report_csv(out_path, report);
  } else if (suite == "gap-curves") {
    const long n = parse_long(args.opt("n", "20"), "--n");
    const cmil::GapSuiteResult res = cmil::tabular_gap_suite(seed, static_cast<int>(n));
    report = res.report;
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    out << "instance,step,oracle_gap,distribution_match,model_mismatch,pass\n";
    char buf[80];
    for (const cmil::GapCurvePoint& p : res.points) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g", p.oracle_gap, p.distribution_match,
                    p.model_mismatch);
      out << p.instance << ',' << p.step << ',' << buf << ',' << (p.pass ? 1 : 0) << "\n";
    }
  } else {
    throw UsageError("unknown suite '" + suite + "'");
  }

  double worst = 0.0;
  bool have = false;
  for (const cmil::BoundCheck& c : report.checks)
    if (!have || c.slack < worst) {
      worst = c.slack;
      have = true;
    }
  std::cout << "suite " << suite << ": " << report.passed << " passed, " << report.failed
            << " failed";
  if (have) std::cout << " (min slack " << worst << ")";
  std::cout << "\nreport: " << out_path << "\n";
  return report.all_pass() ? 0 : kExitRuntime;
}

int cmd_plot(const Args& args) {
  if (args.positional.size() != 2) throw UsageError("plot needs <metrics.csv> <out.svg>");
  const cmil::CsvTable table = cmil::read_csv(args.positional[0]);
  if (table.columns.size() < 2) throw std::runtime_error("plot: need at least two columns");
  if (table.rows.empty()) throw std::runtime_error("plot: no data rows");

  std::vector<std::string> wanted;
  const std::string cols = args.opt("columns", "");
  if (!cols.empty()) {
    std::stringstream ss(cols);
    std::string c;
    while (std::getline(ss, c, ',')) wanted.push_back(c);
  } else {
    for (std::size_t i = 1; i < table.columns.size(); ++i) wanted.push_back(table.columns[i]);
  }

  std::vector<cmil::PlotSeries> series;
  for (const std::string& name : wanted) {
    const int idx = table.column_index(name);
    if (idx < 0) throw std::runtime_error("plot: no column named '" + name + "'");
    if (idx == 0) continue;
    cmil::PlotSeries s;
    s.label = name;
    for (const std::vector<double>& row : table.rows) {
      s.x.push_back(row[0]);
      s.y.push_back(row[idx]);
    }
    series.push_back(std::move(s));
  }
  cmil::write_svg_lines(args.positional[1], args.positional[0], series,
                        args.has_flag("normalize"));
  std::cout << "wrote " << args.positional[1] << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    print_usage(std::cerr);
    return kExitUsage;
  }
  const std::string cmd = argv[1];
  try {
    const Args args = parse_args(argc, argv, 2, {"normalize"});
    if (cmd == "collect-demos") return cmd_collect_demos(args);
    if (cmd == "train") return cmd_train(args);
    if (cmd == "eval") return cmd_eval(args);
    if (cmd == "verify-bounds") return cmd_verify_bounds(args);
    if (cmd == "plot") return cmd_plot(args);
    if (cmd == "help" || cmd == "--help" || cmd == "-h") {
      print_usage(std::cout);
      return 0;
    }
    std::cerr << "unknown command '" << cmd << "'\n";
    print_usage(std::cerr);
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    print_usage(std::cerr);
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
