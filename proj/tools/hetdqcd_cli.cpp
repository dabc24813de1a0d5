#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetdqcd/hetdqcd.hpp"

namespace fs = std::filesystem;
using namespace hetdqcd;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> trials;
  std::optional<std::int64_t> run_cap;
  unsigned threads = 0;
};

void apply(const Globals& g, ScenarioConfig& c) {
  if (g.seed) c.seed = *g.seed;
  if (g.trials) c.arl_trials = c.edd_trials = *g.trials;
  if (g.run_cap) c.run_cap = *g.run_cap;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::vector<TradeoffPoint> run_sweep(const ScenarioConfig& c, unsigned threads) {
  const auto net = c.network();
  const auto rules = c.named_rules(net);
  return tradeoff_sweep(net, std::span<const NamedRule>(rules), c.gamma_grid, c.sweep_config(net, threads),
                        [](const TradeoffPoint& p) {
                          std::cerr << "  " << p.rule << " gamma=" << format_number(p.gamma_target, 6)
                                    << " h*=" << format_number(p.h_star, 6) << " arl=" << format_number(p.arl.mean, 6)
                                    << " edd=" << format_number(p.edd.mean, 6) << (p.valid() ? "" : " INVALID")
                                    << (p.error.empty() ? "" : " (" + p.error + ")") << '\n';
                        });
}

void emit(const ScenarioConfig& c, const std::vector<TradeoffPoint>& points, const fs::path& out_dir,
          const std::string& stem) {
  fs::create_directories(out_dir);
  const auto csv = out_dir / (stem + ".csv");
  const auto svg = out_dir / (stem + ".svg");
  write_file(csv, to_csv(points));
  write_file(svg, render_svg(points, c.name.empty() ? stem : c.name));
  std::cout << "wrote " << csv.string() << "\nwrote " << svg.string() << '\n';
}

std::string stem_of(const ScenarioConfig& c, const std::string& path) {
  return c.name.empty() ? fs::path(path).stem().string() : c.name;
}

int cmd_sweep(const Globals& g, const std::string& path, const fs::path& out_dir) {
  auto c = load_config(path);
  apply(g, c);
  const auto points = run_sweep(c, g.threads);
  emit(c, points, out_dir, stem_of(c, path));
  return 0;
}

int cmd_reproduce(const Globals& g, const std::string& tag, const fs::path& out_dir) {
  auto c = canned_config(tag);
  if (!c) {
    std::cerr << "unknown figure \"" << tag << "\"; expected fig2, fig3, fig4 or fig5\n";
    return 2;
  }
  apply(g, *c);
  const auto points = run_sweep(*c, g.threads);
  emit(*c, points, out_dir, tag);
  const auto verdicts = figure_verdicts(tag, points);
  const auto text = format_verdicts(verdicts);
  write_file(out_dir / (tag + "_verdict.txt"), text);
  std::cout << text;
  return 0;
}

int cmd_advise(const std::string& path) {
  const auto c = load_config(path);
  const auto net = c.network();
  const auto scale = c.scale(net);
  std::cout << "groups:\n";
  for (const auto& gr : net.groups()) {
    const auto& cfg = c.groups[static_cast<std::size_t>(gr.index() - 1)];
    std::cout << "  G" << gr.index() << ": N=" << gr.count() << " pre N(" << format_number(cfg.pre.mean, 6) << ","
              << format_number(cfg.pre.var, 6) << ") post N(" << format_number(cfg.post.mean, 6) << ","
              << format_number(cfg.post.var, 6) << ") KLD=" << format_number(gr.kld(), 6)
              << " LLR variance=" << format_number(gr.llr_variance(), 6) << " c=" << format_number(scale[gr.index() - 1], 6)
              << '\n';
  }
  const auto lam = lambda_map(net, scale);
  std::cout << "lambda map (groups by ascending c):";
  int m0 = 1;
  for (int l = 1; l <= lam.groups(); ++l) {
    const int m1 = lam.cumulative()[static_cast<std::size_t>(l - 1)];
    std::cout << " m=" << m0 << ".." << m1 << "->G" << lam.group_sorted(l);
    m0 = m1 + 1;
  }
  std::cout << '\n';

  const auto xi = xi_table(net, c.xi_samples, c.seed);
  std::cout << "xi_M (" << c.xi_samples << " samples):\n";
  for (const auto& e : xi.entries)
    std::cout << "  M=" << e.m << " xi=" << format_number(e.xi, 5) << " se=" << format_number(e.std_error, 2) << '\n';

  if (net.sensor_count() == 1) {
    std::cout << "single sensor: first alarm; M=1\n";
    return 0;
  }
  const auto one = recommend_m(net, RuleFamily::OneShot);
  const auto vote = recommend_m(net, RuleFamily::Voting);
  std::cout << "M-th alarm candidates {";
  for (std::size_t i = 0; i < one.candidates.size(); ++i) std::cout << (i ? "," : "") << one.candidates[i];
  std::cout << "}; recommended " << one.pick << "; voting recommended " << vote.pick << '\n';
  if (one.pick == 1) std::cout << "first alarm; M=1\n";
  std::cout << "  " << one.rationale << "\n  " << vote.rationale << '\n';
  const int top = lam.count_sorted(lam.groups());
  if (group_selection_advantage(net))
    std::cout << "group selection advantageous: N_L=" << top << " < N/2\n";
  else
    std::cout << "group selection not advantageous: N_L=" << top << " >= N/2\n";
  return 0;
}

int cmd_calibrate(const Globals& g, const std::string& path, std::size_t rule_index, double gamma) {
  auto c = load_config(path);
  apply(g, c);
  if (rule_index >= c.rules.size()) {
    std::cerr << "rule index " << rule_index << " out of range (config has " << c.rules.size() << " rules)\n";
    return 2;
  }
  const auto net = c.network();
  const auto rules = c.named_rules(net);
  const auto scale = c.scale(net);
  CalibrationOptions o;
  o.tolerance = c.tolerance;
  o.trials = c.arl_trials;
  o.run_cap = c.run_cap;
  o.seed = c.seed;
  o.threads = g.threads;
  o.arl_method = c.arl_method;
  const auto& rule = rules[rule_index];
  const double guess = first_order_guess(net, rule.rule, scale, gamma);
  const auto r = calibrate(net, rule.rule, scale, gamma, o);
  const auto edd = estimate_edd(net, rule.rule, ThresholdVector{r.h_star, scale},
                                MonteCarloOptions{c.edd_trials, c.run_cap, c.seed, g.threads});
  std::cout << "rule: " << rule.name << '\n'
            << "first-order guess: " << format_number(guess, 6) << '\n'
            << "h_star: " << format_number(r.h_star, 8) << '\n'
            << "log ARL: " << format_number(r.achieved_log_arl, 6) << " (target " << format_number(r.target_log_gamma, 6)
            << ")\n"
            << "ARL: " << format_number(r.arl.mean, 6) << " +- " << format_number(r.arl.ci_halfwidth, 4) << '\n'
            << "EDD: " << format_number(edd.mean, 6) << " +- " << format_number(edd.ci_halfwidth, 4) << '\n'
            << "iterations: " << r.iterations << ", converged: " << (r.converged ? "yes" : "no") << " ("
            << r.diagnostics << ")\n";
  return r.converged ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous distributed quickest change detection: simulation and analysis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Override the scenario seed");
  app.add_option("--trials", g.trials, "Override ARL and EDD trial counts")->check(CLI::Range(2, 1'000'000'000));
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  app.add_option("--run-cap", g.run_cap, "Override the per-trial step cap")->check(CLI::PositiveNumber);

  std::string config;
  fs::path out_dir = ".";
  auto* sweep = app.add_subcommand("sweep", "Calibrated ARL/EDD sweep of a scenario config");
  sweep->add_option("config", config, "Scenario JSON")->required();
  sweep->add_option("--out", out_dir, "Output directory");

  std::string tag;
  auto* reproduce = app.add_subcommand("reproduce", "Run a built-in figure scenario and check its orderings");
  reproduce->add_option("figure", tag, "fig2, fig3, fig4 or fig5")->required();
  reproduce->add_option("--out", out_dir, "Output directory");

  auto* advise = app.add_subcommand("advise", "KLDs, lambda map, xi_M and recommended M");
  advise->add_option("config", config, "Scenario JSON")->required();

  std::size_t rule_index = 0;
  double gamma = 0.0;
  auto* calib = app.add_subcommand("calibrate", "Calibrate one rule of a config to a target ARL");
  calib->add_option("config", config, "Scenario JSON")->required();
  calib->add_option("--rule", rule_index, "Rule index (0-based)")->required();
  calib->add_option("--gamma", gamma, "Target ARL")->required()->check(CLI::Range(1.0 + 1e-12, 1e300));

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sweep) return cmd_sweep(g, config, out_dir);
    if (*reproduce) return cmd_reproduce(g, tag, out_dir);
    if (*advise) return cmd_advise(config);
    if (*calib) return cmd_calibrate(g, config, rule_index, gamma);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
