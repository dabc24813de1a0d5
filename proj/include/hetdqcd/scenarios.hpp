#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hetdqcd/config.hpp"
#include "hetdqcd/report.hpp"
#include "hetdqcd/tradeoff.hpp"

namespace hetdqcd {

inline constexpr std::string_view kFigureTags[] = {"fig2", "fig3", "fig4", "fig5"};

namespace detail {

inline RuleConfig rule_config(std::string label, RuleVariant v, double m = 0.0) {
  RuleConfig r;
  r.label = std::move(label);
  r.variant = v;
  r.m = m;
  return r;
}

inline GroupConfig standard_pre(int count, double post_mean, double post_var) {
  return {count, {0.0, 1.0}, {post_mean, post_var}};
}

}  // namespace detail

/// Built-in scenarios; the JSON files under configs/ carry the same content.
inline std::optional<ScenarioConfig> canned_config(std::string_view tag) {
  using detail::rule_config;
  using detail::standard_pre;
  ScenarioConfig c;
  c.name = std::string(tag);
  if (tag == "fig2") {
    c.seed = 2;
    for (int l = 1; l <= 3; ++l) c.groups.push_back(standard_pre(3, 2.0 * l / 3.0, l));
    for (int m : {1, 4, 7, 9}) c.rules.push_back(rule_config("alarm M=" + std::to_string(m), RuleVariant::MthAlarm, m));
    c.gamma_grid = log_grid(1e2, 1e4, 7);
  } else if (tag == "fig3") {
    c.seed = 3;
    for (int l = 1; l <= 3; ++l) c.groups.push_back(standard_pre(3, l / 3.0, 1.0));
    for (int m = 1; m <= 9; ++m) c.rules.push_back(rule_config("vote M=" + std::to_string(m), RuleVariant::MVoting, m));
    c.rules.push_back(rule_config("centralized", RuleVariant::CentralizedCusum));
    c.gamma_grid = log_grid(1e2, 1e4, 7);
  } else if (tag == "fig4") {
    c.seed = 4;
    c.groups = {standard_pre(8, 0.35, 1.0), standard_pre(1, 2.0, 4.0)};
    c.rules.push_back(rule_config("alarm M=1", RuleVariant::MthAlarm, 1));
    c.rules.push_back(rule_config("alarm M=9", RuleVariant::MthAlarm, 9));
    c.rules.push_back(rule_config("vote M=9", RuleVariant::MVoting, 9));
    c.rules.push_back(rule_config("mixture (interpreted)", RuleVariant::MixtureCusum));
    auto sel = rule_config("first alarm in G2", RuleVariant::MthAlarmWithin, 1);
    sel.selection_groups = {2};
    c.rules.push_back(sel);
    c.gamma_grid = log_grid(1e2, 3e4, 6);
  } else if (tag == "fig5") {
    c.seed = 5;
    c.groups = {standard_pre(6, 0.55, 1.0), standard_pre(4, 1.0, 1.0)};
    c.rules.push_back(rule_config("equal weight", RuleVariant::MVoting, 10));
    auto binary = rule_config("binary weight", RuleVariant::MVotingWithin, 4);
    binary.selection_groups = {2};
    c.rules.push_back(binary);
    auto kld = rule_config("KLD weight", RuleVariant::WeightedVoting, 4);
    kld.weight_source = WeightSource::Kld;
    c.rules.push_back(kld);
    c.gamma_grid = log_grid(1e2, 3e4, 6);
  } else {
    return std::nullopt;
  }
  return c;
}

struct Verdict {
  std::string check;
  bool pass = false;
  std::string detail;
  bool advisory = false;  // reported, not required
};

namespace detail {

/// Points of one curve keyed by gamma target.
class CurveIndex {
 public:
  explicit CurveIndex(std::span<const TradeoffPoint> points) {
    for (const auto& p : points) {
      by_rule_[p.rule][p.gamma_target] = &p;
      gammas_.push_back(p.gamma_target);
    }
    std::sort(gammas_.begin(), gammas_.end());
    gammas_.erase(std::unique(gammas_.begin(), gammas_.end()), gammas_.end());
  }
  const TradeoffPoint* at(const std::string& rule, double gamma) const {
    const auto r = by_rule_.find(rule);
    if (r == by_rule_.end()) return nullptr;
    const auto g = r->second.find(gamma);
    return g == r->second.end() ? nullptr : g->second;
  }
  const std::vector<double>& gammas() const noexcept { return gammas_; }

 private:
  std::map<std::string, std::map<double, const TradeoffPoint*>> by_rule_;
  std::vector<double> gammas_;
};

inline std::string describe(const TradeoffPoint& p) {
  return p.rule + " " + format_number(p.edd.mean, 5) + "+-" + format_number(p.edd.ci_halfwidth, 3);
}

}  // namespace detail

/// a's EDD is below b's with the two 95% intervals disjoint. A floored b
/// still counts: its EDD at h = 0 bounds every admissible b from below.
inline bool below_beyond_ci(const TradeoffPoint& a, const TradeoffPoint& b) {
  const bool b_ok = b.valid() || (b.at_floor && b.edd.valid());
  return a.valid() && b_ok && a.edd.mean + a.edd.ci_halfwidth < b.edd.mean - b.edd.ci_halfwidth;
}

/// Checks a chain a < b < c ... at one gamma; missing points fail.
inline Verdict chain_verdict(const detail::CurveIndex& idx, const std::vector<std::string>& chain, double gamma) {
  Verdict v;
  v.check = "";
  for (std::size_t i = 0; i < chain.size(); ++i) v.check += (i ? " < " : "") + chain[i];
  v.check += " at gamma=" + format_number(gamma, 6);
  v.pass = true;
  std::string d;
  const TradeoffPoint* prev = nullptr;
  for (const auto& name : chain) {
    const auto* p = idx.at(name, gamma);
    if (!p) {
      v.pass = false;
      d += "[" + name + " missing] ";
      continue;
    }
    d += detail::describe(*p) + (p->valid() ? "" : p->at_floor ? " (at h=0 floor)" : " (invalid)") + "; ";
    if (prev && !below_beyond_ci(*prev, *p)) v.pass = false;
    prev = p;
  }
  v.detail = d;
  return v;
}

/// Qualitative orderings expected of each canned figure.
inline std::vector<Verdict> figure_verdicts(std::string_view tag, std::span<const TradeoffPoint> points) {
  const detail::CurveIndex idx(points);
  std::vector<Verdict> out;
  const auto& g = idx.gammas();
  if (g.empty()) return out;
  if (tag == "fig2") {
    for (std::size_t i = g.size() >= 2 ? g.size() - 2 : 0; i < g.size(); ++i) {
      out.push_back(chain_verdict(idx, {"alarm M=7", "alarm M=4", "alarm M=1"}, g[i]));
      out.push_back(chain_verdict(idx, {"alarm M=7", "alarm M=9"}, g[i]));
    }
  } else if (tag == "fig3") {
    {
      Verdict v{"vote M=9 has the lowest EDD at gamma=" + format_number(g.back(), 6), true, ""};
      const auto* best = idx.at("vote M=9", g.back());
      if (!best || !best->valid()) v.pass = false;
      for (int m = 1; m <= 8 && best; ++m) {
        const auto* p = idx.at("vote M=" + std::to_string(m), g.back());
        if (!p || !p->valid() || !(best->edd.mean < p->edd.mean)) {
          v.pass = false;
          if (p) v.detail += detail::describe(*p) + " not above; ";
        }
      }
      if (best) v.detail = detail::describe(*best) + "; " + v.detail;
      out.push_back(v);
    }
    {
      Verdict v{"some M<9 beats vote M=9 at gamma=" + format_number(g.front(), 6), false, ""};
      const auto* nine = idx.at("vote M=9", g.front());
      for (int m = 1; m <= 8 && nine; ++m) {
        const auto* p = idx.at("vote M=" + std::to_string(m), g.front());
        if (p && below_beyond_ci(*p, *nine)) {
          v.pass = true;
          v.detail += detail::describe(*p) + " < " + detail::describe(*nine) + "; ";
        }
      }
      out.push_back(v);
    }
    for (double gamma : g) {
      // Lower bound: N-voting may not sit significantly below the centralized CUSUM.
      Verdict v{"vote M=9 >= centralized at gamma=" + format_number(gamma, 6), false, ""};
      const auto* n = idx.at("vote M=9", gamma);
      const auto* c = idx.at("centralized", gamma);
      if (n && c) {
        // A floored N-voting EDD is a lower bound, so it may stand in.
        const bool n_ok = n->valid() || (n->at_floor && n->edd.valid());
        v.pass = n_ok && c->valid() && !(n->edd.mean + n->edd.ci_halfwidth < c->edd.mean - c->edd.ci_halfwidth);
        v.detail = detail::describe(*n) + (n->at_floor ? " (at h=0 floor)" : "") + "; " + detail::describe(*c);
      }
      out.push_back(v);
    }
  } else if (tag == "fig4") {
    for (double gamma : g)
      for (const char* other : {"alarm M=1", "alarm M=9", "vote M=9"})
        out.push_back(chain_verdict(idx, {"first alarm in G2", other}, gamma));
    for (double gamma : g) {
      auto v = chain_verdict(idx, {"first alarm in G2", "mixture (interpreted)"}, gamma);
      v.advisory = true;
      out.push_back(v);
    }
  } else if (tag == "fig5") {
    for (double gamma : g) out.push_back(chain_verdict(idx, {"KLD weight", "binary weight", "equal weight"}, gamma));
  }
  return out;
}

inline std::string format_verdicts(std::span<const Verdict> verdicts) {
  std::ostringstream os;
  for (const auto& v : verdicts) os << (v.pass ? "PASS " : "FAIL ") << (v.advisory ? "[advisory] " : "") << v.check << " :: " << v.detail << '\n';
  return os.str();
}

}  // namespace hetdqcd
