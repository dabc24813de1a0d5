#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hetdqcd/calibration.hpp"
#include "hetdqcd/fusion_spec.hpp"
#include "hetdqcd/models.hpp"
#include "hetdqcd/tradeoff.hpp"

namespace hetdqcd {

struct GaussianConfig {
  double mean = 0.0;
  double var = 1.0;
  bool operator==(const GaussianConfig&) const = default;
};

struct GroupConfig {
  int count = 1;
  GaussianConfig pre;
  GaussianConfig post;
  bool operator==(const GroupConfig&) const = default;
};

enum class WeightSource { None, Kld, PerGroup, PerSensor };

struct RuleConfig {
  std::string label;  // empty: derived from the rule
  RuleVariant variant = RuleVariant::MthAlarm;
  double m = 0.0;
  std::vector<int> selection_groups;
  std::vector<SensorId> selection_sensors;
  WeightSource weight_source = WeightSource::None;
  std::vector<double> group_weights;
  std::map<SensorId, double> sensor_weights;
  bool operator==(const RuleConfig&) const = default;
};

struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 1;
  std::vector<GroupConfig> groups;
  std::vector<RuleConfig> rules;
  std::optional<std::vector<double>> scaling;  // nullopt: c_l = I_l
  std::vector<double> gamma_grid;
  std::int64_t arl_trials = 20000;
  std::int64_t edd_trials = 20000;
  std::int64_t run_cap = 10'000'000;
  double tolerance = 0.05;
  ArlMethod arl_method = ArlMethod::Joint;
  std::int64_t xi_samples = 1'000'000;
  bool operator==(const ScenarioConfig&) const = default;

  Network network() const {
    std::vector<SensorGroup> gs;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const auto& g = groups[i];
      gs.emplace_back(static_cast<int>(i) + 1, g.count, Gaussian(g.pre.mean, g.pre.var),
                      Gaussian(g.post.mean, g.post.var));
    }
    return Network(std::move(gs));
  }

  std::vector<double> scale(const Network& net) const { return scaling ? *scaling : net.klds(); }

  FusionRuleSpec build_rule(const Network& net, std::size_t index) const {
    const auto& r = rules.at(index);
    std::vector<SensorId> sel = r.selection_sensors;
    for (int l : r.selection_groups)
      for (int k = 1; k <= net.group(l).count(); ++k) sel.push_back({k, l});
    const int m = static_cast<int>(r.m);
    switch (r.variant) {
      case RuleVariant::MthAlarm: return FusionRuleSpec::mth_alarm(m);
      case RuleVariant::MVoting: return FusionRuleSpec::m_voting(m);
      case RuleVariant::MthAlarmWithin: return FusionRuleSpec::mth_alarm_within(m, sel);
      case RuleVariant::MVotingWithin: return FusionRuleSpec::m_voting_within(m, sel);
      case RuleVariant::CentralizedCusum: return FusionRuleSpec::centralized_cusum();
      case RuleVariant::MixtureCusum: return FusionRuleSpec::mixture_cusum();
      case RuleVariant::WeightedVoting: {
        std::map<SensorId, double> w;
        if (r.weight_source == WeightSource::Kld) {
          w = kld_weights(net);
        } else if (r.weight_source == WeightSource::PerGroup) {
          for (int l = 1; l <= net.group_count(); ++l)
            for (int k = 1; k <= net.group(l).count(); ++k)
              w[{k, l}] = r.group_weights.at(static_cast<std::size_t>(l - 1));
        } else {
          w = r.sensor_weights;
        }
        return FusionRuleSpec::weighted_voting(r.m, std::move(w));
      }
    }
    throw std::logic_error("unknown rule variant");
  }

  std::vector<NamedRule> named_rules(const Network& net) const {
    std::vector<NamedRule> out;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      auto spec = build_rule(net, i);
      out.push_back({rules[i].label.empty() ? spec.label() : rules[i].label, std::move(spec)});
    }
    return out;
  }

  SweepConfig sweep_config(const Network& net, unsigned threads = 0) const {
    SweepConfig s;
    s.scale = scale(net);
    s.tolerance = tolerance;
    s.arl_trials = arl_trials;
    s.edd_trials = edd_trials;
    s.run_cap = run_cap;
    s.seed = seed;
    s.threads = threads;
    s.arl_method = arl_method;
    return s;
  }
};

/// Invalid configuration, located by line and member path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, std::string path, const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + (path.empty() ? "" : path + ": ") + message),
        line_(line), path_(std::move(path)) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::size_t line_;
  std::string path_;
};

namespace detail {

/// Forward iterator over the text that tracks the 1-based line of the
/// last character handed to the JSON lexer.
class LineCountingIterator {
 public:
  using iterator_category = std::forward_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  struct State {
    std::size_t line = 1;
    char last = '\0';
  };

  LineCountingIterator() = default;
  LineCountingIterator(const char* p, State* s) : p_(p), s_(s) {}
  reference operator*() const { return *p_; }
  LineCountingIterator& operator++() {
    s_->last = *p_;
    if (*p_ == '\n') ++s_->line;
    ++p_;
    return *this;
  }
  LineCountingIterator operator++(int) {
    auto t = *this;
    ++*this;
    return t;
  }
  bool operator==(const LineCountingIterator& o) const { return p_ == o.p_; }

 private:
  const char* p_ = nullptr;
  State* s_ = nullptr;
};

/// SAX pass recording the source line of every member and element, keyed
/// by display path ("groups[1].pre.var").
class LineMapper {
 public:
  using number_integer_t = nlohmann::json::number_integer_t;
  using number_unsigned_t = nlohmann::json::number_unsigned_t;
  using number_float_t = nlohmann::json::number_float_t;
  using string_t = nlohmann::json::string_t;
  using binary_t = nlohmann::json::binary_t;

  explicit LineMapper(LineCountingIterator::State* s) : s_(s) {}

  std::map<std::string, std::size_t> lines;

  bool null() { return scalar(false); }
  bool boolean(bool) { return scalar(false); }
  bool number_integer(number_integer_t) { return scalar(true); }
  bool number_unsigned(number_unsigned_t) { return scalar(true); }
  bool number_float(number_float_t, const string_t&) { return scalar(true); }
  bool string(string_t&) { return scalar(false); }
  bool binary(binary_t&) { return scalar(false); }
  bool start_object(std::size_t) {
    open(false);
    return true;
  }
  bool end_object() { return close(); }
  bool start_array(std::size_t) {
    open(true);
    return true;
  }
  bool end_array() { return close(); }
  bool key(string_t& k) {
    stack_.back().key = k;
    lines.emplace(path(), s_->line);
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) { return false; }

 private:
  struct Frame {
    bool array;
    std::size_t index = 0;
    std::string key;
  };

  std::string path() const {
    std::string p;
    for (const auto& f : stack_) {
      if (f.array) {
        p += "[" + std::to_string(f.index) + "]";
      } else {
        if (!p.empty()) p += ".";
        p += f.key;
      }
    }
    return p;
  }
  void value_at(std::size_t line) {
    if (!stack_.empty() && stack_.back().array) lines.emplace(path(), line);
  }
  void advance() {
    if (!stack_.empty() && stack_.back().array) ++stack_.back().index;
  }
  bool scalar(bool lookahead) {
    // Numbers are terminated by one character of lookahead.
    std::size_t line = s_->line;
    if (lookahead && s_->last == '\n') --line;
    value_at(line);
    advance();
    return true;
  }
  void open(bool array) {
    value_at(s_->line);
    stack_.push_back(Frame{array, 0, {}});
  }
  bool close() {
    stack_.pop_back();
    advance();
    return true;
  }

  LineCountingIterator::State* s_;
  std::vector<Frame> stack_;
};

class ConfigReader {
 public:
  ConfigReader(std::string source, std::map<std::string, std::size_t> lines)
      : source_(std::move(source)), lines_(std::move(lines)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& message) const {
    throw ConfigError(source_, line_of(path), path, message);
  }

  std::size_t line_of(std::string path) const {
    while (true) {
      const auto it = lines_.find(path);
      if (it != lines_.end()) return it->second;
      const auto cut = path.find_last_of(".[");
      if (cut == std::string::npos) return 1;
      path.resize(cut);
    }
  }

  static std::string join(const std::string& base, const std::string& key) {
    return base.empty() ? key : base + "." + key;
  }
  static std::string at(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

  void object(const nlohmann::json& j, const std::string& path, std::initializer_list<std::string_view> allowed) const {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [k, v] : j.items()) {
      bool ok = false;
      for (auto a : allowed) ok = ok || a == k;
      if (!ok) fail(join(path, k), "unknown key \"" + k + "\"");
    }
  }

  const nlohmann::json& required(const nlohmann::json& j, const std::string& path, const std::string& key) const {
    const auto it = j.find(key);
    if (it == j.end()) fail(path, "missing required key \"" + key + "\"");
    return *it;
  }

  double number(const nlohmann::json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "expected a finite number");
    return v;
  }

  std::int64_t integer(const nlohmann::json& j, const std::string& path, std::int64_t lo, std::int64_t hi) const {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    if (j.is_number_unsigned() && j.get<std::uint64_t>() > static_cast<std::uint64_t>(hi))
      fail(path, "must be <= " + std::to_string(hi));
    const auto v = j.get<std::int64_t>();
    if (v < lo || v > hi) fail(path, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
  }

  std::string string(const nlohmann::json& j, const std::string& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }

  const nlohmann::json& array(const nlohmann::json& j, const std::string& path) const {
    if (!j.is_array()) fail(path, "expected an array");
    return j;
  }

 private:
  std::string source_;
  std::map<std::string, std::size_t> lines_;
};

inline GaussianConfig read_gaussian(const ConfigReader& r, const nlohmann::json& j, const std::string& path,
                                    int group) {
  r.object(j, path, {"mean", "var"});
  GaussianConfig g;
  g.mean = r.number(r.required(j, path, "mean"), ConfigReader::join(path, "mean"));
  const auto vpath = ConfigReader::join(path, "var");
  g.var = r.number(r.required(j, path, "var"), vpath);
  if (!(g.var > 0.0)) r.fail(vpath, "variance must be > 0 (group " + std::to_string(group) + ")");
  return g;
}

inline std::vector<int> read_group_list(const ConfigReader& r, const nlohmann::json& j, const std::string& path,
                                        int group_count) {
  std::vector<int> out;
  r.array(j, path);
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(static_cast<int>(r.integer(j[i], ConfigReader::at(path, i), 1, group_count)));
  return out;
}

inline SensorId read_sensor(const ConfigReader& r, const nlohmann::json& j, const std::string& path,
                            const std::vector<GroupConfig>& groups) {
  r.object(j, path, {"k", "l"});
  const int l = static_cast<int>(
      r.integer(r.required(j, path, "l"), ConfigReader::join(path, "l"), 1, static_cast<std::int64_t>(groups.size())));
  const int k = static_cast<int>(r.integer(r.required(j, path, "k"), ConfigReader::join(path, "k"), 1,
                                           groups[static_cast<std::size_t>(l - 1)].count));
  return {k, l};
}

inline RuleConfig read_rule(const ConfigReader& r, const nlohmann::json& j, const std::string& path,
                            const std::vector<GroupConfig>& groups) {
  r.object(j, path, {"variant", "M", "label", "selection", "weights"});
  RuleConfig rc;
  const auto vpath = ConfigReader::join(path, "variant");
  const auto name = r.string(r.required(j, path, "variant"), vpath);
  const auto variant = parse_variant(name);
  if (!variant) r.fail(vpath, "unknown rule variant \"" + name + "\"");
  rc.variant = *variant;
  if (j.contains("label")) rc.label = r.string(j["label"], ConfigReader::join(path, "label"));

  const bool aggregate = rc.variant == RuleVariant::CentralizedCusum || rc.variant == RuleVariant::MixtureCusum;
  const bool within = rc.variant == RuleVariant::MthAlarmWithin || rc.variant == RuleVariant::MVotingWithin;
  const bool weighted = rc.variant == RuleVariant::WeightedVoting;
  const auto mpath = ConfigReader::join(path, "M");
  if (aggregate) {
    if (j.contains("M")) r.fail(mpath, "aggregate rules take no M");
  } else if (weighted) {
    rc.m = r.number(r.required(j, path, "M"), mpath);
  } else {
    rc.m = static_cast<double>(r.integer(r.required(j, path, "M"), mpath, 1, std::numeric_limits<int>::max()));
  }

  const auto spath = ConfigReader::join(path, "selection");
  if (within) {
    const auto& s = r.required(j, path, "selection");
    r.object(s, spath, {"groups", "sensors"});
    if (s.contains("groups"))
      rc.selection_groups = read_group_list(r, s["groups"], ConfigReader::join(spath, "groups"),
                                            static_cast<int>(groups.size()));
    if (s.contains("sensors")) {
      const auto p = ConfigReader::join(spath, "sensors");
      r.array(s["sensors"], p);
      for (std::size_t i = 0; i < s["sensors"].size(); ++i)
        rc.selection_sensors.push_back(read_sensor(r, s["sensors"][i], ConfigReader::at(p, i), groups));
    }
  } else if (j.contains("selection")) {
    r.fail(spath, "selection applies only to *_within rules");
  }

  const auto wpath = ConfigReader::join(path, "weights");
  if (weighted) {
    const auto& w = r.required(j, path, "weights");
    if (w.is_string()) {
      if (w.get<std::string>() != "kld") r.fail(wpath, "expected \"kld\", a per-group array or {\"sensors\": [...]}");
      rc.weight_source = WeightSource::Kld;
    } else if (w.is_array()) {
      if (w.size() != groups.size()) r.fail(wpath, "need one weight per group");
      rc.weight_source = WeightSource::PerGroup;
      for (std::size_t i = 0; i < w.size(); ++i) rc.group_weights.push_back(r.number(w[i], ConfigReader::at(wpath, i)));
    } else {
      r.object(w, wpath, {"sensors"});
      rc.weight_source = WeightSource::PerSensor;
      const auto p = ConfigReader::join(wpath, "sensors");
      const auto& list = r.array(r.required(w, wpath, "sensors"), p);
      for (std::size_t i = 0; i < list.size(); ++i) {
        const auto ep = ConfigReader::at(p, i);
        r.object(list[i], ep, {"k", "l", "alpha"});
        nlohmann::json id = {{"k", r.required(list[i], ep, "k")}, {"l", r.required(list[i], ep, "l")}};
        const auto sid = read_sensor(r, id, ep, groups);
        rc.sensor_weights[sid] = r.number(r.required(list[i], ep, "alpha"), ConfigReader::join(ep, "alpha"));
      }
    }
  } else if (j.contains("weights")) {
    r.fail(wpath, "weights apply only to weighted_voting");
  }
  return rc;
}

}  // namespace detail

/// Parses and validates a scenario. Unknown keys are errors; every error
/// names the source line and member path.
inline ScenarioConfig parse_config(std::string_view text, const std::string& source = "<config>") {
  using detail::ConfigReader;
  detail::LineCountingIterator::State state;
  detail::LineMapper mapper(&state);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i + 1 < upto; ++i)
      if (text[i] == '\n') ++line;
    std::string msg = e.what();
    const auto pos = msg.find("syntax error");
    throw ConfigError(source, line, "", pos == std::string::npos ? msg : msg.substr(pos));
  }
  nlohmann::json::sax_parse(detail::LineCountingIterator(text.data(), &state),
                            detail::LineCountingIterator(text.data() + text.size(), &state), &mapper);
  const ConfigReader r(source, std::move(mapper.lines));

  r.object(j, "", {"name", "seed", "groups", "rules", "scaling", "gamma_grid", "trials", "run_cap", "tolerance",
                   "arl_method", "xi_samples"});
  ScenarioConfig c;
  if (j.contains("name")) c.name = r.string(j["name"], "name");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) r.fail("seed", "expected a non-negative 64-bit integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }

  const auto& groups = r.array(r.required(j, "", "groups"), "groups");
  if (groups.empty()) r.fail("groups", "need at least one group");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto p = ConfigReader::at("groups", i);
    const int gi = static_cast<int>(i) + 1;
    r.object(groups[i], p, {"count", "pre", "post"});
    GroupConfig g;
    g.count = static_cast<int>(r.integer(r.required(groups[i], p, "count"), p + ".count", 1, 1'000'000));
    g.pre = detail::read_gaussian(r, r.required(groups[i], p, "pre"), p + ".pre", gi);
    g.post = detail::read_gaussian(r, r.required(groups[i], p, "post"), p + ".post", gi);
    if (g.pre == g.post) r.fail(p, "pre- and post-change distributions coincide (group " + std::to_string(gi) + ")");
    c.groups.push_back(g);
  }

  const auto& rules = r.array(r.required(j, "", "rules"), "rules");
  for (std::size_t i = 0; i < rules.size(); ++i)
    c.rules.push_back(detail::read_rule(r, rules[i], ConfigReader::at("rules", i), c.groups));

  if (j.contains("scaling")) {
    const auto& s = j["scaling"];
    if (s.is_string()) {
      if (s.get<std::string>() != "kld") r.fail("scaling", "expected \"kld\" or one positive number per group");
    } else {
      r.array(s, "scaling");
      if (s.size() != c.groups.size()) r.fail("scaling", "need one entry per group");
      std::vector<double> v;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto p = ConfigReader::at("scaling", i);
        v.push_back(r.number(s[i], p));
        if (!(v.back() > 0.0)) r.fail(p, "scaling entries must be > 0");
      }
      c.scaling = std::move(v);
    }
  }

  const auto& grid = r.required(j, "", "gamma_grid");
  if (grid.is_array()) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto p = ConfigReader::at("gamma_grid", i);
      c.gamma_grid.push_back(r.number(grid[i], p));
      if (!(c.gamma_grid.back() > 1.0)) r.fail(p, "gamma must be > 1");
    }
  } else {
    r.object(grid, "gamma_grid", {"from", "to", "points"});
    const double from = r.number(r.required(grid, "gamma_grid", "from"), "gamma_grid.from");
    const double to = r.number(r.required(grid, "gamma_grid", "to"), "gamma_grid.to");
    const auto n = r.integer(r.required(grid, "gamma_grid", "points"), "gamma_grid.points", 1, 1000);
    if (!(from > 1.0)) r.fail("gamma_grid.from", "gamma must be > 1");
    if (!(to >= from)) r.fail("gamma_grid.to", "must be >= from");
    c.gamma_grid = log_grid(from, to, static_cast<int>(n));
  }

  if (j.contains("trials")) {
    const auto& t = j["trials"];
    r.object(t, "trials", {"arl", "edd"});
    if (t.contains("arl")) c.arl_trials = r.integer(t["arl"], "trials.arl", 2, 1'000'000'000);
    if (t.contains("edd")) c.edd_trials = r.integer(t["edd"], "trials.edd", 2, 1'000'000'000);
  }
  if (j.contains("run_cap")) c.run_cap = r.integer(j["run_cap"], "run_cap", 1, std::numeric_limits<std::int64_t>::max());
  if (j.contains("tolerance")) {
    c.tolerance = r.number(j["tolerance"], "tolerance");
    if (!(c.tolerance > 0.0)) r.fail("tolerance", "must be > 0");
  }
  if (j.contains("arl_method")) {
    const auto m = r.string(j["arl_method"], "arl_method");
    if (m == "joint") c.arl_method = ArlMethod::Joint;
    else if (m == "composed") c.arl_method = ArlMethod::Composed;
    else r.fail("arl_method", "expected \"joint\" or \"composed\"");
  }
  if (j.contains("xi_samples")) c.xi_samples = r.integer(j["xi_samples"], "xi_samples", 2, 1'000'000'000);

  // Model and rule checks that need the assembled network.
  Network net = [&] {
    try {
      return c.network();
    } catch (const std::invalid_argument& e) {
      for (std::size_t i = 0; i < c.groups.size(); ++i) {
        const auto& g = c.groups[i];
        try {
          SensorGroup(static_cast<int>(i) + 1, g.count, Gaussian(g.pre.mean, g.pre.var),
                      Gaussian(g.post.mean, g.post.var));
        } catch (const std::invalid_argument& ge) {
          r.fail(ConfigReader::at("groups", i), std::string(ge.what()) + " (group " + std::to_string(i + 1) + ")");
        }
      }
      r.fail("groups", e.what());
    }
  }();
  for (std::size_t i = 0; i < c.rules.size(); ++i) {
    try {
      c.build_rule(net, i).validate(net);
    } catch (const std::exception& e) {
      r.fail(ConfigReader::at("rules", i), e.what());
    }
  }
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

}  // namespace hetdqcd
