#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mdpa/control.hpp"
#include "mdpa/core.hpp"
#include "mdpa/optimizer.hpp"
#include "mdpa/score_oracle.hpp"

namespace mdpa {

struct SegmentLayout {
  std::size_t segments = 4;  // K
  std::size_t frames = 16;   // S
  std::size_t channels = 4;  // C
  std::size_t root_channel = 0;

  void validate() const {
    if (segments < 2) throw Error(ErrorKind::InvalidConfig, "layout.K: K must be >= 2");
    if (frames == 0 || frames % 2 != 0) throw Error(ErrorKind::InvalidConfig, "layout.S: S must be even and positive");
    if (channels == 0) throw Error(ErrorKind::InvalidConfig, "layout.C: C must be >= 1");
    if (root_channel >= channels) throw Error(ErrorKind::InvalidConfig, "layout.root_channel: must be < C");
  }
};

struct ScheduleParams {
  int total_steps = 1000;  // T
  int ddim_steps = 50;     // N
};

struct EvalParams {
  std::size_t n_clips = 200;
  std::size_t n_pairs = 2000;
};

struct Scenario {
  SegmentLayout layout;
  DomainSpec source;
  DomainSpec target;
  double prior_source = 0.5;  // p0
  ScheduleParams schedule;
  OptimizerConfig optimizer;
  ControlConfig control;
  EvalParams eval;
  std::uint64_t seed = 0;

  Scenario() { target.sinusoid.cycles = 3.0; }

  ModelSpec model_spec() const {
    ModelSpec spec;
    spec.frames = layout.frames;
    spec.channels = layout.channels;
    spec.root_channel = layout.root_channel;
    spec.source = source;
    spec.target = target;
    spec.prior_source = prior_source;
    return spec;
  }

  void validate() const {
    layout.validate();
    if (!(prior_source >= 0.0 && prior_source <= 1.0)) throw Error(ErrorKind::InvalidConfig, "domains.p0: must lie in [0, 1]");
    if (schedule.total_steps < 2) throw Error(ErrorKind::InvalidConfig, "schedule.T: T must be >= 2");
    if (schedule.ddim_steps < 1 || schedule.ddim_steps > schedule.total_steps) {
      throw Error(ErrorKind::InvalidConfig, "schedule.N: N must lie in [1, T]");
    }
    optimizer.validate();
    control.validate();
    if (eval.n_clips < 2) throw Error(ErrorKind::InvalidConfig, "eval.n_clips: must be >= 2");
    if (eval.n_pairs < 1) throw Error(ErrorKind::InvalidConfig, "eval.n_pairs: must be >= 1");
    make_condition_model(model_spec());
  }
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw Error(ErrorKind::InvalidConfig, where + ": expected an object");
  std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!keys.count(item.key())) {
      throw Error(ErrorKind::InvalidConfig, (where.empty() ? "" : where + ".") + item.key() + ": unknown key");
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, where + "." + key + ": " + e.what());
  }
}

inline void read_count(const json& obj, const char* key, const std::string& where, std::size_t& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw Error(ErrorKind::InvalidConfig, where + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

inline Sequence read_block(const json& v, std::size_t frames, std::size_t channels, const std::string& where) {
  if (v.is_number()) return Sequence(frames, channels, v.get<double>());
  if (!v.is_array() || v.size() != frames) {
    throw Error(ErrorKind::InvalidConfig, where + ": expected a number or an S x C array");
  }
  Sequence out(frames, channels);
  for (std::size_t s = 0; s < frames; ++s) {
    if (!v[s].is_array() || v[s].size() != channels) {
      throw Error(ErrorKind::InvalidConfig, where + ": row " + std::to_string(s) + " must have C entries");
    }
    for (std::size_t c = 0; c < channels; ++c) out(s, c) = v[s][c].get<double>();
  }
  return out;
}

inline json write_block(const Sequence& block) {
  json rows = json::array();
  for (std::size_t s = 0; s < block.frames(); ++s) {
    json row = json::array();
    for (std::size_t c = 0; c < block.channels(); ++c) row.push_back(block(s, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline DomainSpec read_domain(const json& obj, const std::string& where, DomainSpec base, const SegmentLayout& layout) {
  reject_unknown(obj, where, {"cycles", "amplitude", "variance", "drift", "phases", "components"});
  if (obj.contains("components")) {
    const json& list = obj.at("components");
    if (!list.is_array() || list.empty()) throw Error(ErrorKind::InvalidConfig, where + ".components: empty mixture");
    base.components.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string here = where + ".components[" + std::to_string(i) + "]";
      reject_unknown(list[i], here, {"weight", "mean", "variance"});
      GaussianComponent comp;
      read_field(list[i], "weight", here, comp.weight);
      comp.mean = list[i].contains("mean") ? read_block(list[i].at("mean"), layout.frames, layout.channels, here + ".mean")
                                           : Sequence(layout.frames, layout.channels, 0.0);
      comp.variance = list[i].contains("variance")
                          ? read_block(list[i].at("variance"), layout.frames, layout.channels, here + ".variance")
                          : Sequence(layout.frames, layout.channels, 1.0);
      base.components.push_back(std::move(comp));
    }
  }
  read_field(obj, "cycles", where, base.sinusoid.cycles);
  read_field(obj, "amplitude", where, base.sinusoid.amplitude);
  read_field(obj, "variance", where, base.sinusoid.variance);
  read_field(obj, "drift", where, base.sinusoid.drift);
  read_field(obj, "phases", where, base.sinusoid.phases);
  return base;
}

inline json write_domain(const DomainSpec& d) {
  json out;
  if (!d.components.empty()) {
    json list = json::array();
    for (const auto& c : d.components) {
      list.push_back({{"weight", c.weight}, {"mean", write_block(c.mean)}, {"variance", write_block(c.variance)}});
    }
    out["components"] = std::move(list);
    return out;
  }
  out["cycles"] = d.sinusoid.cycles;
  out["amplitude"] = d.sinusoid.amplitude;
  out["variance"] = d.sinusoid.variance;
  out["drift"] = d.sinusoid.drift;
  out["phases"] = d.sinusoid.phases;
  return out;
}

}  // namespace detail

inline LambdaMode parse_lambda_mode(const std::string& s) {
  if (s == "posterior") return LambdaMode::Posterior;
  if (s == "unit") return LambdaMode::Unit;
  throw Error(ErrorKind::InvalidConfig, "control.lambda_mode: expected 'posterior' or 'unit', got '" + s + "'");
}

/// Builds a validated Scenario from parsed JSON; omitted fields take defaults.
inline Scenario scenario_from_json(const nlohmann::json& root) {
  using detail::read_count;
  using detail::read_field;
  using detail::reject_unknown;
  Scenario sc;
  reject_unknown(root, "", {"layout", "domains", "schedule", "optimizer", "control", "eval", "seed"});

  if (root.contains("layout")) {
    const auto& o = root.at("layout");
    reject_unknown(o, "layout", {"K", "S", "C", "root_channel"});
    read_count(o, "K", "layout", sc.layout.segments);
    read_count(o, "S", "layout", sc.layout.frames);
    read_count(o, "C", "layout", sc.layout.channels);
    read_count(o, "root_channel", "layout", sc.layout.root_channel);
  }
  sc.layout.validate();

  if (root.contains("domains")) {
    const auto& o = root.at("domains");
    reject_unknown(o, "domains", {"c0", "c1", "p0"});
    if (o.contains("c0")) sc.source = detail::read_domain(o.at("c0"), "domains.c0", sc.source, sc.layout);
    if (o.contains("c1")) sc.target = detail::read_domain(o.at("c1"), "domains.c1", sc.target, sc.layout);
    read_field(o, "p0", "domains", sc.prior_source);
  }
  if (root.contains("schedule")) {
    const auto& o = root.at("schedule");
    reject_unknown(o, "schedule", {"T", "N"});
    read_field(o, "T", "schedule", sc.schedule.total_steps);
    read_field(o, "N", "schedule", sc.schedule.ddim_steps);
  }
  if (root.contains("optimizer")) {
    const auto& o = root.at("optimizer");
    reject_unknown(o, "optimizer", {"J", "lr", "warm_start"});
    read_field(o, "J", "optimizer", sc.optimizer.inner_steps);
    read_field(o, "lr", "optimizer", sc.optimizer.learning_rate);
    read_field(o, "warm_start", "optimizer", sc.optimizer.warm_start);
  }
  if (root.contains("control")) {
    const auto& o = root.at("control");
    reject_unknown(o, "control", {"w_T", "lambda_mode", "sigmoid_sharpness"});
    read_field(o, "w_T", "control", sc.control.terminal_weight);
    if (o.contains("lambda_mode")) {
      std::string mode;
      read_field(o, "lambda_mode", "control", mode);
      sc.control.lambda_mode = parse_lambda_mode(mode);
    }
    read_field(o, "sigmoid_sharpness", "control", sc.control.sigmoid_sharpness);
  }
  if (root.contains("eval")) {
    const auto& o = root.at("eval");
    reject_unknown(o, "eval", {"n_clips", "n_pairs"});
    read_count(o, "n_clips", "eval", sc.eval.n_clips);
    read_count(o, "n_pairs", "eval", sc.eval.n_pairs);
  }
  if (root.contains("seed")) {
    const auto& v = root.at("seed");
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      throw Error(ErrorKind::InvalidConfig, "seed: expected a non-negative integer");
    }
    sc.seed = v.get<std::uint64_t>();
  }
  sc.validate();
  return sc;
}

/// Fully resolved (defaults included) JSON form of a scenario.
inline nlohmann::json scenario_to_json(const Scenario& sc) {
  nlohmann::json j;
  j["layout"] = {{"K", sc.layout.segments}, {"S", sc.layout.frames}, {"C", sc.layout.channels},
                 {"root_channel", sc.layout.root_channel}};
  j["domains"] = {{"c0", detail::write_domain(sc.source)}, {"c1", detail::write_domain(sc.target)}, {"p0", sc.prior_source}};
  j["schedule"] = {{"T", sc.schedule.total_steps}, {"N", sc.schedule.ddim_steps}};
  j["optimizer"] = {{"J", sc.optimizer.inner_steps}, {"lr", sc.optimizer.learning_rate},
                    {"warm_start", sc.optimizer.warm_start}};
  j["control"] = {{"w_T", sc.control.terminal_weight},
                  {"lambda_mode", to_string(sc.control.lambda_mode)},
                  {"sigmoid_sharpness", sc.control.sigmoid_sharpness}};
  j["eval"] = {{"n_clips", sc.eval.n_clips}, {"n_pairs", sc.eval.n_pairs}};
  j["seed"] = sc.seed;
  return j;
}

/// FNV-1a over the canonical JSON text (object keys are sorted).
inline std::string scenario_fingerprint(const Scenario& sc) {
  const std::string text = scenario_to_json(sc).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Scenario parse_scenario(const std::string& text, const std::string& origin = "<string>") {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Parse, origin + ": " + e.what());
  }
  return scenario_from_json(root);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open scenario file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), path);
}

}  // namespace mdpa
