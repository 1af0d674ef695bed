#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdpa/checks.hpp"
#include "mdpa/evaluation.hpp"
#include "mdpa/sampler.hpp"
#include "mdpa/scenario.hpp"
#include "mdpa/scenario_io.hpp"

namespace fs = std::filesystem;
using namespace mdpa;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string scenario_path;
  std::string method = "mdpa";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t runs = 1;
  std::string sweep;
  bool inject_lambda_bug = false;
};

Scenario load(const Options& o) {
  if (o.scenario_path.empty()) return Scenario{};
  return load_scenario(o.scenario_path);
}

std::uint64_t seed_of(const Options& o, const Scenario& sc) { return o.seed.value_or(sc.seed); }

EvalReport evaluate_method(const LongRangeSampler& sampler, Method method, std::uint64_t seed) {
  const auto& eval = sampler.scenario().eval;
  const auto gen = sampler.generate_clips(method, eval.n_clips, seed);
  const auto gt = sampler.ground_truth_clips(eval.n_clips, seed);
  return evaluate(gen, gt, eval.n_pairs, seed);
}

double max_energy(const RunResult& r) {
  double peak = 0.0;
  for (const auto& e : r.energy_trace) peak = std::max(peak, e.total);
  return peak;
}

int run_generate(const Options& o) {
  const Scenario sc = load(o);
  const LongRangeSampler sampler(sc);
  const RunResult result = sampler.run(parse_method(o.method), seed_of(o, sc));
  const auto manifest = write_run(result, std::nullopt, o.out);
  std::cout << "wrote " << manifest.string() << "\n";
  return 0;
}

int run_evaluate(const Options& o) {
  const Scenario sc = load(o);
  const LongRangeSampler sampler(sc);
  const Method method = parse_method(o.method);
  const std::uint64_t seed = seed_of(o, sc);
  const EvalReport report = evaluate_method(sampler, method, seed);
  write_run(sampler.run(method, seed), report, o.out);
  std::cout << to_string(method) << " fid_k " << report.fid_k << " fid_m " << report.fid_m << " div_k " << report.div_k
            << " div_m " << report.div_m << "\n";
  return 0;
}

EvalReport average(const std::vector<EvalReport>& reports) {
  EvalReport mean;
  const double n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    mean.fid_k += r.fid_k / n;
    mean.fid_m += r.fid_m / n;
    mean.div_k += r.div_k / n;
    mean.div_m += r.div_m / n;
    mean.accel_mean += r.accel_mean / n;
    mean.accel_var += r.accel_var / n;
    mean.jerk_mean += r.jerk_mean / n;
    mean.jerk_var += r.jerk_var / n;
    mean.n_gen = r.n_gen;
    mean.n_gt = r.n_gt;
  }
  return mean;
}

int run_compare(const Options& o) {
  const Scenario sc = load(o);
  const LongRangeSampler sampler(sc);
  const std::uint64_t base = seed_of(o, sc);
  if (o.runs == 0) throw Error(ErrorKind::InvalidConfig, "--runs must be >= 1");
  const auto& eval = sc.eval;

  const std::vector<Method> methods = {Method::Linear, Method::Sigmoid, Method::Sine, Method::Mdpa};
  std::map<std::string, std::vector<EvalReport>> per_run;
  std::vector<std::future<std::vector<EvalReport>>> jobs;
  for (Method m : methods) {
    jobs.push_back(std::async(std::launch::async, [&, m] {
      std::vector<EvalReport> out;
      for (std::size_t r = 0; r < o.runs; ++r) out.push_back(evaluate_method(sampler, m, base + r));
      return out;
    }));
  }
  for (std::size_t i = 0; i < methods.size(); ++i) per_run[to_string(methods[i])] = jobs[i].get();

  // Reference row: a fresh ground-truth draw scored against the evaluation one.
  for (std::size_t r = 0; r < o.runs; ++r) {
    const std::uint64_t seed = base + r;
    const auto gt = sampler.ground_truth_clips(eval.n_clips, seed);
    const auto fresh = sampler.ground_truth_clips(eval.n_clips, derive_seed(seed, streams::kGroundTruth, 2));
    per_run["ground_truth"].push_back(evaluate(fresh, gt, eval.n_pairs, seed));
  }

  std::map<std::string, EvalReport> table;
  for (const auto& [name, reports] : per_run) table[name] = average(reports);
  fs::create_directories(o.out);
  const auto path = export_comparison_table(table, fs::path(o.out) / "comparison.csv");

  std::ofstream runs(fs::path(o.out) / "comparison_runs.csv", std::ios::binary | std::ios::trunc);
  runs << "method,seed,fid_k,fid_m,div_k,div_m\n";
  for (const char* name : kComparisonOrder) {
    const auto it = per_run.find(name);
    if (it == per_run.end()) continue;
    for (std::size_t r = 0; r < it->second.size(); ++r) {
      const auto& rep = it->second[r];
      runs << name << ',' << base + r << ',' << format_double(rep.fid_k) << ',' << format_double(rep.fid_m) << ','
           << format_double(rep.div_k) << ',' << format_double(rep.div_m) << '\n';
    }
  }
  if (!runs) throw Error(ErrorKind::Io, "write failed for comparison_runs.csv");
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

void apply_sweep_value(Scenario& sc, const std::string& key, const std::string& text) {
  const double v = parse_double(text);
  auto as_count = [&](const char* what) {
    if (!(v >= 0.0) || v != std::floor(v)) throw Error(ErrorKind::InvalidConfig, std::string(what) + " must be an integer");
    return static_cast<std::size_t>(v);
  };
  if (key == "w_T") {
    sc.control.terminal_weight = v;
  } else if (key == "J") {
    sc.optimizer.inner_steps = static_cast<int>(as_count("J"));
  } else if (key == "K") {
    sc.layout.segments = as_count("K");
  } else if (key == "lr") {
    sc.optimizer.learning_rate = v;
  } else {
    throw Error(ErrorKind::InvalidConfig, "--sweep key must be one of w_T, J, K, lr (got '" + key + "')");
  }
  sc.validate();
}

int run_sweep(const Options& o) {
  const auto eq = o.sweep.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == o.sweep.size()) {
    throw Error(ErrorKind::InvalidConfig, "--sweep expects KEY=V1,V2,...");
  }
  const std::string key = o.sweep.substr(0, eq);
  std::vector<std::string> values;
  std::stringstream list(o.sweep.substr(eq + 1));
  for (std::string item; std::getline(list, item, ',');) {
    if (!item.empty()) values.push_back(item);
  }
  const Scenario base = load(o);
  const Method method = parse_method(o.method);
  const std::uint64_t seed = seed_of(o, base);

  std::vector<Scenario> scenarios;
  for (const auto& v : values) {
    Scenario sc = base;
    apply_sweep_value(sc, key, v);
    scenarios.push_back(std::move(sc));
  }
  std::vector<std::future<std::pair<RunResult, EvalReport>>> jobs;
  for (const auto& sc : scenarios) {
    jobs.push_back(std::async(std::launch::async, [&sc, method, seed] {
      const LongRangeSampler sampler(sc);
      return std::pair{sampler.run(method, seed), evaluate_method(sampler, method, seed)};
    }));
  }

  fs::create_directories(o.out);
  std::ofstream summary(fs::path(o.out) / "sweep.csv", std::ios::binary | std::ios::trunc);
  summary << "key,value,fid_k,fid_m,div_k,div_m,max_energy,dir\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto [result, report] = jobs[i].get();
    const std::string dir = key + "=" + values[i];
    write_run(result, report, fs::path(o.out) / dir);
    summary << key << ',' << values[i] << ',' << format_double(report.fid_k) << ',' << format_double(report.fid_m) << ','
            << format_double(report.div_k) << ',' << format_double(report.div_m) << ','
            << format_double(max_energy(result)) << ',' << dir << '\n';
  }
  if (!summary) throw Error(ErrorKind::Io, "write failed for sweep.csv");
  std::cout << "wrote " << (fs::path(o.out) / "sweep.csv").string() << "\n";
  return 0;
}

int run_check(const Options& o) {
  CheckOptions opts;
  if (o.inject_lambda_bug) {
    // drops the (1 - beta) factor
    opts.lambda_override = [](int t, const NoiseSchedule& s) {
      return lambda_weight(t, s, LambdaMode::Posterior) * (1.0 - s.beta[t]);
    };
  }
  bool all = true;
  const auto results = run_checks(opts);
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  measured=" << r.measured << "  tol=" << r.tolerance
              << "\n";
    all = all && r.passed;
  }
  std::cout << results.size() << " checks, " << (all ? "all passed" : "FAILURES") << "\n";
  return all ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-range motion sampling with optimized mixing schedules"};
  app.require_subcommand(1, 1);
  Options o;

  auto add_scenario = [&](CLI::App* cmd) { cmd->add_option("--scenario", o.scenario_path, "scenario JSON (defaults if omitted)"); };
  auto add_seed = [&](CLI::App* cmd) { cmd->add_option("--seed", o.seed, "master seed (overrides the scenario)"); };
  auto add_out = [&](CLI::App* cmd) { cmd->add_option("--out", o.out, "output directory")->capture_default_str(); };
  auto add_method = [&](CLI::App* cmd) {
    cmd->add_option("--method", o.method, "mdpa | linear | sigmoid | sine")->capture_default_str();
  };

  auto* generate = app.add_subcommand("generate", "sample one long sequence and write its artifacts");
  add_scenario(generate);
  add_method(generate);
  add_seed(generate);
  add_out(generate);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "sample n_clips clips for one method and score them");
  add_scenario(evaluate_cmd);
  add_method(evaluate_cmd);
  add_seed(evaluate_cmd);
  add_out(evaluate_cmd);

  auto* compare = app.add_subcommand("compare", "score all four methods and write comparison.csv");
  add_scenario(compare);
  add_seed(compare);
  add_out(compare);
  compare->add_option("--runs", o.runs, "evaluation seeds per method")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "vary w_T, J, K or lr over a list of values");
  add_scenario(sweep);
  add_method(sweep);
  add_seed(sweep);
  add_out(sweep);
  sweep->add_option("--sweep", o.sweep, "KEY=V1,V2,...")->required();

  auto* check = app.add_subcommand("check", "run the built-in property checks");
  check->add_flag("--inject-lambda-bug", o.inject_lambda_bug)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*generate) return run_generate(o);
    if (*evaluate_cmd) return run_evaluate(o);
    if (*compare) return run_compare(o);
    if (*sweep) return run_sweep(o);
    if (*check) return run_check(o);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return e.kind() == ErrorKind::Io ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
