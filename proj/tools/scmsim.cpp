// scmsim: validate scenarios, run simulations and re-run tracing analysis.
//
// Exit codes: 0 ok, 1 internal error, 2 validation or parse error,
// 3 infeasible at runtime.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "scm/scm.hpp"

namespace {

enum Exit { kOk = 0, kInternal = 1, kInvalid = 2, kInfeasible = 3 };

struct SimulateArgs {
  std::string file;
  std::optional<std::uint64_t> seed;
  std::optional<scm::Tick> horizon;
  std::string out;
  std::string log;
  std::string series;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) scm::fail(scm::ErrorCode::InvalidArgument, "cannot write " + path);
  os << text;
}

/// Decodes the scenario, applies flag overrides (flag > file > default) and
/// validates the result. Prints every problem and returns nullopt on failure.
std::optional<scm::ScenarioFile> load(const std::string& path, const std::optional<std::uint64_t>& seed,
                                      const std::optional<scm::Tick>& horizon) {
  try {
    auto s = scm::decode_scenario(scm::parse_json(scm::read_file(path), path));
    if (seed) s.seed = *seed;
    if (horizon) s.horizon = *horizon;
    const auto errors = scm::validate(s);
    if (errors.empty()) return s;
    for (const auto& e : errors) std::cerr << path << ": " << e << '\n';
  } catch (const scm::Error& e) {
    std::cerr << e.what() << '\n';
  }
  return std::nullopt;
}

int cmd_validate(const std::string& path) {
  if (!load(path, std::nullopt, std::nullopt)) return kInvalid;
  std::cout << path << ": ok\n";
  return kOk;
}

int cmd_simulate(const SimulateArgs& a) {
  auto s = load(a.file, a.seed, a.horizon);
  if (!s) return kInvalid;
  try {
    scm::sim::Simulation sim(std::move(*s));
    sim.run();
    const auto text = scm::sim::render(sim.report());
    if (a.out.empty()) std::cout << text;
    else write_file(a.out, text);
    if (!a.log.empty()) {
      std::ofstream os(a.log, std::ios::binary);
      if (!os) scm::fail(scm::ErrorCode::InvalidArgument, "cannot write " + a.log);
      sim.write_log(os);
    }
    if (!a.series.empty()) write_file(a.series, sim.series_csv());
  } catch (const scm::Error& e) {
    std::cerr << e.what() << '\n';
    return e.code() == scm::ErrorCode::Infeasible ? kInfeasible : kInternal;
  }
  return kOk;
}

int cmd_trace(const std::string& path) {
  try {
    scm::HistoryStore store;
    for (const auto& doc : scm::parse_json_documents(scm::read_file(path), path)) scm::collect_history(doc, store);
    std::cout << scm::json(scm::analyze(store)).dump(2) << '\n';
  } catch (const scm::Error& e) {
    std::cerr << e.what() << '\n';
    return e.code() == scm::ErrorCode::Parse ? kInvalid : kInternal;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supply chain coordination simulator"};
  app.require_subcommand(1);

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("file", validate_file, "Scenario file")->required();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write the report");
  simulate->add_option("file", sim.file, "Scenario file")->required();
  simulate->add_option("--seed", sim.seed, "Random seed (overrides the file)");
  simulate->add_option("--horizon", sim.horizon, "Ticks to simulate (overrides the file)");
  simulate->add_option("--out", sim.out, "Report path (default: standard output)");
  simulate->add_option("--log", sim.log, "Message log path (line-delimited JSON)");
  simulate->add_option("--series", sim.series, "Order series path (CSV: tick,enterprise,quantity)");

  std::string trace_file;
  auto* trace = app.add_subcommand("trace", "Analyze the tracking history in a report or history file");
  trace->add_option("file", trace_file, "Report or history file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*validate) return cmd_validate(validate_file);
    if (*simulate) return cmd_simulate(sim);
    if (*trace) return cmd_trace(trace_file);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
