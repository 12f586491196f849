// Command-line front end: builds a RunConfig from --config, subcommand flags and --set, then runs it.

#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "blowup/config.hpp"
#include "blowup/io.hpp"
#include "blowup/runner.hpp"

namespace {

struct Sugar {
  std::string flag;
  std::string key;
  std::string help;
};

const std::map<std::string, std::vector<Sugar>>& sugar_flags() {
  static const std::vector<Sugar> model = {
      {"--p", "model.p", "nonlinearity exponent"},
      {"--a", "model.a", "log exponent"},
      {"--N", "model.N", "space dimension"},
      {"--theta", "model.theta", "Lyapunov weight theta"},
      {"--m0", "model.m0", "weight m0 of H"},
  };
  auto with_model = [&](std::vector<Sugar> extra) {
    extra.insert(extra.begin(), model.begin(), model.end());
    return extra;
  };
  static const std::map<std::string, std::vector<Sugar>> table = {
      {"ode", with_model({{"--T", "ode.T", "blow-up time"},
                          {"--t-start", "ode.t_start", "earliest time integrated"},
                          {"--eps-init", "ode.eps_init", "seed distance T - t"},
                          {"--rel-tol", "ode.rel_tol", "step control tolerance"}})},
      {"phys", with_model({{"--geometry", "phys.geometry", "line | radial"},
                           {"--dx", "phys.dx", "mesh spacing"},
                           {"--half-width", "phys.half_width", "domain half width (radius)"},
                           {"--cfl", "phys.cfl", "dt / dx bound"},
                           {"--scheme", "phys.scheme", "rk4 | leapfrog"},
                           {"--ic", "phys.ic", "constant:c | gaussian:amp,width | file:path"},
                           {"--stop-amp", "phys.stop_amp", "stop when sup|u| reaches this"},
                           {"--cone-x0", "phys.cone_x0", "cone centre, or auto"}})},
      {"ss", with_model({{"--grid-n", "ss.grid_n", "cells on B"},
                         {"--ds-factor", "ss.ds_factor", "fraction of the stable step"},
                         {"--s0", "ss.s0", "initial s"},
                         {"--s1", "ss.s1", "final s"},
                         {"--ic", "ss.ic", "kappa | constant:c | perturbed-kappa:eps | from-phys:path"},
                         {"--T0", "ss.T0", "blow-up time for from-phys, or auto"},
                         {"--x0", "ss.x0", "blow-up point for from-phys, or auto"},
                         {"--gamma-form", "ss.gamma_form", "exact | published"}})},
      {"fit", with_model({{"--source", "fit.source", "ode | phys | file:path"},
                          {"--cone", "fit.cone", "cone_norms.csv for the window report"},
                          {"--window-lo", "fit.window_lo", "smallest T - t fitted"},
                          {"--window-hi", "fit.window_hi", "largest T - t fitted"},
                          {"--pin-gamma", "fit.pin_gamma", "true to fix gamma = 0"}})},
      {"verify-appendix", with_model({{"--u-max", "appendix.u_max", "largest u on the grid"},
                                      {"--per-decade", "appendix.per_decade", "grid points per decade"}})},
      {"sweep", with_model({{"--scenario", "sweep.scenario", "scenario run per value"},
                            {"--axis", "sweep.axis", "numeric key varied (a, p, N, grid-n, dx or a dotted key)"},
                            {"--values", "sweep.values", "comma-separated values"},
                            {"--threads", "sweep.threads", "worker threads, 0 = all cores"}})},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for u_tt = Laplacian u + |u|^{p-1} u log^a(2 + u^2)"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> assignments;
  bool dump_config = false;
  app.add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--set", assignments, "key=value override, repeatable")->take_all();
  app.add_flag("--dump-config", dump_config, "print the resolved config and exit");

  std::map<std::string, std::map<std::string, std::string>> storage;
  for (const auto& [name, flags] : sugar_flags()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
    sub->fallthrough();
    for (const auto& s : flags) {
      auto* opt = sub->add_option(s.flag, storage[name][s.key], s.help);
      if (s.key == "sweep.values") opt->expected(0, 1);  // empty list allowed
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? blowup::kExitPass : blowup::kExitUsage;
  }

  blowup::RunConfig cfg;
  std::string scenario;
  try {
    if (!config_path.empty()) cfg = blowup::from_text(blowup::read_text_file(config_path));
    for (auto* sub : app.get_subcommands()) {
      scenario = sub->get_name();
      for (const auto& s : sugar_flags().at(scenario))
        if (sub->count(s.flag) > 0) {
          std::string v = storage[scenario][s.key];
          if (s.key == "sweep.axis") v = blowup::canonical_key(v);
          blowup::set_key(cfg, s.key, v);
        }
    }
    cfg.scenario = scenario;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    for (const auto& a : assignments) blowup::apply_assignment(cfg, a);
  } catch (const blowup::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return blowup::kExitUsage;
  }

  if (dump_config) {
    std::cout << blowup::to_text(cfg);
    return blowup::kExitPass;
  }

  const auto outcome = blowup::execute(cfg);
  if (!outcome.error.empty()) std::cerr << "error: " << outcome.error << "\n";
  if (outcome.code != blowup::kExitUsage) {
    const char* verdict = outcome.code == blowup::kExitPass ? "PASS" : outcome.code == blowup::kExitVerdictFail ? "FAIL" : "ERROR";
    std::cout << cfg.scenario << ": " << verdict << " (" << (std::filesystem::path(cfg.output_dir) / "report.json").string()
              << ")\n";
  }
  return outcome.code;
}
