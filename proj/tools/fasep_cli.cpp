// Command line front end: one subcommand per experiment plus `acceptance`.
#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <optional>

#include "fasep/experiments.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicas;
  std::optional<std::string> out;
  std::optional<int> threads;
};

void print_criteria(const std::vector<fasep::Criterion>& cs) {
  for (const auto& c : cs) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": estimate " << fasep::num(c.estimate) << " target "
              << fasep::num(c.target);
    if (c.stderr_ > 0) std::cout << " stderr " << fasep::num(c.stderr_);
    if (!c.detail.empty()) std::cout << " [" << c.detail << "]";
    std::cout << '\n';
  }
}

int run(const std::string& experiment, const Overrides& o) {
  fasep::ExperimentConfig cfg = o.config.empty() ? fasep::default_config(experiment) : fasep::load_config(o.config);
  if (!o.config.empty() && cfg.experiment != experiment)
    throw std::invalid_argument("config file is for '" + cfg.experiment + "', not '" + experiment + "'");
  if (o.seed) cfg.seed = *o.seed;
  if (o.replicas) cfg.replicas = *o.replicas;
  if (o.out) cfg.out_dir = *o.out;
  if (o.threads) cfg.threads = *o.threads;
  cfg.validate();
  const auto report = fasep::run_experiment(cfg);
  print_criteria(report.criteria);
  for (const auto& p : fasep::emit_outputs(report, cfg)) std::cout << "wrote " << p.string() << '\n';
  return report.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Half-line ASEP / FASEP and stochastic heat equation experiments"};
  app.require_subcommand(1);

  Overrides o;
  const std::vector<std::string> experiments{"first-moment", "second-moment", "martingale", "intertwine",
                                             "near-eq",      "kernels-suite", "she-validate"};
  std::string chosen;
  for (const auto& name : experiments) {
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--replicas", o.replicas, "Monte Carlo replicas")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
    sub->callback([&chosen, name] { chosen = name; });
  }

  std::vector<int> ids;
  auto* acc = app.add_subcommand("acceptance", "run the acceptance criteria");
  acc->add_option("--criterion", ids, "criteria to run (default all)")->check(CLI::Range(1, fasep::kAcceptanceCount));
  acc->add_option("--seed", o.seed, "master seed");
  acc->add_option("--threads", o.threads, "worker threads")->check(CLI::NonNegativeNumber);
  acc->callback([&chosen] { chosen = "acceptance"; });

  auto* dump = app.add_subcommand("print-config", "print the default config of an experiment");
  std::string dump_name;
  dump->add_option("experiment", dump_name)->required()->check(CLI::IsMember(experiments));
  dump->callback([&chosen] { chosen = "print-config"; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (chosen == "print-config") {
      std::cout << fasep::to_text(fasep::default_config(dump_name));
      return 0;
    }
    if (chosen == "acceptance") {
      if (ids.empty())
        for (int i = 1; i <= fasep::kAcceptanceCount; ++i) ids.push_back(i);
      fasep::AcceptanceOptions opt;
      if (o.seed) opt.seed = *o.seed;
      if (o.threads) opt.threads = *o.threads;
      bool ok = true;
      for (int id : ids) {
        const auto r = fasep::acceptance_criterion(id, opt);
        std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << r.title << ") " << std::fixed
                  << std::setprecision(1) << r.seconds << "s" << std::defaultfloat << std::setprecision(6) << '\n';
        ok = ok && r.pass;
      }
      return ok ? 0 : 1;
    }
    return run(chosen, o);
  } catch (const fasep::BudgetExceeded& e) {
    std::cerr << "refused: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
