// Command-line front end: fit, predict, validate, simulate, verify.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sicglmm/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Posterior mean and covariance of GLMM random effects by fixed-point iteration"};
  app.require_subcommand(1);

  sicglmm::CommandOptions opt;
  std::string config, data, sites, fit_dir, out;
  std::uint64_t seed = 0;
  int replications = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_flag("--quiet", opt.quiet, "suppress progress messages");
  };

  auto* fit = app.add_subcommand("fit", "fit random effects on the training rows; writes xi.csv, Xi.csv, report.json");
  add_common(fit);
  fit->add_option("--data", data, "dataset CSV")->required();

  auto* predict = app.add_subcommand("predict", "predict at unobserved sites; writes predictions.csv");
  add_common(predict);
  predict->add_option("--data", data, "dataset CSV (rows with role=test are predicted)")->required();
  predict->add_option("--sites", sites, "CSV of unobserved sites (x_coord, y_coord, covariates)");
  predict->add_option("--fit", fit_dir, "reuse the outputs of a previous fit instead of refitting");

  auto* validate = app.add_subcommand("validate", "random train/test splits scored by held-out deviance");
  add_common(validate);
  validate->add_option("--data", data, "dataset CSV")->required();

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo evaluation on synthetic spatial Poisson data");
  add_common(simulate);
  simulate->add_option("--replications", replications, "number of replications (overrides the config)");

  auto* verify = app.add_subcommand("verify", "factorization identity suite and exactness battery; writes verdicts.json");
  add_common(verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(sicglmm::ExitCode::validation);
  }

  auto set = [](auto& dst, const std::string& v) {
    if (!v.empty()) dst = v;
  };
  set(opt.config_path, config);
  set(opt.data_path, data);
  set(opt.sites_path, sites);
  set(opt.fit_dir, fit_dir);
  set(opt.out_dir, out);
  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed") > 0) opt.seed = seed;
  if (sub == simulate && simulate->count("--replications") > 0) {
    if (replications < 1) {
      std::cerr << "error: --replications must be >= 1\n";
      return static_cast<int>(sicglmm::ExitCode::validation);
    }
    opt.replications = replications;
  }
  return sicglmm::run_command(sub->get_name(), opt, std::cerr);
}
