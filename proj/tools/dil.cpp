#include <iostream>

#include <CLI11.hpp>

#include "dil/app.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"Deep incremental learning backtests on temporal tabular data"};
  cli.require_subcommand(1);
  dil::app::Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* gen = cli.add_subcommand("gen", "write a synthetic dataset");
  add_common(gen);
  gen->add_option("--eras", o.eras, "number of eras");
  gen->add_option("--features", o.features, "number of features");

  for (auto [name, help] : {std::pair{"backtest", "run deep IL and factor timing strategies"},
                            std::pair{"sweep", "GBDT hyperparameter grid with snapshot curves"},
                            std::pair{"score", "score a prediction CSV against a dataset"}}) {
    auto* sub = cli.add_subcommand(name, help);
    add_common(sub);
    sub->add_option("--eras", o.eras, "era range first:last");
    sub->add_option("--data", o.data, "dataset CSV");
    sub->add_option("--groups", o.groups, "feature groups file");
    sub->add_option("--target", o.target, "scoring target name");
    if (std::string(name) == "score") sub->add_option("--predictions", o.predictions, "prediction CSV")->required();
  }
  auto* inspect = cli.add_subcommand("inspect", "print model metadata and structural similarity");
  add_common(inspect);
  inspect->add_option("--models", o.models, "directory of .model files")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return dil::app::kConfigError;
  }
  return dil::app::run(cli.get_subcommands().front()->get_name(), o, std::cout, std::cerr);
}
