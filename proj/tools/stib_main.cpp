#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "stib/commands.hpp"
#include "stib/errors.hpp"
#include "stib/version.hpp"

namespace {

// "lo:hi:steps"
void parse_grid(const std::string& s, stib::TraverseArgs& args) {
  const std::size_t p1 = s.find(':');
  const std::size_t p2 = s.find(':', p1 == std::string::npos ? p1 : p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw stib::ParseError("--grid expects lo:hi:steps, got \"" + s + "\"");
  try {
    args.lo = std::stod(s.substr(0, p1));
    args.hi = std::stod(s.substr(p1 + 1, p2 - p1 - 1));
    const long steps = std::stol(s.substr(p2 + 1));
    if (steps < 2) throw stib::ParseError("--grid needs steps >= 2");
    args.steps = static_cast<std::size_t>(steps);
  } catch (const std::logic_error&) {
    throw stib::ParseError("--grid expects lo:hi:steps, got \"" + s + "\"");
  }
}

bool parse_noise(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw stib::ParseError("--noise expects on or off, got \"" + s + "\"");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stib: partitioned-latent information bottleneck experiments"};
  app.set_version_flag("--version", stib::kToolVersion);
  app.require_subcommand(1);

  stib::GenArgs gen;
  std::string gen_noise = "on";
  CLI::App* cgen = app.add_subcommand("gen", "generate a spiral dataset CSV");
  cgen->add_option("--n", gen.n, "sample count")->required();
  cgen->add_option("--seed", gen.seed, "generator seed");
  cgen->add_option("--noise", gen_noise, "observation noise: on|off");
  cgen->add_option("--out", gen.out, "output CSV path")->required();

  stib::TrainArgs train;
  CLI::App* ctrain = app.add_subcommand("train", "train a model and evaluate it");
  ctrain->add_option("--config", train.config, "JSON config path")->required();
  ctrain->add_option("--data", train.data, "training CSV")->required();
  ctrain->add_option("--test", train.test, "held-out CSV (fresh draw if omitted)");
  ctrain->add_option("--model", train.model, "output parameter file")->required();
  ctrain->add_option("--metrics", train.metrics, "output metrics JSON")->required();

  stib::EvalArgs eval;
  CLI::App* ceval = app.add_subcommand("eval", "evaluate a trained model");
  ceval->add_option("--model", eval.model, "parameter file")->required();
  ceval->add_option("--data", eval.data, "evaluation CSV")->required();
  ceval->add_option("--metrics", eval.metrics, "output metrics JSON")->required();

  stib::TraverseArgs trav;
  std::string grid = "-3:3:61";
  CLI::App* ctrav = app.add_subcommand(
      "traverse", "sweep the first invariant latent coordinate");
  ctrav->add_option("--model", trav.model, "parameter file")->required();
  ctrav->add_option("--data", trav.data, "CSV providing the anchor row")->required();
  ctrav->add_option("--index", trav.index, "anchor row index");
  ctrav->add_option("--grid", grid, "sweep as lo:hi:steps");
  ctrav->add_option("--out", trav.out, "output CSV path")->required();

  stib::ReportArgs report;
  CLI::App* creport = app.add_subcommand("report", "tabulate metrics files");
  creport->add_option("--metrics", report.metrics_files, "metrics JSON files")
      ->required()
      ->expected(-1);
  creport->add_option("--out", report.out, "output path (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cgen->parsed()) {
      gen.noise = parse_noise(gen_noise);
      stib::cmd_gen(gen);
    } else if (ctrain->parsed()) {
      stib::cmd_train(train);
    } else if (ceval->parsed()) {
      stib::cmd_eval(eval);
    } else if (ctrav->parsed()) {
      parse_grid(grid, trav);
      stib::cmd_traverse(trav);
    } else if (creport->parsed()) {
      stib::cmd_report(report);
    }
  } catch (const stib::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
