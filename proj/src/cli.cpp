#include "dynorg/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"

#include "dynorg/dynstruct.hpp"
#include "dynorg/graddesc.hpp"
#include "dynorg/market.hpp"

namespace dynorg {

namespace {

bool log_enabled() {
  const char* v = std::getenv("DYNORG_LOG");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

void log_line(std::ostream& err, const std::string& msg) {
  if (log_enabled()) err << "[dynorg] " << msg << "\n";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text,
                  std::ostream& fallback) {
  if (path.empty()) {
    fallback << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot open output file '" + path + "'");
  out << text;
}

struct Options {
  std::string in_path;
  std::string out_path;
  std::string state_out;
  std::string mode = "both";
  std::string suite;
  std::string corrupt = "none";
  Seed seed = 1;
  std::size_t samples = 0;
  std::size_t rounds = 0;
  std::size_t steps = 0;
  double tol = 0.0;
  double eps = 0.05;

  bool seed_set = false;
  bool samples_set = false;
  bool rounds_set = false;
  bool steps_set = false;
  bool tol_set = false;
  bool eps_set = false;
};

int market_cmd(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.corrupt != "none" && opt.corrupt != "bayes")
    throw std::invalid_argument("corruption '" + opt.corrupt +
                                "' does not apply to the market simulator");
  auto sc = market::Scenario::from_json(read_file(opt.in_path));
  if (opt.seed_set) sc.seed = opt.seed;
  if (opt.rounds_set) sc.rounds = opt.rounds;
  const auto corruption = opt.corrupt == "bayes" ? market::Corruption::bayes_exponent
                                                 : market::Corruption::none;
  log_line(err, "market: outcomes=" + std::to_string(sc.outcomes) +
                    " rounds=" + std::to_string(sc.rounds) +
                    " seed=" + std::to_string(sc.seed) + " corrupt=" + opt.corrupt);
  const auto tr = market::simulate(sc, corruption);
  write_output(opt.out_path, tr.to_csv(), out);
  log_line(err, "market: wrote " + std::to_string(tr.records.size()) + " records");
  return 0;
}

int gd_cmd(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.corrupt != "none")
    throw std::invalid_argument("corruption '" + opt.corrupt +
                                "' does not apply to the trainer");
  auto sc = gd::TrainScenario::from_json(read_file(opt.in_path));
  if (opt.eps_set) sc.eps = opt.eps;
  if (!(std::isfinite(sc.eps) && sc.eps > 0.0))
    throw std::invalid_argument("eps must be positive");
  if (opt.steps_set) sc.steps = opt.steps;

  gd::TrainMode mode = gd::TrainMode::both;
  if (opt.mode == "composed") mode = gd::TrainMode::composed;
  else if (opt.mode == "stepwise") mode = gd::TrainMode::stepwise;

  log_line(err, "gd: steps=" + std::to_string(sc.steps) +
                    " eps=" + format_double(sc.eps) + " mode=" + opt.mode +
                    " samples=" + std::to_string(sc.data.size()));
  const auto rep = gd::train(*sc.diagram, sc.data, sc.eps, sc.steps, mode);

  write_output(opt.out_path, rep.history_csv(), out);

  nlohmann::json fs;
  fs["mode"] = opt.mode;
  fs["eps"] = sc.eps;
  fs["steps"] = sc.steps;
  fs["initial_loss"] = rep.initial_loss;
  fs["final_loss"] = rep.final_loss;
  fs["max_divergence"] = rep.max_divergence;
  fs["params_composed"] = rep.params_composed;
  fs["params_stepwise"] = rep.params_stepwise;
  auto layout = nlohmann::json::array();
  for (const auto& slot : gd::composite_param_layout(*sc.diagram))
    layout.push_back({{"generator", slot.generator},
                      {"offset", slot.offset},
                      {"count", slot.count}});
  fs["layout"] = std::move(layout);

  std::string state_path = opt.state_out;
  if (state_path.empty() && !opt.out_path.empty())
    state_path = opt.out_path + ".state.json";
  write_output(state_path, fs.dump(2) + "\n", out);
  log_line(err, "gd: final_loss=" + format_double(rep.final_loss) +
                    " max_divergence=" + format_double(rep.max_divergence));
  return 0;
}

int laws_cmd(const Options& opt, std::ostream& out, std::ostream& err) {
  auto allow_corrupt = [&](std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
      if (opt.corrupt == a) return;
    throw std::invalid_argument("corruption '" + opt.corrupt +
                                "' does not apply to suite '" + opt.suite + "'");
  };
  if (!(std::isfinite(opt.eps) && opt.eps > 0.0))
    throw std::invalid_argument("eps must be positive");

  LawReport report;
  if (opt.suite == "operad-market") {
    allow_corrupt({"none", "bayes"});
    const auto c = opt.corrupt == "bayes" ? market::Corruption::bayes_exponent
                                          : market::Corruption::none;
    OperadLawConfig cfg;
    if (opt.samples_set) cfg.samples = opt.samples;
    cfg.seed = opt.seed;
    if (opt.tol_set) cfg.tol = opt.tol;
    report = check_operad_laws(market::market_operad(3, c), cfg);
  } else if (opt.suite == "pro-gd") {
    allow_corrupt({"none", "compositor", "vjp"});
    auto c = gd::Corruption::none;
    if (opt.corrupt == "compositor") c = gd::Corruption::compositor_param_order;
    if (opt.corrupt == "vjp") c = gd::Corruption::vjp_sign;
    PROLawConfig cfg;
    if (opt.samples_set) cfg.samples = opt.samples;
    cfg.seed = opt.seed;
    if (opt.tol_set) cfg.tol = opt.tol;
    report = check_pro_laws(gd::gd_pro(opt.eps, c), cfg);
  } else if (opt.suite == "category-gd") {
    allow_corrupt({"none"});
    CategoryLawConfig cfg;
    if (opt.samples_set) cfg.samples = opt.samples;
    cfg.seed = opt.seed;
    if (opt.tol_set) cfg.tol = opt.tol;
    report = check_category_laws(gd::gd_category(opt.eps), cfg);
  } else if (opt.suite == "morphism-gd") {
    allow_corrupt({"none"});
    const DynamicPRO src = gd::gd_pro(opt.eps);
    const TerminalPRO dst =
        truncated_terminal_pro(src, 2, 4, mix_seed(opt.seed, "truncate"));
    PROMorphism h;
    h.map = identity_map(src.interface);
    h.commutor = [inc = dst.include](std::size_t, std::size_t) { return inc; };
    PROLawConfig cfg;
    cfg.samples = opt.samples_set ? opt.samples : 40;
    cfg.seed = opt.seed;
    if (opt.tol_set) cfg.tol = opt.tol;
    report = check_pro_morphism(h, src, dst.pro, cfg);
  } else if (opt.suite == "terminal-market") {
    allow_corrupt({"none"});
    const std::size_t probes = opt.samples_set ? opt.samples : 50;
    report = terminal_unfold_check(market::market_operad(3).coalgebra(2), 3, probes,
                                   opt.seed);
  } else if (opt.suite == "terminal-gd") {
    allow_corrupt({"none"});
    const std::size_t probes = opt.samples_set ? opt.samples : 50;
    report = terminal_unfold_check(gd::gd_pro(opt.eps).coalgebra(1, 1), 3, probes,
                                   opt.seed);
  } else {
    throw std::invalid_argument(
        "unknown suite '" + opt.suite +
        "' (available: operad-market, pro-gd, category-gd, morphism-gd, "
        "terminal-market, terminal-gd)");
  }

  write_output(opt.out_path, report.json_string() + "\n", out);
  log_line(err, report.summary());
  return report.passed() ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"dynamic organizations: market simulation, learner training, and "
               "law checking"};
  app.name("dynorg");
  app.require_subcommand(1);

  Options opt;

  auto add_seed = [&](CLI::App* cmd) {
    return cmd->add_option("--seed", opt.seed, "root random seed (positive)")
        ->check(CLI::PositiveNumber);
  };

  auto* market_cmd_app =
      app.add_subcommand("market", "simulate a prediction-market scenario");
  market_cmd_app->add_option("--in", opt.in_path, "scenario JSON file")->required();
  market_cmd_app->add_option("--out", opt.out_path,
                             "trajectory CSV path (default: stdout)");
  auto* m_seed = add_seed(market_cmd_app);
  auto* m_rounds =
      market_cmd_app->add_option("--rounds", opt.rounds, "override the round count");
  market_cmd_app
      ->add_option("--corrupt", opt.corrupt, "deliberate defect (none|bayes)")
      ->check(CLI::IsMember({"none", "bayes"}));

  auto* gd_cmd_app =
      app.add_subcommand("gd", "train a wiring diagram of gradient descenders");
  gd_cmd_app->add_option("--in", opt.in_path, "training scenario JSON file")
      ->required();
  gd_cmd_app->add_option("--out", opt.out_path,
                         "loss history CSV path (default: stdout)");
  gd_cmd_app->add_option("--state-out", opt.state_out,
                         "final-state JSON path (default: <out>.state.json, or "
                         "stdout after the CSV)");
  gd_cmd_app
      ->add_option("--mode", opt.mode,
                   "composed | stepwise | both (run both and compare)")
      ->check(CLI::IsMember({"composed", "stepwise", "both"}));
  auto* g_steps =
      gd_cmd_app->add_option("--steps", opt.steps, "override the step count");
  auto* g_eps = gd_cmd_app->add_option("--eps", opt.eps,
                                       "override the learning rate (positive)");

  auto* laws_cmd_app =
      app.add_subcommand("laws", "run a law-checking suite and emit a JSON report");
  laws_cmd_app
      ->add_option("--suite", opt.suite,
                   "operad-market | pro-gd | category-gd | morphism-gd | "
                   "terminal-market | terminal-gd")
      ->required();
  laws_cmd_app->add_option("--out", opt.out_path, "report JSON path (default: stdout)");
  auto* l_seed = add_seed(laws_cmd_app);
  auto* l_samples =
      laws_cmd_app->add_option("--samples", opt.samples, "sampling budget (positive)")
          ->check(CLI::PositiveNumber);
  auto* l_tol = laws_cmd_app
                    ->add_option("--tol", opt.tol, "numeric tolerance (positive)")
                    ->check(CLI::PositiveNumber);
  auto* l_eps = laws_cmd_app->add_option(
      "--eps", opt.eps, "learning rate for the gradient-descent suites");
  laws_cmd_app
      ->add_option("--corrupt", opt.corrupt,
                   "deliberate defect (none|bayes|compositor|vjp)")
      ->check(CLI::IsMember({"none", "bayes", "compositor", "vjp"}));

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("dynorg");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  opt.seed_set = m_seed->count() > 0 || l_seed->count() > 0;
  opt.rounds_set = m_rounds->count() > 0;
  opt.steps_set = g_steps->count() > 0;
  opt.eps_set = g_eps->count() > 0 || l_eps->count() > 0;
  opt.samples_set = l_samples->count() > 0;
  opt.tol_set = l_tol->count() > 0;

  try {
    if (market_cmd_app->parsed()) return market_cmd(opt, out, err);
    if (gd_cmd_app->parsed()) return gd_cmd(opt, out, err);
    return laws_cmd(opt, out, err);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  args.reserve(argc > 0 ? static_cast<std::size_t>(argc - 1) : 0);
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace dynorg
