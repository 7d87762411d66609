#include <qvident/cli.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  using namespace qvident;
  CLI::App app{"Implicit gradient-obstacle QVI solver and coefficient identification"};
  app.require_subcommand(1);

  std::string config;
  std::string a_file;
  std::string u_file;
  std::string out;
  std::string report;
  std::string history;
  std::string kappas;
  double sigma = 0.0;
  std::size_t samples = 200;
  std::optional<std::uint64_t> seed;

  auto* synth = app.add_subcommand("synth", "synthesize data z from a_true");
  synth->add_option("--config", config)->required();
  synth->add_option("--a", a_file, "a_true cell field")->required();
  synth->add_option("--sigma", sigma, "Gaussian noise standard deviation")->default_val(0.0);
  synth->add_option("--out", out, "output z field")->required();
  synth->add_option("--seed", seed);

  auto* fwd = app.add_subcommand("forward", "solve the QVI for a given coefficient");
  fwd->add_option("--config", config)->required();
  fwd->add_option("--a", a_file)->required();
  fwd->add_option("--out", out, "output u field")->required();
  fwd->add_option("--report", report, "output solve report")->required();

  auto* inv = app.add_subcommand("invert", "identify a from the configured data z");
  inv->add_option("--config", config)->required();
  inv->add_option("--out", out, "output a field")->required();
  inv->add_option("--history", history, "output history CSV")->required();

  auto* ver = app.add_subcommand("verify", "audit a solution against the structural hypotheses");
  ver->add_option("--config", config)->required();
  ver->add_option("--a", a_file)->required();
  ver->add_option("--u", u_file)->required();
  ver->add_option("--samples", samples)->default_val(200);
  ver->add_option("--seed", seed);

  auto* swp = app.add_subcommand("sweep", "identify a for each kappa in a list");
  swp->add_option("--config", config)->required();
  swp->add_option("--kappas", kappas, "comma separated kappa values")->required();
  swp->add_option("--out", out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kInvalidInput;
  }

  if (synth->parsed()) return cli::synth(config, a_file, sigma, out, seed);
  if (fwd->parsed()) return cli::forward(config, a_file, out, report);
  if (inv->parsed()) return cli::invert(config, out, history);
  if (ver->parsed()) return cli::verify(config, a_file, u_file, samples, seed);
  std::vector<double> ks;
  try {
    ks = cli::parse_kappa_list(kappas);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kInvalidInput;
  }
  return cli::sweep(config, ks, out);
}
