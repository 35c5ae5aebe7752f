// escape-atlas: command-line front end for the escape experiments.

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "escape_atlas/commands.hpp"

namespace ea = escape_atlas;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  bool verify = false;
  bool fast = false;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "Run configuration file")->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--workers", f.workers, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--seed", f.seed, "Random seed");
  sub->add_flag("--verify", f.verify, "Run the numerical check next to the analytic result");
  sub->add_flag("--fast", f.fast, "Reduced 500 EC profile");
}

// Flags override file keys; the output directory falls back to the
// environment and then to ./escape_atlas_out.
ea::RunConfig resolve(const CommonFlags& f, fs::path& out) {
  ea::RunConfig c = f.config.empty() ? ea::parse_config_string("") : ea::load_config(f.config);
  if (f.workers) c.run.workers = *f.workers;
  if (f.seed) c.run.seed = *f.seed;
  if (f.verify) c.run.numeric = true;
  if (f.fast) c.run.fast = true;
  if (!f.out.empty()) {
    out = f.out;
  } else if (!c.run.out.empty()) {
    out = c.run.out;
  } else if (const char* env = std::getenv("ESCAPE_ATLAS_OUT"); env && *env) {
    out = env;
  } else {
    out = "escape_atlas_out";
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe basins and escape thresholds of a forced truncated quartic well"};
  app.require_subcommand(1);
  CommonFlags flags;
  auto* fcr = app.add_subcommand("fcr-curve", "Escape threshold versus forcing frequency");
  auto* basin = app.add_subcommand("basin", "Analytic safe basin, optionally checked on a grid");
  auto* strobe = app.add_subcommand("strobe", "Period map of non-escaping orbits");
  auto* appendix = app.add_subcommand("appendix", "Escape criteria comparison and basin erosion");
  auto* selftest = app.add_subcommand("selftest", "Invariant checks of the numerical core");
  for (auto* s : {fcr, basin, strobe, appendix, selftest}) add_common(s, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (selftest->parsed()) return ea::cli::cmd_selftest(std::cout) ? 0 : 1;
    fs::path out;
    const ea::RunConfig cfg = resolve(flags, out);
    std::vector<fs::path> files;
    if (fcr->parsed()) files = ea::cli::cmd_fcr_curve(cfg, out, std::cout);
    if (basin->parsed()) files = ea::cli::cmd_basin(cfg, out, std::cout);
    if (strobe->parsed()) files = ea::cli::cmd_strobe(cfg, out, std::cout);
    if (appendix->parsed()) files = ea::cli::cmd_appendix(cfg, out, std::cout);
    for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
  } catch (const ea::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
