#include "cev/run.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Corrected eddy-viscosity flow solver"};
  std::string config_path;
  bool strict = false, quiet = false, fine_mesh = false;
  app.add_option("config", config_path, "run configuration file")->required();
  app.add_flag("--strict", strict, "nonzero exit when the energy audit fails");
  app.add_flag("--quiet", quiet, "suppress progress and the final report");
  app.add_flag("--paper-mesh", fine_mesh, "offset circles on the fine mesh");
  CLI11_PARSE(app, argc, argv);

  cev::RunOptions opt;
  opt.strict = strict;
  opt.quiet = quiet;
  opt.fine_mesh = fine_mesh;
  opt.base_dir = std::filesystem::path(config_path).parent_path().string();
  opt.log = &std::cerr;
  try {
    const cev::RunConfig cfg = cev::parse_config(cev::read_text_file(config_path));
    const cev::RunOutcome out = cev::run(cfg, opt);
    if (!quiet) std::cout << out.report;
    if (out.exit_code != cev::kExitOk) std::cerr << "error: " << out.failure << "\n";
    return out.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << config_path << ": " << e.what() << "\n";
    return cev::kExitConfig;
  }
}
