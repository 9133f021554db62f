// Experiment driver for the rough SPDE laboratory.
//
//   rspde <lift|sew|solve|stability|regularity> --config <file>
//         [--seed <u64>] [--out <dir>] [--threads <k>]
//
// All scientific parameters come from the config file; --seed overrides the
// config seed, RSPDE_THREADS is the fallback for --threads.

#include <CLI11.hpp>

#include <rspde/runner.hpp>

int main(int argc, char** argv) {
  CLI::App app{"rough SPDE numerical laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "rspde_out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;

  const std::vector<std::string> names = {"lift", "sew", "solve", "stability",
                                          "regularity"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "configuration file (JSON)")
        ->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "seed override")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--threads", threads, "worker count (0 = RSPDE_THREADS)");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();
  return rspde::run_cli(cmd, config_path,
                        seed_set ? std::optional<std::uint64_t>(seed)
                                 : std::nullopt,
                        out_dir, threads);
}
