// canon-engine: command-line front end for canonicalization runs and benchmarks.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "canon/bench/dataset.hpp"
#include "canon/bench/run.hpp"

namespace {

using namespace canon::bench;

struct TaskArgs {
  std::string config;
  std::string out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  bool crop_disk = false;
};

struct FixtureArgs {
  std::string kind = "upright";
  int count = 100;
  int size = 33;
  int classes = 5;
  std::uint64_t seed = 0;
  std::string out;
};

int make_fixture(const FixtureArgs& a) {
  try {
    const Dataset ds = make_synthetic(parse_fixture_kind(a.kind), a.count, a.size, a.classes, a.seed);
    const auto manifest = write_dataset(ds, a.out);
    std::cerr << "make-fixture: wrote " << ds.items.size() << " images -> " << manifest.string() << "\n";
    return kExitOk;
  } catch (const canon::ConfigError& e) {
    std::cerr << "make-fixture: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "make-fixture: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time canonicalization engine"};
  app.require_subcommand(1);

  TaskArgs args;
  std::string chosen;
  for (const auto& [name, task] : task_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " task");
    sub->add_option("--config", args.config, "TOML run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory (overrides [task] out)");
    sub->add_option("--workers", args.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", args.seed, "global seed");
    sub->add_flag("--crop-disk", args.crop_disk, "score candidates inside the inscribed disk only");
    sub->callback([&chosen, name = name] { chosen = name; });
  }

  FixtureArgs fixture;
  CLI::App* fx = app.add_subcommand("make-fixture", "write a synthetic PNG dataset with manifest.csv");
  fx->add_option("--kind", fixture.kind, "upright, neutral, midtone or noise");
  fx->add_option("--count", fixture.count, "number of images");
  fx->add_option("--size", fixture.size, "image side in pixels (odd keeps the label pixel centered)");
  fx->add_option("--classes", fixture.classes, "label count (1-8)");
  fx->add_option("--seed", fixture.seed, "generator seed");
  fx->add_option("--out", fixture.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (fx->parsed()) return make_fixture(fixture);

  Overrides o;
  o.task = parse_task(chosen);
  if (!args.out.empty()) o.out = args.out;
  o.workers = args.workers;
  o.seed = args.seed;
  o.crop_disk = args.crop_disk;
  return run(args.config, o);
}
