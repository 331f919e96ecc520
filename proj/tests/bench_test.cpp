#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <unistd.h>

#include "canon/bench/run.hpp"
#include "canon/bridge_server.hpp"

namespace canon::bench {
namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("canon-bench-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& p) const { return path_ / p; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

const NoiseSchedule& schedule() {
  static const NoiseSchedule s = make_linear_schedule(1000, 0.00085, 0.012);
  return s;
}

EnergySpec spec_with(int classes) {
  EnergySpec s;
  for (int i = 0; i < classes; ++i) s.prompts.push_back("class" + std::to_string(i));
  return s;
}

SyntheticBackend synthetic(SyntheticCue cue, double sharpness) {
  SyntheticBackend::Options o;
  o.cue = cue;
  o.sharpness = sharpness;
  return SyntheticBackend(o);
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

TEST(ConfigTest, ParsesSections) {
  const RunConfig c = parse_config_string(R"(
[task]
name = "bench-color"
seed = 11
workers = 3
crop_disk = true
[dataset]
synthetic = "neutral"
count = 7
prompts = ["a", "b", "c"]
[transform]
kind = "color"
bins = 4
[energy]
alpha = 2.0
gamma2 = 0.5
timesteps = [100, 200]
normalizing_prompt = "a photo"
[optimizer]
n_iters = 3
[backend]
cue = "neutral"
sharpness = 0.5
)");
  EXPECT_EQ(c.task, Task::BenchColor);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(c.workers, 3);
  EXPECT_TRUE(c.crop_disk);
  EXPECT_EQ(c.dataset.count, 7);
  EXPECT_EQ(c.dataset.prompts.size(), 3u);
  EXPECT_EQ(c.transform.bins, 4);
  EXPECT_EQ(c.energy.alpha, 2.0);
  EXPECT_EQ(c.energy.timesteps, (std::vector<int>{100, 200}));
  EXPECT_EQ(c.energy.normalizing_prompt.value(), "a photo");
  EXPECT_EQ(c.optimizer.n_iters, 3);
  EXPECT_EQ(c.backend.sharpness.value(), 0.5);
  EXPECT_EQ(c.transform.lower, (std::vector<double>{-1.0, -1.0}));
}

TEST(ConfigTest, KindDefaultsSetBudgets) {
  const RunConfig color = parse_config_string("[transform]\nkind = \"color\"\n");
  EXPECT_EQ(color.optimizer.budget(), 35);
  EXPECT_EQ(color.transform.corruption_upper, (std::vector<double>{1.0, 1.0}));
  const RunConfig gamma = parse_config_string("[transform]\nkind = \"gamma\"\n");
  EXPECT_EQ(gamma.optimizer.budget(), 12);
  EXPECT_EQ(gamma.optimizer.grid_per_dim, (std::vector<int>{3}));
  EXPECT_EQ(gamma.transform.corruption_lower, (std::vector<double>{-2.0}));
}

TEST(ConfigTest, RccPreset) {
  const RunConfig c = parse_config_string("[transform]\npreset = \"rcc\"\n");
  EXPECT_EQ(c.transform.kind, "color");
  EXPECT_EQ(c.transform.lower, (std::vector<double>{-0.7, -0.7}));
  EXPECT_EQ(c.transform.upper, (std::vector<double>{-0.3, -0.3}));
  EXPECT_TRUE(c.optimizer.grid_per_dim.empty());
  EXPECT_EQ(c.optimizer.n_random, 10);
  EXPECT_EQ(c.optimizer.n_iters, 50);
  EXPECT_EQ(c.energy.gamma2, -10.0);
  EXPECT_EQ(c.energy.timesteps, (std::vector<int>{50}));
}

TEST(ConfigTest, RejectsBadInput) {
  EXPECT_THROW(parse_config_string("[task]\nbogus = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[task]\nseed = \"x\"\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[task\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[task]\nname = \"nope\"\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[transform]\npreset = \"other\"\n"), ConfigError);
  EXPECT_THROW(parse_config_string("[energy]\ntimesteps = [1, \"a\"]\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.toml"), ConfigError);
}

TEST(ConfigTest, ValidateChecksFilesAndRanges) {
  RunConfig c = parse_config_string("[dataset]\nmanifest = \"/nonexistent/m.csv\"\n");
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config_string("[transform]\nkind = \"color\"\nlower = [1.0, 0.0]\nupper = [0.0, 1.0]\n");
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config_string("[transform]\nkind = \"gamma\"\n[optimizer]\ngrid_per_dim = [3, 3]\n");
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config_string("[backend]\nkind = \"remote\"\n");
  EXPECT_THROW(validate(c), ConfigError);
  c = parse_config_string("[transform]\nn = 4\ntta_views = 5\n");
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(ConfigTest, RelativePathsResolveAgainstConfigFile) {
  TempDir dir;
  write_file(dir / "run.toml", "[dataset]\nmanifest = \"data/m.csv\"\n[task]\nout = \"res\"\n");
  const RunConfig c = load_config(dir / "run.toml");
  EXPECT_EQ(c.dataset.manifest.value(), dir / "data/m.csv");
  EXPECT_EQ(c.out, dir / "res");
}

TEST(ConfigTest, DigestIgnoresOutAndWorkers) {
  RunConfig a = parse_config_string("[task]\nseed = 1\n");
  RunConfig b = a;
  b.out = "elsewhere";
  b.workers = 8;
  EXPECT_EQ(a.digest(), b.digest());
  b.seed = 2;
  EXPECT_NE(a.digest(), b.digest());
}

// ---------------------------------------------------------------------------
// Dataset ingestion
// ---------------------------------------------------------------------------

TEST(DatasetTest, ManifestRoundTripAndSkips) {
  TempDir dir;
  const Dataset made = make_synthetic(FixtureKind::Upright, 4, 9, 3, 1);
  write_dataset(made, dir.path());
  write_file(dir / "images/broken.png", "not a png");
  std::ofstream(dir / "manifest.csv", std::ios::app) << "broken,images/broken.png,0\n"
                                                    << "missing,images/none.png,1\n";
  const Dataset ds = load_manifest(dir / "manifest.csv");
  ASSERT_EQ(ds.items.size(), 4u);
  ASSERT_EQ(ds.skipped.size(), 2u);
  EXPECT_EQ(ds.skipped[0].id, "broken");
  EXPECT_EQ(ds.skipped[1].id, "missing");
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ds.items[i].id, made.items[i].id);
    EXPECT_EQ(ds.items[i].label, made.items[i].label);
    EXPECT_LE(mean_abs_diff(ds.items[i].image, made.items[i].image), 0.5 / 255.0 + 1e-12);
  }
  EXPECT_EQ(load_manifest(dir / "manifest.csv", 2).items.size(), 2u);
}

TEST(DatasetTest, ManifestErrors) {
  TempDir dir;
  EXPECT_THROW(load_manifest(dir / "absent.csv"), ConfigError);
  write_file(dir / "bad_header.csv", "name,file\n");
  EXPECT_THROW(load_manifest(dir / "bad_header.csv"), DatasetError);
  write_file(dir / "bad_label.csv", "id,path,label\na,x.png,cat\n");
  EXPECT_THROW(load_manifest(dir / "bad_label.csv"), DatasetError);
  write_file(dir / "short.csv", "id,path,label\na,x.png\n");
  EXPECT_THROW(load_manifest(dir / "short.csv"), DatasetError);
}

TEST(DatasetTest, QuotedCsvCells) {
  const auto cells = detail::split_csv_line(R"(a, "b,c" ,"say ""hi""")");
  ASSERT_EQ(cells.size(), 3u);
  EXPECT_EQ(cells[1], "b,c");
  EXPECT_EQ(cells[2], "say \"hi\"");
}

TEST(DatasetTest, Prompts) {
  EXPECT_EQ(prompts_from_template({"cat", "dog"}, "a photo of a {label}"),
            (std::vector<std::string>{"a photo of a cat", "a photo of a dog"}));
  TempDir dir;
  write_file(dir / "p.txt", "first\n\n  second  \n");
  EXPECT_EQ(load_prompts(dir / "p.txt"), (std::vector<std::string>{"first", "second"}));
  write_file(dir / "empty.txt", "\n");
  EXPECT_THROW(load_prompts(dir / "empty.txt"), ConfigError);
}

TEST(DatasetTest, SyntheticFixturesCarryLabels) {
  for (auto kind : {FixtureKind::Upright, FixtureKind::Neutral, FixtureKind::Midtone, FixtureKind::Noise}) {
    const Dataset ds = make_synthetic(kind, 10, 15, 5, 3);
    ASSERT_EQ(ds.items.size(), 10u);
    for (const auto& item : ds.items) EXPECT_EQ(watermark_label(item.image), item.label) << item.id;
  }
  EXPECT_THROW(parse_fixture_kind("plaid"), ConfigError);
}

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

TEST(RotationBenchTest, SyntheticUprightnessRecoversPose) {
  const Dataset ds = make_synthetic(FixtureKind::Upright, 20, 33, 5, 4);
  const SyntheticBackend backend;
  for (bool crop : {false, true}) {
    const RotationReport r = bench_rotation(ds, 8, spec_with(5), schedule(), backend, {1, crop, 0});
    EXPECT_EQ(r.pose_accuracy(), 1.0) << "crop " << crop;
    EXPECT_EQ(r.pose_error_deg(), 0.0);
    EXPECT_EQ(r.accuracy(&AngleStats::canon_correct), 1.0);
    EXPECT_LT(r.accuracy(&AngleStats::baseline_correct), 1.0);
    EXPECT_EQ(r.trials(), 160);
    EXPECT_EQ(r.cost, (CostCounter{8 * 160, 8 * 160, 0, 160}));
  }
}

TEST(RotationBenchTest, PoseErrorUsesCircularDistance) {
  // Constant energy ties at the identity, so canonicalization never moves the
  // input and the recovered pose is always 0 degrees.
  const Dataset ds = make_synthetic(FixtureKind::Upright, 3, 17, 3, 5);
  const SyntheticBackend backend = synthetic(SyntheticCue::Constant, 1.0);
  const RotationReport r = bench_rotation(ds, 8, spec_with(3), schedule(), backend, {});
  // Errors per angle k: min(k, 8 - k) * 45 -> mean (0+45+90+135+180+135+90+45)/8.
  EXPECT_DOUBLE_EQ(r.pose_error_deg(), 90.0);
  EXPECT_DOUBLE_EQ(r.pose_accuracy(), 1.0 / 8.0);
  for (const auto& a : r.angles) EXPECT_LE(a.pose_error_sum / a.count, 180.0);
}

TEST(RotationBenchTest, IdentityDomainEqualsBaseline) {
  const Dataset ds = make_synthetic(FixtureKind::Upright, 12, 17, 4, 6);
  const SyntheticBackend backend;
  const RotationReport r = bench_rotation(ds, 1, spec_with(4), schedule(), backend, {});
  ASSERT_EQ(r.angles.size(), 1u);
  EXPECT_EQ(r.angles[0].canon_correct, r.angles[0].baseline_correct);
  for (const auto& rec : r.tally.per_image) {
    const auto& t = rec.at("trials")[0];
    EXPECT_EQ(t.at("canon_label"), t.at("baseline_label"));
  }
}

TEST(RotationBenchTest, PerImageFailuresAreSkipped) {
  Dataset ds = make_synthetic(FixtureKind::Upright, 5, 17, 3, 7);
  ds.items[2].label = 9;  // no prompt for this label
  const SyntheticBackend backend;
  const RotationReport r = bench_rotation(ds, 4, spec_with(3), schedule(), backend, {});
  EXPECT_EQ(r.tally.images, 5);
  ASSERT_EQ(r.tally.skipped.size(), 1u);
  EXPECT_EQ(r.tally.skipped[0].id, ds.items[2].id);
  EXPECT_EQ(r.trials(), 16);
  EXPECT_EQ(r.tally.per_image.size(), 5u);
  EXPECT_TRUE(r.tally.per_image[2].contains("error"));
}

TEST(RotationBenchTest, WorkerCountDoesNotChangeResults) {
  const Dataset ds = make_synthetic(FixtureKind::Upright, 12, 17, 5, 8);
  const SyntheticBackend backend;
  const auto a = bench_rotation(ds, 8, spec_with(5), schedule(), backend, {1, true, 3}, 4);
  const auto b = bench_rotation(ds, 8, spec_with(5), schedule(), backend, {4, true, 3}, 4);
  EXPECT_EQ(a.metrics(), b.metrics());
  EXPECT_EQ(a.tally.per_image, b.tally.per_image);
}

TEST(TtaTest, SingleViewEqualsOneRotation) {
  std::mt19937_64 rng(9);
  const Image img = fixtures::upright_scene(17, rng, 2);
  const SyntheticBackend backend;
  const auto prompts = spec_with(4).prompts;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Prediction p = tta_predict(img, 8, 1, seed, prompts, backend);
    bool matched = false;
    for (int k = 0; k < 8; ++k) {
      matched = matched || backend.logits(rotate(img, 45.0 * k), prompts).values == p.logits.values;
    }
    EXPECT_TRUE(matched) << "seed " << seed;
  }
}

TEST(TtaTest, ConstantLogitsAverageToThemselves) {
  const LambdaBackend constant(
      [](const Image&, std::span<const std::string> prompts) {
        Logits l;
        for (std::size_t i = 0; i < prompts.size(); ++i) l.values.push_back(0.25 * static_cast<double>(i % 3));
        return l;
      },
      nullptr);
  std::mt19937_64 rng(10);
  const Image img = fixtures::random_noise(9, 9, rng);
  const auto prompts = spec_with(5).prompts;
  const Prediction all = tta_predict(img, 8, 8, 1, prompts, constant);
  EXPECT_EQ(all.logits.values, constant.logits(img, prompts).values);
  EXPECT_EQ(all.label, predict(img, prompts, constant).label);
  EXPECT_THROW(tta_predict(img, 4, 5, 1, prompts, constant), ArgumentError);
}

TEST(TtaTest, AveragingDilutesTheInformativeView) {
  const Dataset ds = make_synthetic(FixtureKind::Upright, 10, 33, 5, 11);
  const SyntheticBackend backend;
  const RotationReport r = bench_rotation(ds, 8, spec_with(5), schedule(), backend, {1, true, 0}, 8);
  EXPECT_LT(r.accuracy(&AngleStats::tta_correct), r.accuracy(&AngleStats::canon_correct));
  EXPECT_EQ(r.tta_logits_calls, 8 * 80);
}

TEST(SweepBenchTest, ColorGainOnShiftedImages) {
  const Dataset ds = make_synthetic(FixtureKind::Neutral, 20, 17, 5, 12);
  const SyntheticBackend backend = synthetic(SyntheticCue::Neutral, 0.25);
  const auto box = TransformDomain::box({-1.0, -1.0}, {1.0, 1.0});
  const SweepReport r = bench_color(ds, {-1.0, -1.0}, {1.0, 1.0}, box, spec_with(5), schedule(), backend,
                                    BoConfig{}, {1, false, 5}, 4);
  EXPECT_GT(r.mean_gain(), 0.0);
  EXPECT_EQ(r.evaluations_per_image(), 35.0);
  EXPECT_EQ(r.cost.n_transform, 35 * 20);
  EXPECT_EQ(r.cost.n_logits_calls, 35 * 20);
  long counted = 0;
  for (const auto& b : r.bins) counted += b.count;
  EXPECT_EQ(counted, 20);
  EXPECT_EQ(r.bins.front().lower, 0.0);
  EXPECT_DOUBLE_EQ(r.bins.back().upper, std::sqrt(2.0));
}

TEST(SweepBenchTest, ColorZeroShiftKeepsBaseline) {
  const Dataset ds = make_synthetic(FixtureKind::Neutral, 10, 17, 5, 13);
  const SyntheticBackend backend = synthetic(SyntheticCue::Neutral, 0.25);
  const auto box = TransformDomain::box({-1.0, -1.0}, {1.0, 1.0});
  const SweepReport r = bench_color(ds, {0.0, 0.0}, {0.0, 0.0}, box, spec_with(5), schedule(), backend,
                                    BoConfig{}, {}, 3);
  EXPECT_EQ(r.canon_accuracy(), r.baseline_accuracy());
  EXPECT_EQ(r.bins[0].count, 10);
}

TEST(SweepBenchTest, ContrastBudgetAndIdentityCorruption) {
  const Dataset ds = make_synthetic(FixtureKind::Midtone, 10, 17, 5, 14);
  const SyntheticBackend backend = synthetic(SyntheticCue::Midtone, 0.5);
  const auto box = TransformDomain::box({-2.0}, {2.0});
  const SweepReport none = bench_contrast(ds, 0.0, 0.0, box, spec_with(5), schedule(), backend,
                                          contrast_budget(), {}, 2);
  // log gamma = 0 leaves the image untouched, so the baseline sees the original.
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    EXPECT_EQ(none.tally.per_image[i].at("baseline_label").get<int>(),
              predict(ds.items[i].image, spec_with(5).prompts, backend).label);
  }
  const SweepReport r = bench_contrast(ds, -2.0, 2.0, box, spec_with(5), schedule(), backend, contrast_budget(),
                                       {1, false, 15}, 4);
  EXPECT_EQ(r.evaluations_per_image(), 12.0);
  EXPECT_EQ(r.budget, 12);
  EXPECT_GE(r.mean_gain(), 0.0);
}

TEST(EnergyEvalTest, UprightFixtureHasLowestEnergy) {
  const Dataset ds = make_synthetic(FixtureKind::Upright, 10, 33, 5, 16);
  const SyntheticBackend backend;
  const EnergyEvalReport r = energy_eval(ds, 8, spec_with(5), schedule(), backend, {1, true, 0});
  const json m = r.metrics();
  EXPECT_EQ(m["argmin_identity_rate"], 1.0);
  EXPECT_EQ(m["upright_below_quarter_rate"], 1.0);
  EXPECT_EQ(m["angles"].size(), 8u);
}

TEST(GateEvalTest, SeparatesUprightFromRotated) {
  const Dataset ds = make_synthetic(FixtureKind::Upright, 10, 33, 5, 17);
  const SyntheticBackend backend;
  const GateReport r = gate_eval(ds, 8, spec_with(5), schedule(), backend, 0.05, {1, true, 0});
  EXPECT_EQ(r.true_pos, 10);
  EXPECT_EQ(r.false_neg, 0);
  EXPECT_EQ(r.false_pos, 0);
  EXPECT_EQ(r.true_neg, 70);
}

TEST(BoSyntheticTest, LowDimensionalFunctions) {
  const BoSyntheticReport r = bench_bo_synthetic({"bowl-2d", "two-basin", "contrast-1d"}, 10, 0, 1);
  ASSERT_EQ(r.functions.size(), 3u);
  EXPECT_GE(r.functions[0].successes, 9);
  EXPECT_EQ(r.functions[0].evaluations, 35 * 10);
  EXPECT_GE(r.functions[1].successes, 8);
  EXPECT_EQ(r.functions[2].evaluations, 12 * 10);
  EXPECT_THROW(bench_bo_synthetic({"rosenbrock"}, 1, 0, 1), ConfigError);
}

TEST(BoSyntheticTest, SixDimensionalInstanceShape) {
  const FunctionInstance in = bowl_6d().make(3);
  EXPECT_EQ(in.domain.dim(), 6);
  EXPECT_EQ(in.config.budget(), 600);
  EXPECT_EQ(in.f(in.oracle_point), 0.0);
}

// ---------------------------------------------------------------------------
// run() and reports
// ---------------------------------------------------------------------------

RunConfig rotation_config(const fs::path& out, int count = 12) {
  RunConfig c = parse_config_string("[dataset]\nsynthetic = \"upright\"\nsize = 17\n[transform]\nn = 8\n");
  c.dataset.count = count;
  c.task = Task::BenchRotation;
  c.out = out;
  c.seed = 21;
  c.crop_disk = true;
  return c;
}

TEST(RunTest, RotationReportFiles) {
  TempDir dir;
  std::ostringstream log;
  ASSERT_EQ(run(rotation_config(dir / "out"), log), kExitOk) << log.str();
  const json r = read_json(dir / "out/report.json");
  EXPECT_EQ(r["schema"], 1);
  EXPECT_EQ(r["task"], "bench-rotation");
  EXPECT_EQ(r["seeds"]["seed"], 21);
  EXPECT_EQ(r["prompts"].size(), 5u);
  EXPECT_EQ(r["prompts"][0], "a photo of a class0");
  EXPECT_EQ(r["policy"]["crop_disk"], true);
  EXPECT_EQ(r["metrics"]["pose_accuracy"], 1.0);
  EXPECT_EQ(r["config_digest"], rotation_config(dir / "other").digest());

  std::istringstream csv(read_file(dir / "out/summary.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header.rfind("angle,baseline_acc,canon_acc,", 0), 0u) << header;
  EXPECT_NE(header.find("config_digest"), std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(csv, line);) {
    ++rows;
    EXPECT_NE(line.find(r["config_digest"].get<std::string>()), std::string::npos);
  }
  EXPECT_EQ(rows, 8);

  std::istringstream lines(read_file(dir / "out/per_image.jsonl"));
  int records = 0;
  for (std::string line; std::getline(lines, line);) {
    EXPECT_TRUE(json::parse(line).contains("trials"));
    ++records;
  }
  EXPECT_EQ(records, 12);
}

TEST(RunTest, IdenticalConfigsGiveIdenticalReports) {
  TempDir dir;
  std::ostringstream log;
  RunConfig a = rotation_config(dir / "a");
  RunConfig b = rotation_config(dir / "b");
  b.workers = 3;
  ASSERT_EQ(run(a, log), kExitOk);
  ASSERT_EQ(run(b, log), kExitOk);
  json ra = read_json(dir / "a/report.json");
  json rb = read_json(dir / "b/report.json");
  ra.erase("timestamp");
  rb.erase("timestamp");
  EXPECT_EQ(ra.dump(), rb.dump());
  EXPECT_EQ(read_file(dir / "a/summary.csv"), read_file(dir / "b/summary.csv"));
  EXPECT_EQ(read_file(dir / "a/per_image.jsonl"), read_file(dir / "b/per_image.jsonl"));
}

TEST(RunTest, EmptyDatasetWarnsAndSucceeds) {
  TempDir dir;
  std::ostringstream log;
  ASSERT_EQ(run(rotation_config(dir / "out", 0), log), kExitOk);
  EXPECT_NE(log.str().find("warning"), std::string::npos);
  const json m = read_json(dir / "out/report.json")["metrics"];
  EXPECT_EQ(m["images"], 0);
  EXPECT_EQ(m["trials"], 0);
  EXPECT_EQ(m["pose_accuracy"], 0.0);
}

TEST(RunTest, ExitCodes) {
  TempDir dir;
  std::ostringstream log;
  RunConfig c = rotation_config(dir / "out");
  c.dataset.synthetic.reset();
  c.dataset.manifest = dir / "missing.csv";
  EXPECT_EQ(run(c, log), kExitConfig);

  c = rotation_config(dir / "out");
  c.backend.kind = "remote";
  c.backend.url = "http://127.0.0.1:9";
  c.backend.timeout_ms = 200;
  c.backend.retries = 0;
  log.str("");
  EXPECT_EQ(run(c, log), kExitBackend);
  EXPECT_NE(log.str().find("http://127.0.0.1:9"), std::string::npos) << log.str();

  c = rotation_config(dir / "out");
  c.dataset.prompts = {"a", "b"};  // labels 2..4 have no prompt; some images still succeed
  EXPECT_EQ(run(c, log), kExitOk);
  EXPECT_GT(read_json(dir / "out/report.json")["skipped"].size(), 0u);

  c.dataset.prompts = {};
  c.dataset.prompts_file = dir / "nope.txt";
  EXPECT_EQ(run(c, log), kExitConfig);
}

TEST(RunTest, AllImagesFailingIsAnError) {
  TempDir dir;
  const Dataset ds = make_synthetic(FixtureKind::Upright, 3, 17, 3, 1);
  Dataset shifted = ds;
  for (auto& item : shifted.items) item.label += 3;
  write_dataset(shifted, dir / "data");
  RunConfig c = rotation_config(dir / "out");
  c.dataset.synthetic.reset();
  c.dataset.manifest = dir / "data/manifest.csv";
  c.dataset.prompts = {"a", "b", "c"};
  std::ostringstream log;
  EXPECT_EQ(run(c, log), kExitFailure) << log.str();
  EXPECT_NE(log.str().find("every image failed"), std::string::npos);
}

TEST(RunTest, RemoteBackendThroughStubServer) {
  const SyntheticBackend inner;
  bridge::BackendServer server(inner, schedule());
  TempDir dir;
  RunConfig c = rotation_config(dir / "out", 6);
  c.backend.kind = "remote";
  c.backend.url = server.url();
  c.backend.image_size = {17, 17};
  std::ostringstream log;
  ASSERT_EQ(run(c, log), kExitOk) << log.str();
  const json r = read_json(dir / "out/report.json");
  EXPECT_EQ(r["backend"], "remote:" + server.url());
  EXPECT_EQ(r["metrics"]["pose_accuracy"], 1.0);
}

TEST(RunTest, BoSyntheticTask) {
  TempDir dir;
  RunConfig c = parse_config_string("[task]\nname = \"bench-bo-synthetic\"\n[bo]\nfunctions = [\"bowl-2d\"]\nseeds = 5\n");
  c.out = dir / "out";
  std::ostringstream log;
  ASSERT_EQ(run(c, log), kExitOk) << log.str();
  const json f = read_json(dir / "out/report.json")["metrics"]["functions"][0];
  EXPECT_EQ(f["function"], "bowl-2d");
  EXPECT_EQ(f["evaluations_per_run"], 35.0);
}

// ---------------------------------------------------------------------------
// CLI binary
// ---------------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CANON_ENGINE_PATH) + " " + args + " 2>" + log.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliTest, CanonTaskOnOneImage) {
  TempDir dir;
  std::mt19937_64 rng(30);
  save_png(rotate(fixtures::upright_scene(17, rng, 1), 90.0), dir / "input.png");
  write_file(dir / "run.toml", "[dataset]\nimage = \"input.png\"\nclasses = 3\n[transform]\nn = 4\n");
  ASSERT_EQ(run_cli("canon --config " + (dir / "run.toml").string() + " --out " + (dir / "out").string(),
                    dir / "log.txt"),
            0)
      << read_file(dir / "log.txt");
  EXPECT_TRUE(fs::exists(dir / "out/canonical/input.png"));
  const json trace = read_json(dir / "out/traces/input.json");
  EXPECT_EQ(trace["best_point"][0], 270.0);
  EXPECT_EQ(trace["trace"]["evaluations"].size(), 4u);
}

TEST(CliTest, ExitCodesAndMessages) {
  TempDir dir;
  write_file(dir / "missing.toml", "[dataset]\nmanifest = \"nope.csv\"\n");
  EXPECT_EQ(run_cli("bench-rotation --config " + (dir / "missing.toml").string(), dir / "log.txt"), 2);
  EXPECT_NE(read_file(dir / "log.txt").find("nope.csv"), std::string::npos);

  write_file(dir / "remote.toml",
             "[dataset]\nsynthetic = \"upright\"\ncount = 2\n[backend]\nkind = \"remote\"\n"
             "url = \"http://127.0.0.1:9\"\ntimeout_ms = 200\nretries = 0\n");
  EXPECT_EQ(run_cli("bench-rotation --config " + (dir / "remote.toml").string() + " --out " +
                        (dir / "o").string(),
                    dir / "log.txt"),
            3);
  EXPECT_NE(read_file(dir / "log.txt").find("http://127.0.0.1:9"), std::string::npos);

  EXPECT_EQ(run_cli("no-such-task --config x", dir / "log.txt"), 2);
  EXPECT_EQ(run_cli("bench-rotation", dir / "log.txt"), 2);
}

TEST(CliTest, OverridesAndFixtures) {
  TempDir dir;
  ASSERT_EQ(run_cli("make-fixture --kind upright --count 4 --size 17 --classes 3 --out " + (dir / "data").string(),
                    dir / "log.txt"),
            0);
  EXPECT_TRUE(fs::exists(dir / "data/manifest.csv"));
  write_file(dir / "run.toml", "[dataset]\nmanifest = \"data/manifest.csv\"\n[transform]\nn = 4\n");
  ASSERT_EQ(run_cli("bench-rotation --config " + (dir / "run.toml").string() + " --out " + (dir / "out").string() +
                        " --workers 2 --seed 9 --crop-disk",
                    dir / "log.txt"),
            0)
      << read_file(dir / "log.txt");
  const json r = read_json(dir / "out/report.json");
  EXPECT_EQ(r["seeds"]["seed"], 9);
  EXPECT_EQ(r["policy"]["crop_disk"], true);
  EXPECT_EQ(r["metrics"]["images"], 4);
}

}  // namespace
}  // namespace canon::bench
