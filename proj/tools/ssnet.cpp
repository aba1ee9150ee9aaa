// ssnet — phantom | train | evaluate | infer

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssnet/ssnet.hpp"

namespace fs = std::filesystem;
using namespace ssnet;

namespace {

std::vector<ViewAxis> parse_views(const std::string& s) {
  std::vector<ViewAxis> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(view_from_string(item));
  if (out.empty()) throw std::invalid_argument("--views is empty");
  return out;
}

struct PhantomArgs {
  int n_train = 8, n_test = 4, grid = 64, jobs = 1;
  std::uint64_t seed = 0;
  double spacing = 4.0, t1 = 24, t2 = 21;
  std::string out;
};

int cmd_phantom(const PhantomArgs& a) {
  if (a.n_train < 1 || a.n_test < 1) throw std::invalid_argument("--n-train and --n-test must be >= 1");
  if (a.jobs < 1) throw std::invalid_argument("--jobs must be >= 1");
  PhantomConfig base;
  base.grid_size = a.grid;
  base.spacing_mm = {a.spacing, a.spacing, a.spacing};
  base.validate();
  const Manifest m = sample_cohort(a.n_train, a.n_test, ModeSplit{a.t1, a.t2}, a.seed, base);
  for (const auto& e : m.entries) e.config.validate();
  const fs::path dir = a.out;
  fs::create_directories(dir);
  const auto scans = detail::parallel_map(m.entries.size(), a.jobs,
                                          [&](std::size_t i) { return generate_phantom(m.entries[i].config); });
  for (std::size_t i = 0; i < scans.size(); ++i) {
    write_mvol(scans[i].volume, dir / m.entries[i].volume_path);
    write_mvol(scans[i].mask, dir / m.entries[i].mask_path);
  }
  write_json_file(manifest_to_json(m), dir / "manifest.json");
  std::cout << "wrote " << m.entries.size() << " scans and manifest.json to " << dir.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string manifest, regime, out, config;
  std::optional<int> epochs, batch_size;
  std::optional<double> lambda, lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> label;
  bool no_gan = false, paper_scale = false, resume = false, quiet = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig rc;
  if (!a.config.empty()) rc = read_json_file(a.config).get<RunConfig>();
  if (a.paper_scale) {
    rc.generator = GeneratorSpec::paper_scale();
    rc.discriminator = DiscriminatorSpec::paper_scale();
  }
  if (!a.manifest.empty()) rc.manifest = a.manifest;
  if (rc.manifest.empty()) throw std::invalid_argument("--manifest is required");
  if (!a.regime.empty()) rc.regime = regime_from_string(a.regime);
  rc.train.views = regime_views(rc.regime);
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.batch_size) rc.train.batch_size = *a.batch_size;
  if (a.lambda) rc.train.lambda = *a.lambda;
  if (a.lr) rc.train.lr = *a.lr;
  if (a.seed) rc.train.seed = *a.seed;
  if (a.label) rc.label = *a.label;
  if (a.no_gan) rc.train.gan_enabled = false;
  if (!a.out.empty()) rc.run_dir = a.out;
  if (rc.run_dir.empty()) throw std::invalid_argument("--out is required");

  ExperimentLog log;
  if (!a.quiet) log.message = [](const std::string& s) { std::cerr << s << "\n"; };
  const auto ck = train_run(rc, a.resume, log);
  const fs::path run = rc.run_dir;
  std::cout << "wrote " << ck.size() << " checkpoints under " << run.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::vector<std::string> runs;
  std::string manifest, epochs = "all", out, reference, element;
  std::optional<int> open_radius, close_radius;
  bool fuse = false;
  int jobs = 1;
};

int cmd_evaluate(const EvalArgs& a) {
  if (a.runs.empty()) throw std::invalid_argument("--run is required");
  std::vector<fs::path> runs(a.runs.begin(), a.runs.end());
  const RunConfig first = read_run_config(runs[0]);
  const std::string manifest = a.manifest.empty() ? first.manifest : a.manifest;
  if (manifest.empty()) throw std::invalid_argument("--manifest is required");
  EvalOptions opt;
  opt.fuse = a.fuse;
  opt.jobs = a.jobs;
  opt.reference = a.reference;
  if (a.epochs != "all") {
    try {
      opt.epoch = std::stoi(a.epochs);
    } catch (const std::exception&) {
      throw std::invalid_argument("--epochs must be 'all' or an epoch number");
    }
  }
  if (a.open_radius || a.close_radius || !a.element.empty()) {
    FusionConfig f = first.fusion;
    if (a.open_radius) f.open_radius = *a.open_radius;
    if (a.close_radius) f.close_radius = *a.close_radius;
    if (!a.element.empty()) f.element = element_from_string(a.element);
    f.validate();
    opt.fusion = f;
  }
  const Manifest m = read_manifest(manifest);
  const MetricsReport r = evaluate_runs(runs, m, fs::path(manifest).parent_path(), opt);
  const fs::path out = a.out.empty() ? runs[0] / "eval" : fs::path(a.out);
  write_report(r, out);

  int last = 0;
  for (const auto& ag : r.aggregates) last = std::max(last, ag.epoch);
  std::printf("%-22s %8s %8s %8s\n", "method", "mean", "median", "std");
  for (const auto& ag : r.aggregates)
    if (ag.epoch == last)
      std::printf("%-22s %8.4f %8.4f %8.4f\n", ag.method.c_str(), ag.dsc.mean, ag.dsc.median, ag.dsc.std);
  for (const auto& t : r.tests)
    if (t.epoch == last) {
      if (t.result)
        std::printf("%s vs %s: W=%g p=%.4g%s\n", t.method.c_str(), t.reference.c_str(), t.result->w, t.result->p,
                    t.significant() ? " (p<0.01)" : "");
      else
        std::printf("%s vs %s: %s\n", t.method.c_str(), t.reference.c_str(), t.note.c_str());
    }
  std::cout << "report written to " << out.string() << "\n";
  return 0;
}

struct InferArgs {
  std::string run, input, output, views, element;
  std::optional<int> epoch, open_radius, close_radius;
};

int cmd_infer(const InferArgs& a) {
  const RunConfig rc = read_run_config(a.run);
  const int epoch = a.epoch.value_or(rc.train.epochs);
  const std::vector<ViewAxis> views = a.views.empty() ? rc.train.views : parse_views(a.views);
  FusionConfig f = rc.fusion;
  if (a.open_radius) f.open_radius = *a.open_radius;
  if (a.close_radius) f.close_radius = *a.close_radius;
  if (!a.element.empty()) f.element = element_from_string(a.element);
  f.validate();
  const Volume v = read_volume(a.input);
  const Mask m = infer_volume(a.run, epoch, views, v, f);
  write_mvol(m, a.output);
  std::cout << "wrote " << a.output << " (" << voxel_count(m) << " voxels, " << volume_cc(m) << " cc)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSNet splenomegaly segmentation: phantom cohorts, training, evaluation, inference"};
  app.require_subcommand(1);

  PhantomArgs pa;
  auto* ph = app.add_subcommand("phantom", "generate a synthetic cohort and manifest");
  ph->add_option("--n-train", pa.n_train, "training scans")->capture_default_str();
  ph->add_option("--n-test", pa.n_test, "test scans")->capture_default_str();
  ph->add_option("--grid", pa.grid, "cubic grid size")->capture_default_str();
  ph->add_option("--seed", pa.seed, "cohort seed")->capture_default_str();
  ph->add_option("--spacing", pa.spacing, "minimum isotropic spacing in mm")->capture_default_str();
  ph->add_option("--t1-weight", pa.t1, "relative share of T1 scans")->capture_default_str();
  ph->add_option("--t2-weight", pa.t2, "relative share of T2 scans")->capture_default_str();
  ph->add_option("--jobs", pa.jobs, "worker threads")->capture_default_str();
  ph->add_option("--out", pa.out, "output directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train one network per view of a regime");
  tr->add_option("--manifest", ta.manifest, "cohort manifest.json");
  tr->add_option("--regime", ta.regime, "axial | three-view");
  tr->add_option("--epochs", ta.epochs, "epochs");
  tr->add_option("--batch-size", ta.batch_size, "slices per batch");
  tr->add_option("--lambda", ta.lambda, "weight of the adversarial term");
  tr->add_option("--lr", ta.lr, "Adam learning rate");
  tr->add_option("--seed", ta.seed, "run seed");
  tr->add_option("--label", ta.label, "method-label prefix for reports");
  tr->add_flag("--no-gan", ta.no_gan, "train the plain GCN baseline (no discriminator)");
  tr->add_flag("--paper-scale", ta.paper_scale, "S=512 with paper-scale channel widths");
  tr->add_flag("--resume", ta.resume, "continue from the latest checkpoint of each view");
  tr->add_flag("--quiet", ta.quiet, "no per-epoch progress");
  tr->add_option("--config", ta.config, "run_config.json to start from (flags override)");
  tr->add_option("--out", ta.out, "run directory");

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "DSC, volumes, epoch curves and Wilcoxon tests");
  ev->add_option("--run", ea.runs, "run directory (repeatable)")->required();
  ev->add_option("--manifest", ea.manifest, "manifest (default: the first run's)");
  ev->add_option("--epochs", ea.epochs, "all | k")->capture_default_str();
  ev->add_flag("--fuse", ea.fuse, "add union+opening+closing fused three-view masks");
  ev->add_option("--open-radius", ea.open_radius, "opening radius");
  ev->add_option("--close-radius", ea.close_radius, "closing radius");
  ev->add_option("--element", ea.element, "cross-6 | cube-26");
  ev->add_option("--reference", ea.reference, "reference method for paired tests");
  ev->add_option("--jobs", ea.jobs, "worker threads")->capture_default_str();
  ev->add_option("--out", ea.out, "report directory (default: <run>/eval)");

  InferArgs ia;
  auto* in = app.add_subcommand("infer", "segment one volume");
  in->add_option("--run", ia.run, "run directory")->required();
  in->add_option("--epoch", ia.epoch, "checkpoint epoch (default: last)");
  in->add_option("--input", ia.input, "volume .mvol")->required();
  in->add_option("--output", ia.output, "mask .mvol")->required();
  in->add_option("--views", ia.views, "comma-separated views (default: the run's)");
  in->add_option("--open-radius", ia.open_radius, "opening radius");
  in->add_option("--close-radius", ia.close_radius, "closing radius");
  in->add_option("--element", ia.element, "cross-6 | cube-26");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*ph) return cmd_phantom(pa);
    if (*tr) return cmd_train(ta);
    if (*ev) return cmd_evaluate(ea);
    if (*in) return cmd_infer(ia);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "ssnet: error: " << msg << "\n";
    return 1;
  }
  return 1;
}
