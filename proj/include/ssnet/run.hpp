#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ssnet/archive.hpp"
#include "ssnet/morphology.hpp"
#include "ssnet/phantom.hpp"
#include "ssnet/training.hpp"

namespace ssnet {

inline std::string to_string(StructuringElement e) { return e == StructuringElement::Cross6 ? "cross-6" : "cube-26"; }

inline StructuringElement element_from_string(const std::string& s) {
  if (s == "cross-6" || s == "cross6") return StructuringElement::Cross6;
  if (s == "cube-26" || s == "cube26") return StructuringElement::Cube26;
  throw std::invalid_argument("unknown structuring element '" + s + "'");
}

inline void to_json(nlohmann::json& j, const FusionConfig& c) {
  j = nlohmann::json{{"structuring_element", to_string(c.element)},
                     {"open_radius", c.open_radius},
                     {"close_radius", c.close_radius}};
}

inline void from_json(const nlohmann::json& j, FusionConfig& c) {
  FusionConfig d;
  c.element = element_from_string(j.value("structuring_element", to_string(d.element)));
  c.open_radius = j.value("open_radius", d.open_radius);
  c.close_radius = j.value("close_radius", d.close_radius);
}

// Cohort parameters the run was trained on, copied from the manifest.
struct CohortInfo {
  std::uint64_t seed = 0;
  int grid_size = 64;
  int n_train = 0;
  int n_test = 0;
};

// Everything needed to reproduce a training run. Written to
// {run}/run_config.json before any training starts.
struct RunConfig {
  std::string label;                  // method-label prefix; empty -> "ssnet" / "gcn"
  std::string predictor = "network";  // "network" | "ground-truth" (reference runs)
  Regime regime = Regime::AxialOnly;
  TrainConfig train;
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  FusionConfig fusion;
  CohortInfo cohort;
  std::string manifest;
  std::string run_dir;

  [[nodiscard]] std::string method_prefix() const {
    if (!label.empty()) return label;
    return train.gan_enabled ? "ssnet" : "gcn";
  }

  void validate() const {
    train.validate();
    generator.validate();
    if (train.gan_enabled) discriminator.validate();
    fusion.validate();
    if (predictor != "network" && predictor != "ground-truth")
      throw std::invalid_argument("unknown predictor '" + predictor + "'");
    if (regime == Regime::AxialOnly && (train.views.size() != 1 || train.views[0] != ViewAxis::Axial))
      throw std::invalid_argument("axial regime trains exactly the axial view");
    if (regime == Regime::ThreeView && train.views.size() != 3)
      throw std::invalid_argument("three-view regime trains all three views");
    if (discriminator.in_channels != 1 + generator.num_classes)
      throw std::invalid_argument("discriminator in_channels must equal 1 + num_classes");
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"format", "ssnet-run-1"},
                     {"label", c.label},
                     {"predictor", c.predictor},
                     {"regime", to_string(c.regime)},
                     {"train", c.train},
                     {"generator", c.generator},
                     {"discriminator", c.discriminator},
                     {"fusion", c.fusion},
                     {"cohort",
                      {{"seed", c.cohort.seed},
                       {"grid_size", c.cohort.grid_size},
                       {"n_train", c.cohort.n_train},
                       {"n_test", c.cohort.n_test}}},
                     {"paths", {{"manifest", c.manifest}, {"run_dir", c.run_dir}}}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  c.label = j.value("label", std::string{});
  c.predictor = j.value("predictor", std::string{"network"});
  c.regime = regime_from_string(j.value("regime", std::string{"axial"}));
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorSpec>();
  if (j.contains("discriminator")) c.discriminator = j.at("discriminator").get<DiscriminatorSpec>();
  if (j.contains("fusion")) c.fusion = j.at("fusion").get<FusionConfig>();
  if (j.contains("cohort")) {
    const auto& k = j.at("cohort");
    c.cohort.seed = k.value("seed", std::uint64_t{0});
    c.cohort.grid_size = k.value("grid_size", 64);
    c.cohort.n_train = k.value("n_train", 0);
    c.cohort.n_test = k.value("n_test", 0);
  }
  if (j.contains("paths")) {
    c.manifest = j.at("paths").value("manifest", std::string{});
    c.run_dir = j.at("paths").value("run_dir", std::string{});
  }
}

inline RunConfig read_run_config(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "run_config.json";
  if (!std::filesystem::exists(path)) throw std::runtime_error("no run_config.json in " + run_dir.string());
  return read_json_file(path).get<RunConfig>();
}

// Resolves the manifest path, records the cohort, writes run_config.json
// and trains every view of the run.
inline std::vector<std::filesystem::path> train_run(RunConfig rc, bool resume = false,
                                                    const ExperimentLog& log = {}) {
  if (rc.manifest.empty()) throw std::invalid_argument("run config has no manifest");
  if (rc.run_dir.empty()) throw std::invalid_argument("run config has no run directory");
  rc.manifest = std::filesystem::absolute(rc.manifest).lexically_normal().string();
  rc.validate();
  if (rc.predictor != "network") throw std::invalid_argument("only network runs can be trained");
  const Manifest m = read_manifest(rc.manifest);
  rc.cohort = {m.seed, m.grid_size, static_cast<int>(m.split("train").size()),
               static_cast<int>(m.split("test").size())};
  if (rc.cohort.n_train == 0) throw std::invalid_argument("manifest has no training scans");
  const std::filesystem::path run = rc.run_dir;
  std::filesystem::create_directories(run);
  write_json_file(nlohmann::json(rc), run / "run_config.json");
  return train_experiment(m, std::filesystem::path(rc.manifest).parent_path(), rc.train, rc.generator,
                          rc.discriminator, run, resume, log);
}

}  // namespace ssnet
