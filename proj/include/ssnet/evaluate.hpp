#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssnet/archive.hpp"
#include "ssnet/morphology.hpp"
#include "ssnet/run.hpp"
#include "ssnet/stats.hpp"
#include "ssnet/training.hpp"

namespace ssnet {

// Per-slice argmax of the generator logits (ties go to background), slices
// assembled back along the view axis.
template <typename T>
Mask segment_volume(const Volume& v, Generator<T>& g, ViewAxis view, int batch = 8) {
  const int s = g.spec().input_size;
  if (!(v.dims == Dims{s, s, s}))
    throw std::invalid_argument("volume dims " + v.dims.str() + " do not match model input size " +
                                std::to_string(s));
  const Tensor<T> slices = volume_slices<T>(v, view);
  std::vector<Image2D<std::uint8_t>> labels(s, Image2D<std::uint8_t>(s, s));
  for (int at = 0; at < s; at += batch) {
    const int count = std::min(batch, s - at);
    std::vector<int> idx(count);
    std::iota(idx.begin(), idx.end(), at);
    const Tensor<T> logits = g.forward(gather(slices, idx));
    for (int k = 0; k < count; ++k) {
      const T* bg = logits.channel(k, 0);
      const T* fg = logits.channel(k, 1);
      auto& out = labels[at + k].data;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = fg[i] > bg[i] ? 1 : 0;
    }
  }
  Mask m = assemble_volume(labels, view, v.spacing_mm);
  m.contrast = v.contrast;
  return m;
}

// Union of any number of view masks; morphology is applied only when more
// than one view contributes.
inline Mask fuse_masks(const std::vector<Mask>& views, const FusionConfig& cfg) {
  if (views.empty()) throw std::invalid_argument("fuse_masks: no views");
  if (views.size() == 3) return fuse_views(views[0], views[1], views[2], cfg);
  Mask u = views[0];
  for (std::size_t k = 1; k < views.size(); ++k) {
    require_same_dims(u, views[k], "fuse_masks");
    for (std::size_t i = 0; i < u.data.size(); ++i) u.data[i] |= views[k].data[i];
  }
  if (views.size() == 1) return u;
  cfg.validate();
  return close_mask(open_mask(u, cfg.element, cfg.open_radius), cfg.element, cfg.close_radius);
}

// ---------------------------------------------------------------------------
// Report

struct EvalRow {
  int epoch = 0;
  std::string scan_id;
  std::string method;
  double dsc = 0;
  double pred_cc = 0;
  double true_cc = 0;
};

struct Aggregate {
  int epoch = 0;
  std::string method;
  Summary dsc;
};

struct TestResult {
  int epoch = 0;
  std::string method;
  std::string reference;
  std::optional<WilcoxonResult> result;  // empty when there were too few pairs
  std::string note;
  [[nodiscard]] bool significant() const { return result && result->p < 0.01; }
};

struct FusionCheck {
  std::string method;  // fused label
  int epoch = 0;
  double fused_mean = 0, union_mean = 0;
  [[nodiscard]] bool ok() const { return fused_mean >= union_mean - 0.02; }
};

struct MetricsReport {
  std::string reference;
  std::vector<std::string> methods;  // first-seen order
  std::vector<EvalRow> rows;
  std::vector<Aggregate> aggregates;
  std::vector<TestResult> tests;
  std::vector<FusionCheck> fusion_checks;

  [[nodiscard]] const Aggregate* find(int epoch, const std::string& method) const {
    for (const auto& a : aggregates)
      if (a.epoch == epoch && a.method == method) return &a;
    return nullptr;
  }
};

// Aggregates per (epoch, method), Wilcoxon tests of every method against the
// reference at every epoch, and the fused-vs-union check; reads rows only.
inline void finalize_report(MetricsReport& r, const std::string& reference = {}) {
  r.methods.clear();
  for (const auto& row : r.rows)
    if (std::find(r.methods.begin(), r.methods.end(), row.method) == r.methods.end())
      r.methods.push_back(row.method);
  r.reference = reference;
  if (r.reference.empty()) {
    for (const auto& m : r.methods)
      if (m.size() >= 9 && m.compare(m.size() - 9, 9, "-3v-fused") == 0) r.reference = m;
    if (r.reference.empty() && !r.methods.empty()) r.reference = r.methods.back();
  }
  std::vector<int> epochs;
  for (const auto& row : r.rows)
    if (std::find(epochs.begin(), epochs.end(), row.epoch) == epochs.end()) epochs.push_back(row.epoch);
  std::sort(epochs.begin(), epochs.end());

  // (epoch, method) -> scan -> dsc
  std::map<std::pair<int, std::string>, std::map<std::string, double>> by;
  for (const auto& row : r.rows) by[{row.epoch, row.method}][row.scan_id] = row.dsc;

  r.aggregates.clear();
  r.tests.clear();
  r.fusion_checks.clear();
  for (int e : epochs) {
    for (const auto& m : r.methods) {
      auto it = by.find({e, m});
      if (it == by.end()) continue;
      std::vector<double> xs;
      for (const auto& [id, d] : it->second) xs.push_back(d);
      r.aggregates.push_back({e, m, summarize(xs)});
    }
    auto ref = by.find({e, r.reference});
    if (ref == by.end()) continue;
    for (const auto& m : r.methods) {
      if (m == r.reference) continue;
      auto it = by.find({e, m});
      if (it == by.end()) continue;
      std::vector<double> x, y;
      for (const auto& [id, d] : it->second) {
        auto j = ref->second.find(id);
        if (j == ref->second.end()) continue;
        x.push_back(d);
        y.push_back(j->second);
      }
      TestResult t{e, m, r.reference, std::nullopt, {}};
      try {
        t.result = wilcoxon_signed_rank(x, y);
      } catch (const TooFewPairsError& ex) {
        t.note = std::string("insufficient pairs: ") + ex.what();
      }
      r.tests.push_back(std::move(t));
    }
    for (const auto& m : r.methods) {
      if (m.size() < 6 || m.compare(m.size() - 6, 6, "-fused") != 0) continue;
      const std::string u = m.substr(0, m.size() - 6) + "-union";
      const Aggregate* fa = nullptr;
      const Aggregate* ua = nullptr;
      for (const auto& a : r.aggregates) {
        if (a.epoch == e && a.method == m) fa = &a;
        if (a.epoch == e && a.method == u) ua = &a;
      }
      if (fa && ua) r.fusion_checks.push_back({m, e, fa->dsc.mean, ua->dsc.mean});
    }
  }
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  std::optional<int> epoch;  // empty: every epoch of each run
  bool fuse = true;          // emit fused three-view masks (otherwise union only)
  std::optional<FusionConfig> fusion;  // overrides the run's fusion settings
  std::string reference;
  int jobs = 1;
};

namespace detail {

struct TestScan {
  const CohortEntry* entry;
  Volume volume;  // on the model grid
  Mask truth;     // on the model grid
  double true_cc;
};

// Per-scan work fanned out to at most jobs threads; results keep input order.
template <typename F>
auto parallel_map(std::size_t n, int jobs, F f) {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> out(n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<R>> fut;
    for (std::size_t i = at; i < std::min(n, at + static_cast<std::size_t>(jobs)); ++i)
      fut.push_back(std::async(std::launch::async, f, i));
    for (std::size_t i = 0; i < fut.size(); ++i) out[at + i] = fut[i].get();
  }
  return out;
}

}  // namespace detail

// Rows for every run x epoch x test scan x method label. Axial-only runs
// yield "{prefix}-axial"; three-view runs yield one label per view plus
// "{prefix}-3v-union" and, when fusing, "{prefix}-3v-fused".
inline MetricsReport evaluate_runs(const std::vector<fs::path>& runs, const Manifest& m,
                                   const fs::path& manifest_dir, const EvalOptions& opt = {}) {
  if (runs.empty()) throw std::invalid_argument("evaluate: no runs given");
  const auto test = m.split("test");
  if (test.empty()) throw std::invalid_argument("manifest has no test scans");
  MetricsReport report;
  std::map<int, std::vector<detail::TestScan>> scans_by_size;
  for (const auto& run : runs) {
    const RunConfig rc = read_run_config(run);
    const int s = rc.generator.input_size;
    auto& scans = scans_by_size[s];
    if (scans.empty()) {
      for (const auto* e : test) {
        const Mask truth = read_mask(manifest_dir / e->mask_path);
        scans.push_back({e, to_model_grid(read_volume(manifest_dir / e->volume_path), s), to_model_grid(truth, s),
                         volume_cc(truth)});
      }
    }
    const FusionConfig fcfg = opt.fusion.value_or(rc.fusion);
    const std::string prefix = rc.method_prefix();
    const auto& views = rc.train.views;
    std::vector<int> epochs;
    if (opt.epoch) {
      if (*opt.epoch < 1 || *opt.epoch > rc.train.epochs)
        throw std::invalid_argument("run " + run.string() + " has no epoch " + std::to_string(*opt.epoch));
      epochs = {*opt.epoch};
    } else {
      for (int k = 1; k <= rc.train.epochs; ++k) epochs.push_back(k);
    }
    for (int epoch : epochs) {
      // masks[view][scan]
      std::vector<std::vector<Mask>> masks;
      for (ViewAxis v : views) {
        if (rc.predictor == "ground-truth") {
          std::vector<Mask> gt;
          for (const auto& sc : scans) gt.push_back(sc.truth);
          masks.push_back(std::move(gt));
          continue;
        }
        const fs::path ck = checkpoint_dir(run, v, epoch);
        if (!fs::exists(ck / "generator.bin")) throw std::runtime_error("missing checkpoint " + ck.string());
        const Generator<float> g = load_generator<float>(ck);
        masks.push_back(detail::parallel_map(scans.size(), opt.jobs, [&](std::size_t i) {
          Generator<float> local = g;
          return segment_volume(scans[i].volume, local, v);
        }));
      }
      for (std::size_t i = 0; i < scans.size(); ++i) {
        const auto& sc = scans[i];
        auto row = [&](const std::string& method, const Mask& pred) {
          report.rows.push_back({epoch, sc.entry->id, method, dsc(pred, sc.truth), volume_cc(pred), sc.true_cc});
        };
        if (rc.regime == Regime::AxialOnly) {
          row(prefix + "-axial", masks[0][i]);
          continue;
        }
        std::vector<Mask> per;
        for (std::size_t k = 0; k < views.size(); ++k) {
          row(prefix + "-3v-" + to_string(views[k]), masks[k][i]);
          per.push_back(masks[k][i]);
        }
        FusionConfig none = fcfg;
        none.open_radius = none.close_radius = 0;
        row(prefix + "-3v-union", fuse_masks(per, none));
        if (opt.fuse) row(prefix + "-3v-fused", fuse_masks(per, fcfg));
      }
    }
  }
  finalize_report(report, opt.reference);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

inline std::string rows_csv(const MetricsReport& r) {
  std::string out = "epoch,scan_id,method,dsc,pred_volume_cc,true_volume_cc\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.epoch) + "," + row.scan_id + "," + row.method + "," + fmt_num(row.dsc) + "," +
           fmt_num(row.pred_cc) + "," + fmt_num(row.true_cc) + "\n";
  return out;
}

inline std::string epoch_curve_csv(const MetricsReport& r) {
  std::string out = "epoch,method,mean_dsc,median_dsc\n";
  for (const auto& a : r.aggregates)
    out += std::to_string(a.epoch) + "," + a.method + "," + fmt_num(a.dsc.mean) + "," + fmt_num(a.dsc.median) + "\n";
  return out;
}

inline nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json aggs = nlohmann::json::array(), tests = nlohmann::json::array(),
                 checks = nlohmann::json::array();
  for (const auto& a : r.aggregates)
    aggs.push_back({{"epoch", a.epoch},
                    {"method", a.method},
                    {"n", a.dsc.n},
                    {"mean_dsc", a.dsc.mean},
                    {"median_dsc", a.dsc.median},
                    {"std_dsc", a.dsc.std},
                    {"min_dsc", a.dsc.min},
                    {"max_dsc", a.dsc.max}});
  for (const auto& t : r.tests) {
    nlohmann::json j{{"epoch", t.epoch}, {"method", t.method}, {"reference", t.reference}};
    if (t.result) {
      j["W"] = t.result->w;
      j["p"] = t.result->p;
      j["n"] = t.result->n;
      j["exact"] = t.result->exact;
      j["significant_p_lt_0.01"] = t.significant();
    } else {
      j["W"] = nullptr;
      j["p"] = nullptr;
      j["significant_p_lt_0.01"] = false;
      j["note"] = t.note;
    }
    tests.push_back(std::move(j));
  }
  for (const auto& c : r.fusion_checks)
    checks.push_back({{"epoch", c.epoch},
                      {"method", c.method},
                      {"fused_mean_dsc", c.fused_mean},
                      {"union_mean_dsc", c.union_mean},
                      {"fused_ge_union_minus_0.02", c.ok()}});
  return {{"format", "ssnet-metrics-1"},
          {"reference", r.reference},
          {"methods", r.methods},
          {"aggregates", aggs},
          {"tests", tests},
          {"fusion_checks", checks}};
}

inline void write_text_file(const std::string& text, const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// metrics_rows.csv, metrics.json and epoch_curve.csv under dir.
inline void write_report(const MetricsReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_text_file(rows_csv(r), dir / "metrics_rows.csv");
  write_json_file(report_json(r), dir / "metrics.json");
  write_text_file(epoch_curve_csv(r), dir / "epoch_curve.csv");
}

// ---------------------------------------------------------------------------
// Inference

// Segments one volume with the requested views of a run at one epoch.
inline Mask infer_volume(const fs::path& run, int epoch, const std::vector<ViewAxis>& views, const Volume& v,
                         const std::optional<FusionConfig>& fusion = std::nullopt) {
  const RunConfig rc = read_run_config(run);
  if (views.empty()) throw std::invalid_argument("infer: no views requested");
  std::vector<Mask> masks;
  for (ViewAxis view : views) {
    if (std::find(rc.train.views.begin(), rc.train.views.end(), view) == rc.train.views.end())
      throw std::invalid_argument("run was not trained on the " + to_string(view) + " view");
    const fs::path ck = checkpoint_dir(run, view, epoch);
    if (!fs::exists(ck / "generator.bin")) throw std::runtime_error("missing checkpoint " + ck.string());
    Generator<float> g = load_generator<float>(ck);
    masks.push_back(segment_volume(v, g, view));
  }
  return fuse_masks(masks, fusion.value_or(rc.fusion));
}

}  // namespace ssnet
