#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssnet/adam.hpp"
#include "ssnet/archive.hpp"
#include "ssnet/discriminator.hpp"
#include "ssnet/generator.hpp"
#include "ssnet/losses.hpp"
#include "ssnet/mvol.hpp"
#include "ssnet/phantom.hpp"
#include "ssnet/volume.hpp"

namespace ssnet {

namespace fs = std::filesystem;

struct TrainConfig {
  double lambda = 100.0;
  double lr = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 10;
  int batch_size = 4;
  std::uint64_t seed = 0;
  double dice_epsilon = 1.0;
  std::vector<ViewAxis> views{ViewAxis::Axial};
  bool gan_enabled = true;
  bool keep_empty_slices = true;

  void validate() const {
    if (!(lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(dice_epsilon >= 0)) throw std::invalid_argument("dice_epsilon must be >= 0");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1))
      throw std::invalid_argument("Adam betas must lie in [0, 1)");
    if (views.empty()) throw std::invalid_argument("at least one view is required");
    for (std::size_t i = 0; i < views.size(); ++i)
      for (std::size_t j = i + 1; j < views.size(); ++j)
        if (views[i] == views[j]) throw std::invalid_argument("duplicate view " + to_string(views[i]));
  }

  [[nodiscard]] AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, adam_eps}; }
};

enum class Regime { AxialOnly, ThreeView };

inline std::string to_string(Regime r) { return r == Regime::AxialOnly ? "axial" : "three-view"; }

inline Regime regime_from_string(const std::string& s) {
  if (s == "axial" || s == "axial-only") return Regime::AxialOnly;
  if (s == "three-view") return Regime::ThreeView;
  throw std::invalid_argument("unknown regime '" + s + "' (expected axial or three-view)");
}

inline std::vector<ViewAxis> regime_views(Regime r) {
  if (r == Regime::AxialOnly) return {ViewAxis::Axial};
  return {kAllViews.begin(), kAllViews.end()};
}

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// splitmix64 finaliser; derives independent stream seeds from one run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Slice data

// Min-max to [0, 1]; a constant slice maps to zeros.
template <typename T>
void normalize_slice(T* px, std::size_t n) {
  if (n == 0) return;
  const auto [lo, hi] = std::minmax_element(px, px + n);
  const T a = *lo, b = *hi;
  if (!(b > a)) {
    std::fill(px, px + n, T(0));
    return;
  }
  const T inv = T(1) / (b - a);
  for (std::size_t i = 0; i < n; ++i) px[i] = (px[i] - a) * inv;
}

// Resamples to s^3 when needed (trilinear for intensities, nearest for labels).
inline Volume to_model_grid(const Volume& v, int s) {
  if (v.dims == Dims{s, s, s}) return v;
  return resample_cubic(v, s, Interpolation::Trilinear);
}
inline Mask to_model_grid(const Mask& m, int s) {
  if (m.dims == Dims{s, s, s}) return m;
  return resample_cubic(m, s, Interpolation::Nearest);
}

// Normalized network input for every slice of a cubic volume: [n, 1, n, n].
template <typename T>
Tensor<T> volume_slices(const Volume& v, ViewAxis view) {
  const auto slices = extract_slices(v, view);
  const int n = static_cast<int>(slices.size());
  Tensor<T> out(n, 1, n, n);
  for (int k = 0; k < n; ++k) {
    T* dst = out.sample(k);
    for (std::size_t i = 0; i < slices[k].data.size(); ++i) dst[i] = static_cast<T>(slices[k].data[i]);
    normalize_slice(dst, slices[k].data.size());
  }
  return out;
}

// One-hot targets [n, 2, n, n]: channel 0 background, channel 1 spleen.
template <typename T>
Tensor<T> mask_slices(const Mask& m, ViewAxis view) {
  const auto slices = extract_slices(m, view);
  const int n = static_cast<int>(slices.size());
  Tensor<T> out(n, 2, n, n);
  for (int k = 0; k < n; ++k) {
    T* bg = out.channel(k, 0);
    T* fg = out.channel(k, 1);
    for (std::size_t i = 0; i < slices[k].data.size(); ++i) {
      const bool on = slices[k].data[i] != 0;
      fg[i] = on ? T(1) : T(0);
      bg[i] = on ? T(0) : T(1);
    }
  }
  return out;
}

template <typename T>
struct SliceSet {
  Tensor<T> images;   // [N, 1, S, S]
  Tensor<T> targets;  // [N, 2, S, S]
  [[nodiscard]] int size() const { return images.n(); }
};

template <typename T>
Tensor<T> gather(const Tensor<T>& src, const std::vector<int>& idx) {
  Shape s = src.shape();
  s.n = static_cast<int>(idx.size());
  Tensor<T> out(s);
  const std::size_t k = src.shape().sample();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.sample(idx[i]), k, out.sample(static_cast<int>(i)));
  return out;
}

// Every slice of one view from every training scan, in manifest order.
template <typename T>
SliceSet<T> build_slice_set(const Manifest& m, const fs::path& manifest_dir, ViewAxis view, int s,
                            bool keep_empty = true) {
  const auto train = m.split("train");
  if (train.empty()) throw std::invalid_argument("manifest has no training scans");
  std::vector<Tensor<T>> imgs, tgts;
  std::size_t total = 0;
  for (const auto* e : train) {
    const Volume v = to_model_grid(read_volume(manifest_dir / e->volume_path), s);
    const Mask mk = to_model_grid(read_mask(manifest_dir / e->mask_path), s);
    imgs.push_back(volume_slices<T>(v, view));
    tgts.push_back(mask_slices<T>(mk, view));
    total += static_cast<std::size_t>(imgs.back().n());
  }
  SliceSet<T> out{Tensor<T>(static_cast<int>(total), 1, s, s), Tensor<T>(static_cast<int>(total), 2, s, s)};
  int at = 0;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    for (int k = 0; k < imgs[i].n(); ++k) {
      if (!keep_empty) {
        const T* fg = tgts[i].channel(k, 1);
        if (std::none_of(fg, fg + tgts[i].shape().plane(), [](T v) { return v != T(0); })) continue;
      }
      std::copy_n(imgs[i].sample(k), imgs[i].shape().sample(), out.images.sample(at));
      std::copy_n(tgts[i].sample(k), tgts[i].shape().sample(), out.targets.sample(at));
      ++at;
    }
  }
  if (at != static_cast<int>(total)) {
    std::vector<int> keep(at);
    std::iota(keep.begin(), keep.end(), 0);
    out.images = gather(out.images, keep);
    out.targets = gather(out.targets, keep);
  }
  if (out.size() == 0) throw std::invalid_argument("no training slices left after filtering");
  return out;
}

// ---------------------------------------------------------------------------
// Trainer

struct StepRecord {
  std::uint64_t step = 0;
  double dice = 0, gan_g = 0, gan_d = 0, total = 0;
};

inline void to_json(nlohmann::json& j, const StepRecord& r) {
  j = nlohmann::json{{"step", r.step}, {"dice", r.dice}, {"gan_g", r.gan_g}, {"gan_d", r.gan_d}, {"total", r.total}};
}
inline void from_json(const nlohmann::json& j, StepRecord& r) {
  r.step = j.at("step").get<std::uint64_t>();
  r.dice = j.at("dice").get<double>();
  r.gan_g = j.at("gan_g").get<double>();
  r.gan_d = j.at("gan_d").get<double>();
  r.total = j.at("total").get<double>();
}

namespace detail {
template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
  Shape s = a.shape();
  s.n += b.n();
  Tensor<T> out(s);
  std::copy_n(a.data(), a.size(), out.data());
  std::copy_n(b.data(), b.size(), out.data() + a.size());
  return out;
}
template <typename T>
Tensor<T> batch_range(const Tensor<T>& a, int from, int count) {
  Shape s = a.shape();
  s.n = count;
  Tensor<T> out(s);
  std::copy_n(a.sample(from), out.size(), out.data());
  return out;
}
}  // namespace detail

// One generator/discriminator pair with its optimizers, shuffling stream and
// loss history. A step is: discriminator update on the real pair
// (image, target) and the detached fake pair (image, softmax(G(image))), then a
// generator update on dice + lambda * gan_g with gan_g scored by the updated
// discriminator.
template <typename T>
class Trainer {
 public:
  Trainer(const GeneratorSpec& gspec, const DiscriminatorSpec& dspec, const TrainConfig& cfg,
          std::uint64_t stream_seed)
      : cfg_(cfg), g_(gspec), d_(dspec), rng_(derive_seed(stream_seed, 2)) {
    cfg_.validate();
    Rng init_rng(derive_seed(stream_seed, 1));
    g_.init(init_rng);
    g_opt_ = Adam<T>(g_.params(), cfg_.adam());
    if (cfg_.gan_enabled) {
      d_.init(init_rng);
      d_opt_ = Adam<T>(d_.params(), cfg_.adam());
    }
  }

  // Generator forward for a batch; caches activations for g_step.
  Tensor<T> forward(const Tensor<T>& images) { return softmax_channels(g_.forward(images)); }

  // Discriminator update; probs is treated as a constant.
  double d_step(const Tensor<T>& images, const Tensor<T>& targets, const Tensor<T>& probs) {
    const auto dp = d_.params();
    zero_grads(dp);
    const int b = images.n();
    const Tensor<T> scores =
        d_.forward(detail::concat_batch(condition_pair(images, targets), condition_pair(images, probs)));
    const auto gl = gan_losses(detail::batch_range(scores, 0, b), detail::batch_range(scores, b, b));
    d_.backward(detail::concat_batch(gl.d_real_grad, gl.d_fake_grad));
    d_opt_.step(dp);
    return static_cast<double>(gl.loss_d);
  }

  // Generator update; must directly follow forward() on the same images.
  StepRecord g_step(const Tensor<T>& images, const Tensor<T>& targets, const Tensor<T>& probs) {
    StepRecord r;
    const auto dice = soft_dice_loss(probs, targets, cfg_.dice_epsilon);
    Tensor<T> dprobs = dice.grad;
    r.dice = static_cast<double>(dice.loss);
    if (cfg_.gan_enabled) {
      const auto dp = d_.params();
      const Tensor<T> fake = d_.forward(condition_pair(images, probs));
      const auto gl = gan_losses(fake, fake);
      r.gan_g = static_cast<double>(gl.loss_g);
      Tensor<T> ds = gl.g_fake_grad;
      const T lam = static_cast<T>(cfg_.lambda);
      for (std::size_t i = 0; i < ds.size(); ++i) ds[i] *= lam;
      const Tensor<T> dpair = d_.backward(ds);
      zero_grads(dp);  // the generator step leaves the discriminator untouched
      for (int n = 0; n < dprobs.n(); ++n)
        for (int c = 0; c < 2; ++c) {
          T* dst = dprobs.channel(n, c);
          const T* src = dpair.channel(n, 1 + c);
          for (std::size_t i = 0; i < dprobs.shape().plane(); ++i) dst[i] += src[i];
        }
    }
    r.total = ssnet_loss(r.dice, r.gan_g, cfg_.lambda);
    if (!std::isfinite(r.total)) throw NonFiniteLossError(diagnostic(r));
    const auto gp = g_.params();
    zero_grads(gp);
    g_.backward(softmax_channels_backward(probs, dprobs));
    g_opt_.step(gp);
    return r;
  }

  StepRecord step(const Tensor<T>& images, const Tensor<T>& targets) {
    StepRecord r;
    try {
      const Tensor<T> probs = forward(images);
      const double loss_d = cfg_.gan_enabled ? d_step(images, targets, probs) : 0.0;
      r = g_step(images, targets, probs);
      r.gan_d = loss_d;
    } catch (const std::domain_error& e) {
      throw NonFiniteLossError("step " + std::to_string(step_ + 1) + ": " + e.what());
    }
    r.step = ++step_;
    history_.push_back(r);
    return r;
  }

  // One pass over the data in a freshly shuffled order; the last batch may be short.
  void run_epoch(const SliceSet<T>& data, const std::function<void(const StepRecord&)>& on_step = {}) {
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg_.batch_size));
      const std::vector<int> idx(order.begin() + at, order.begin() + end);
      const auto r = step(gather(data.images, idx), gather(data.targets, idx));
      if (on_step) on_step(r);
    }
    ++epoch_;
  }

  // Checkpoint: network specs and weights, optimizer moments, counters, RNG and
  // the loss history so far.
  void save(const fs::path& dir) {
    fs::create_directories(dir);
    write_json_file(nlohmann::json(g_.spec()), dir / "generator.json");
    save_params(dir / "generator.bin", g_.params());
    save_adam(dir / "generator.adam.bin", g_opt_, g_.params());
    if (cfg_.gan_enabled) {
      write_json_file(nlohmann::json(d_.spec()), dir / "discriminator.json");
      save_params(dir / "discriminator.bin", d_.params());
      save_adam(dir / "discriminator.adam.bin", d_opt_, d_.params());
    }
    nlohmann::json st{{"epoch", epoch_},
                      {"step", step_},
                      {"generator_adam_steps", g_opt_.steps()},
                      {"discriminator_adam_steps", d_opt_.steps()},
                      {"rng", rng_.state()}};
    write_json_file(st, dir / "state.json");
    write_json_file(nlohmann::json(history_), dir / "losses.json");
  }

  void load(const fs::path& dir) {
    load_params(dir / "generator.bin", g_.params());
    load_adam(dir / "generator.adam.bin", g_opt_, g_.params());
    if (cfg_.gan_enabled) {
      load_params(dir / "discriminator.bin", d_.params());
      load_adam(dir / "discriminator.adam.bin", d_opt_, d_.params());
    }
    const auto st = read_json_file(dir / "state.json");
    epoch_ = st.at("epoch").get<int>();
    step_ = st.at("step").get<std::uint64_t>();
    g_opt_.set_steps(st.at("generator_adam_steps").get<std::uint64_t>());
    d_opt_.set_steps(st.at("discriminator_adam_steps").get<std::uint64_t>());
    rng_.set_state(st.at("rng").get<std::string>());
    history_ = read_json_file(dir / "losses.json").get<std::vector<StepRecord>>();
  }

  Generator<T>& generator() { return g_; }
  Discriminator<T>& discriminator() { return d_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] int epoch() const { return epoch_; }
  [[nodiscard]] std::uint64_t steps() const { return step_; }
  [[nodiscard]] const std::vector<StepRecord>& history() const { return history_; }

 private:
  std::string diagnostic(const StepRecord& r) const {
    std::ostringstream os;
    os.precision(9);
    os << "non-finite loss at step " << step_ + 1 << " (epoch " << epoch_ + 1 << "): dice=" << r.dice
       << " gan_g=" << r.gan_g << " lambda=" << cfg_.lambda;
    return os.str();
  }

  TrainConfig cfg_;
  Generator<T> g_;
  Discriminator<T> d_;
  Adam<T> g_opt_, d_opt_;
  Rng rng_;
  int epoch_ = 0;
  std::uint64_t step_ = 0;
  std::vector<StepRecord> history_;
};

// ---------------------------------------------------------------------------
// Experiments

inline fs::path checkpoint_dir(const fs::path& run, ViewAxis v, int epoch) {
  return run / ("view-" + to_string(v)) / ("epoch-" + std::to_string(epoch));
}

// Highest epoch with a complete checkpoint for a view, or 0.
inline int latest_epoch(const fs::path& run, ViewAxis v) {
  int best = 0;
  const fs::path dir = run / ("view-" + to_string(v));
  if (!fs::is_directory(dir)) return 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("epoch-", 0) != 0 || !fs::exists(e.path() / "state.json")) continue;
    try {
      best = std::max(best, std::stoi(name.substr(6)));
    } catch (const std::exception&) {
    }
  }
  return best;
}

struct ExperimentLog {
  std::function<void(const std::string&)> message;
};

// Trains one independent network per configured view, each on that view's
// slices of every training scan, checkpointing after every epoch. With resume,
// each view continues from its latest checkpoint.
inline std::vector<fs::path> train_experiment(const Manifest& m, const fs::path& manifest_dir,
                                              const TrainConfig& cfg, const GeneratorSpec& gspec,
                                              const DiscriminatorSpec& dspec, const fs::path& run_dir,
                                              bool resume = false, const ExperimentLog& log = {}) {
  cfg.validate();
  gspec.validate();
  if (cfg.gan_enabled) dspec.validate();
  if (dspec.in_channels != 1 + gspec.num_classes)
    throw std::invalid_argument("discriminator in_channels must equal 1 + num_classes");
  std::vector<fs::path> out;
  for (std::size_t vi = 0; vi < cfg.views.size(); ++vi) {
    const ViewAxis view = cfg.views[vi];
    const SliceSet<float> data =
        build_slice_set<float>(m, manifest_dir, view, gspec.input_size, cfg.keep_empty_slices);
    Trainer<float> tr(gspec, dspec, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(view)));
    int start = 0;
    if (resume && (start = std::min(latest_epoch(run_dir, view), cfg.epochs)) > 0)
      tr.load(checkpoint_dir(run_dir, view, start));
    for (int k = 1; k <= start; ++k) out.push_back(checkpoint_dir(run_dir, view, k));
    for (int k = start + 1; k <= cfg.epochs; ++k) {
      tr.run_epoch(data);
      const fs::path dir = checkpoint_dir(run_dir, view, k);
      tr.save(dir);
      out.push_back(dir);
      if (log.message) {
        const auto& h = tr.history();
        const std::size_t per = (static_cast<std::size_t>(data.size()) + cfg.batch_size - 1) / cfg.batch_size;
        double dice = 0, total = 0;
        for (std::size_t i = h.size() - per; i < h.size(); ++i) {
          dice += h[i].dice;
          total += h[i].total;
        }
        std::ostringstream os;
        os.precision(4);
        os << to_string(view) << " epoch " << k << "/" << cfg.epochs << ": mean dice loss " << dice / per
           << ", mean total " << total / per;
        log.message(os.str());
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  std::vector<std::string> views;
  for (auto v : c.views) views.push_back(to_string(v));
  j = nlohmann::json{{"lambda", c.lambda},
                     {"lr", c.lr},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_eps", c.adam_eps},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"dice_epsilon", c.dice_epsilon},
                     {"views", views},
                     {"gan_enabled", c.gan_enabled},
                     {"keep_empty_slices", c.keep_empty_slices}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lambda = j.value("lambda", d.lambda);
  c.lr = j.value("lr", d.lr);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.dice_epsilon = j.value("dice_epsilon", d.dice_epsilon);
  c.views.clear();
  if (j.contains("views")) {
    for (const auto& v : j.at("views")) c.views.push_back(view_from_string(v.get<std::string>()));
  } else {
    c.views = d.views;
  }
  c.gan_enabled = j.value("gan_enabled", d.gan_enabled);
  c.keep_empty_slices = j.value("keep_empty_slices", d.keep_empty_slices);
}

}  // namespace ssnet
