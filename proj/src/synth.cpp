#include "fvforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fvforge/error.hpp"
#include "fvforge/exec.hpp"
#include "fvforge/log.hpp"
#include "fvforge/tensor.hpp"
#include "random.hpp"

namespace fvforge {

namespace fs = std::filesystem;

namespace {

struct StreamParams {
  std::vector<std::vector<double>> fc_means;      // per class
  std::vector<std::vector<double>> prototypes;    // shared
  std::vector<std::vector<double>> proportions;   // per class, cumulative
  std::vector<std::vector<double>> channel_gain;  // per class
};

StreamParams make_params(const SynthOptions& o, std::uint64_t stream) {
  detail::Rng rng(o.seed, 1000003 + stream);
  StreamParams p;
  for (std::size_t c = 0; c < o.classes; ++c) {
    std::vector<double> m(o.fc_dim);
    for (auto& v : m) v = rng.normal();
    p.fc_means.push_back(std::move(m));
  }
  for (std::size_t j = 0; j < o.prototypes; ++j) {
    std::vector<double> proto(o.channels);
    for (auto& v : proto) v = std::abs(rng.normal());
    proto[rng.below(o.channels)] += 3.0;
    p.prototypes.push_back(std::move(proto));
  }
  for (std::size_t c = 0; c < o.classes; ++c) {
    std::vector<double> w(o.prototypes);
    double total = 0.0;
    for (auto& v : w) total += v = std::exp(2.0 * rng.normal());
    double run = 0.0;
    for (auto& v : w) v = run += v / total;
    w.back() = 1.0;
    p.proportions.push_back(std::move(w));
    std::vector<double> gain(o.channels);
    for (auto& g : gain) g = std::exp(0.3 * rng.normal());
    p.channel_gain.push_back(std::move(gain));
  }
  return p;
}

std::vector<double> softmax_view(detail::Rng& rng, std::size_t label, std::size_t classes) {
  std::vector<double> z(classes);
  for (std::size_t k = 0; k < classes; ++k) z[k] = (k == label ? 3.0 : 0.0) + rng.normal();
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) total += v = std::exp(v - mx);
  for (auto& v : z) v /= total;
  return z;
}

std::vector<double> fc_view(detail::Rng& rng, const std::vector<double>& mean, double noise) {
  std::vector<double> x(mean.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(0.0, mean[i] + 3.0 * noise * rng.normal());
  return x;
}

FeatureMap conv_view(detail::Rng& rng, const SynthOptions& o, const StreamParams& p,
                     std::size_t label, double image_scale) {
  const std::size_t n = o.map_size;
  std::vector<double> data(n * n * o.channels);
  const auto& cum = p.proportions[label];
  const auto& gain = p.channel_gain[label];
  for (std::size_t pos = 0; pos < n * n; ++pos) {
    const double u = rng.uniform();
    const std::size_t j = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    const auto& proto = p.prototypes[std::min(j, o.prototypes - 1)];
    const double strength = image_scale * (0.5 + rng.uniform());
    for (std::size_t ch = 0; ch < o.channels; ++ch) {
      const double v = strength * gain[ch] * proto[ch] + o.noise * rng.normal();
      data[pos * o.channels + ch] = std::max(0.0, v);
    }
  }
  return FeatureMap(n, n, o.channels, as_float32(data), true);
}

}  // namespace

Manifest synthesize(const SynthOptions& o, const fs::path& out_dir) {
  require(o.classes >= 2, ErrorKind::parameter, "synth: need at least two classes");
  require(o.train_per_class > 0 && o.views > 0, ErrorKind::parameter,
          "synth: images per class and views must be positive");
  require(o.fc_dim > 0 && o.map_size > 0 && o.channels > 0 && o.prototypes > 0,
          ErrorKind::parameter, "synth: shape parameters must be positive");
  require(std::isfinite(o.noise) && o.noise >= 0.0, ErrorKind::parameter,
          "synth: noise must be nonnegative");

  const StreamParams params[2] = {make_params(o, 0), make_params(o, 1)};
  Manifest m;
  for (std::size_t c = 0; c < o.classes; ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "class_%02zu", c);
    m.class_names.emplace_back(name);
  }
  const std::size_t per_class = o.train_per_class + o.test_per_class;
  for (std::size_t c = 0; c < o.classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      ManifestEntry e;
      char id[32];
      std::snprintf(id, sizeof id, "img_%05zu", m.entries.size());
      e.image_id = id;
      e.label = c;
      e.split = i < o.train_per_class ? Split::train : Split::test;
      m.entries.push_back(std::move(e));
    }
  }

  const fs::path tensor_dir = out_dir / "tensors";
  fs::create_directories(tensor_dir);
  parallel_for_index(m.entries.size(), [&](std::size_t idx) {
    ManifestEntry& e = m.entries[idx];
    const std::size_t label = *e.label;
    for (Stream stream : {Stream::object, Stream::scene}) {
      const std::size_t s = stream == Stream::object ? 0 : 1;
      detail::Rng rng(o.seed, 2 * idx + s);
      const double image_scale = 0.5 + 1.5 * rng.uniform();
      for (std::size_t v = 0; v < o.views; ++v) {
        const std::string stem =
            e.image_id + "_" + std::string(to_string(stream)) + "_v" + std::to_string(v);
        const fs::path soft = tensor_dir / (stem + "_softmax.fvt");
        const fs::path fc = tensor_dir / (stem + "_fc7.fvt");
        const fs::path conv = tensor_dir / (stem + "_conv5_3.fvt");
        write_tensor(GlobalVector(softmax_view(rng, label, o.classes)), soft);
        write_tensor(GlobalVector(fc_view(rng, params[s].fc_means[label], o.noise)), fc);
        write_tensor(conv_view(rng, o, params[s], label, image_scale), conv);
        e.views.push_back({stream, "softmax", soft});
        e.views.push_back({stream, "fc7", fc});
        e.views.push_back({stream, "conv5_3", conv});
      }
    }
  });
  save_manifest(m, out_dir / "data.manifest");
  log_kv({{"stage", "synth"},
          {"classes", std::to_string(o.classes)},
          {"images", std::to_string(m.entries.size())},
          {"views", std::to_string(o.views)},
          {"seed", std::to_string(o.seed)}});
  return m;
}

}  // namespace fvforge
