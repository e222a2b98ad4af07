#include "fvforge/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "fvforge/error.hpp"
#include "fvforge/log.hpp"
#include "model_header.hpp"
#include "random.hpp"

namespace fvforge {

namespace {

constexpr double kAbsoluteVarianceFloor = 1e-10;
constexpr double kMonotonicSlack = 1e-10;

double log_sum_exp(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

// Sufficient statistics of one E-step, laid out flat so they can be reduced
// chunk-wise: [loglik, N_k (K), S1 (K*d), S2 (K*d)], where S1/S2 are first
// and second moments of x - mu_k under the current means.
struct EStepLayout {
  std::size_t k, d;
  std::size_t size() const { return 1 + k + 2 * k * d; }
  std::size_t nk(std::size_t c) const { return 1 + c; }
  std::size_t s1(std::size_t c) const { return 1 + k + c * d; }
  std::size_t s2(std::size_t c) const { return 1 + k + k * d + c * d; }
};

void accumulate_point(const GmmModel& model, std::span<const double> x, const EStepLayout& L,
                      std::vector<double>& gamma, std::vector<double>& acc) {
  acc[0] += posterior(model, x, gamma);
  for (std::size_t c = 0; c < L.k; ++c) {
    const double g = gamma[c];
    if (g == 0.0) continue;
    acc[L.nk(c)] += g;
    const auto mu = model.mean(c);
    double* s1 = acc.data() + L.s1(c);
    double* s2 = acc.data() + L.s2(c);
    for (std::size_t j = 0; j < L.d; ++j) {
      const double r = x[j] - mu[j];
      s1[j] += g * r;
      s2[j] += g * r * r;
    }
  }
}

std::vector<double> e_step(const GmmModel& model, const DescriptorSet& data, Exec exec) {
  const EStepLayout L{model.components(), model.dim()};
  std::vector<double> acc(L.size(), 0.0);
  if (exec == Exec::serial) {
    std::vector<double> gamma(L.k);
    for (std::size_t i = 0; i < data.size(); ++i) accumulate_point(model, data.row(i), L, gamma, acc);
  } else {
    ordered_chunk_reduce(data.size(), acc,
                         [&](std::size_t lo, std::size_t hi, std::vector<double>& p) {
                           std::vector<double> gamma(L.k);
                           for (std::size_t i = lo; i < hi; ++i)
                             accumulate_point(model, data.row(i), L, gamma, p);
                         });
  }
  return acc;
}

DescriptorSet subsample(const DescriptorSet& data, std::size_t cap, detail::Rng& rng) {
  if (data.size() <= cap) return data;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < cap; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  std::vector<double> flat;
  flat.reserve(cap * data.dim());
  for (std::size_t i : idx) flat.insert(flat.end(), data.row(i).begin(), data.row(i).end());
  return DescriptorSet(data.dim(), std::move(flat), data.provenance());
}

std::vector<std::size_t> assign_nearest(const DescriptorSet& data,
                                        const std::vector<double>& centers, std::size_t k,
                                        Exec exec) {
  const std::size_t d = data.dim();
  std::vector<std::size_t> label(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto x = data.row(static_cast<std::size_t>(i));
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double dist =
          squared_distance(x, std::span<const double>(centers).subspan(c * d, d));
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    label[static_cast<std::size_t>(i)] = best;
  }
  return label;
}

// k-means++ seeding: first center uniform, then D^2-weighted draws.
std::vector<double> kmeanspp(const DescriptorSet& data, std::size_t k, detail::Rng& rng) {
  const std::size_t n = data.size();
  const std::size_t d = data.dim();
  std::vector<double> centers;
  centers.reserve(k * d);
  std::size_t pick = rng.below(n);
  centers.insert(centers.end(), data.row(pick).begin(), data.row(pick).end());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(data.row(i), data.row(pick));
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) {
      pick = rng.below(n);
    } else {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      pick = n;
      std::size_t last_positive = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] > 0.0) last_positive = i;
        cum += d2[i];
        if (cum > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = last_positive;
    }
    centers.insert(centers.end(), data.row(pick).begin(), data.row(pick).end());
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(data.row(i), data.row(pick)));
  }
  return centers;
}

}  // namespace

GmmModel::GmmModel(std::size_t components, std::size_t dim, std::vector<double> weights,
                   std::vector<double> means, std::vector<double> variances)
    : k_(components),
      dim_(dim),
      weights_(std::move(weights)),
      means_(std::move(means)),
      variances_(std::move(variances)) {
  require(k_ > 0 && dim_ > 0, ErrorKind::parameter, "gmm: K and dim must be positive");
  require(weights_.size() == k_ && means_.size() == k_ * dim_ && variances_.size() == k_ * dim_,
          ErrorKind::shape, "gmm: parameter arrays do not match K and dim");
  double total = 0.0;
  for (double w : weights_) {
    require(std::isfinite(w) && w > 0.0, ErrorKind::data, "gmm: weights must be positive");
    total += w;
  }
  require(std::abs(total - 1.0) <= 1e-9, ErrorKind::data, "gmm: weights do not sum to 1");
  for (double v : variances_)
    require(std::isfinite(v) && v > 0.0, ErrorKind::data, "gmm: variances must be positive");
  for (double m : means_) require(std::isfinite(m), ErrorKind::data, "gmm: non-finite mean");

  const double log2pi = std::log(2.0 * std::numbers::pi);
  log_norm_.resize(k_);
  inv_var_.resize(variances_.size());
  for (std::size_t c = 0; c < k_; ++c) {
    double log_det = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      log_det += std::log(variances_[c * dim_ + j]);
      inv_var_[c * dim_ + j] = 1.0 / variances_[c * dim_ + j];
    }
    log_norm_[c] = std::log(weights_[c]) - 0.5 * (static_cast<double>(dim_) * log2pi + log_det);
  }
}

void GmmModel::log_joint(std::span<const double> x, std::span<double> out) const {
  for (std::size_t c = 0; c < k_; ++c) {
    const double* mu = means_.data() + c * dim_;
    const double* iv = inv_var_.data() + c * dim_;
    double q = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double r = x[j] - mu[j];
      q += r * r * iv[j];
    }
    out[c] = log_norm_[c] - 0.5 * q;
  }
}

double posterior(const GmmModel& model, std::span<const double> x, std::span<double> out) {
  model.log_joint(x, out);
  const double lse = log_sum_exp(out);
  for (double& v : out) v = std::exp(v - lse);
  return lse;
}

Responsibilities responsibilities(const GmmModel& model, const DescriptorSet& descriptors,
                                  Exec exec) {
  require(descriptors.dim() == model.dim(), ErrorKind::shape,
          "gmm: descriptor dim does not match model dim");
  const std::size_t k = model.components();
  Responsibilities r{descriptors.size(), k, std::vector<double>(descriptors.size() * k)};
  const auto n = static_cast<std::ptrdiff_t>(descriptors.size());
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto row = std::span<double>(r.gamma).subspan(static_cast<std::size_t>(i) * k, k);
    posterior(model, descriptors.row(static_cast<std::size_t>(i)), row);
  }
  return r;
}

double log_likelihood(const GmmModel& model, const DescriptorSet& descriptors, Exec exec) {
  require(descriptors.dim() == model.dim(), ErrorKind::shape,
          "gmm: descriptor dim does not match model dim");
  std::vector<double> total(1, 0.0);
  if (exec == Exec::serial) {
    std::vector<double> lj(model.components());
    for (std::size_t i = 0; i < descriptors.size(); ++i) {
      model.log_joint(descriptors.row(i), lj);
      total[0] += log_sum_exp(lj);
    }
  } else {
    ordered_chunk_reduce(descriptors.size(), total,
                         [&](std::size_t lo, std::size_t hi, std::vector<double>& p) {
                           std::vector<double> lj(model.components());
                           for (std::size_t i = lo; i < hi; ++i) {
                             model.log_joint(descriptors.row(i), lj);
                             p[0] += log_sum_exp(lj);
                           }
                         });
  }
  require(std::isfinite(total[0]), ErrorKind::numeric, "gmm: log-likelihood is not finite");
  return total[0];
}

GmmFit fit_gmm(const DescriptorSet& descriptors, const GmmOptions& opt, Exec exec) {
  const std::size_t k = opt.components;
  const std::size_t d = descriptors.dim();
  require(k >= 1, ErrorKind::parameter, "gmm: K must be positive");
  require(opt.max_iters >= 1 && opt.tol > 0.0, ErrorKind::parameter,
          "gmm: max_iters and tol must be positive");
  require(descriptors.size() >= k, ErrorKind::parameter,
          "gmm: K = " + std::to_string(k) + " exceeds descriptor count " +
              std::to_string(descriptors.size()));
  require(opt.max_descriptors >= k, ErrorKind::parameter, "gmm: descriptor cap below K");

  detail::Rng rng(opt.seed);
  const DescriptorSet data = subsample(descriptors, opt.max_descriptors, rng);
  const std::size_t n = data.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  // Global per-dimension variance sets the floors.
  std::vector<double> global_mean(d, 0.0), global_var(d, 0.0), floor(d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) global_mean[j] += data.row(i)[j];
  for (double& m : global_mean) m *= inv_n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double r = data.row(i)[j] - global_mean[j];
      global_var[j] += r * r;
    }
  double iso_var = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    global_var[j] *= inv_n;
    floor[j] = std::max(opt.variance_floor * global_var[j], kAbsoluteVarianceFloor);
    iso_var += global_var[j] / static_cast<double>(d);
  }

  // k-means initialization.
  std::vector<double> centers = kmeanspp(data, k, rng);
  std::vector<std::size_t> label;
  std::vector<double> counts(k);
  for (std::size_t it = 0; it <= opt.kmeans_iters; ++it) {
    label = assign_nearest(data, centers, k, exec);
    if (it == opt.kmeans_iters) break;
    std::vector<double> sums(k * d, 0.0);
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[label[i]] += 1.0;
      for (std::size_t j = 0; j < d; ++j) sums[label[i] * d + j] += data.row(i)[j];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0.0)
        for (std::size_t j = 0; j < d; ++j) centers[c * d + j] = sums[c * d + j] / counts[c];
  }
  std::vector<double> means(k * d, 0.0), vars(k * d, 0.0), weights(k);
  std::fill(counts.begin(), counts.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    counts[label[i]] += 1.0;
    for (std::size_t j = 0; j < d; ++j) means[label[i] * d + j] += data.row(i)[j];
  }
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j)
      means[c * d + j] = counts[c] > 0.0 ? means[c * d + j] / counts[c] : centers[c * d + j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double r = data.row(i)[j] - means[label[i] * d + j];
      vars[label[i] * d + j] += r * r;
    }
  double wsum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = counts[c] > 0.0 ? vars[c * d + j] / counts[c] : global_var[j];
      vars[c * d + j] = std::max(v, floor[j]);
    }
    weights[c] = std::max(counts[c], 1.0) * inv_n;
    wsum += weights[c];
  }
  for (double& w : weights) w /= wsum;

  GmmFit fit{GmmModel(k, d, weights, means, vars), {}, {}, 0, false};
  const EStepLayout L{k, d};
  double prev = -std::numeric_limits<double>::infinity();
  bool reset_last = false;
  for (std::size_t it = 0; it < opt.max_iters; ++it) {
    const std::vector<double> acc = e_step(fit.model, data, exec);
    const double avg = acc[0] * inv_n;
    require(std::isfinite(avg), ErrorKind::numeric, "gmm: log-likelihood is not finite");
    fit.avg_log_likelihood.push_back(avg);
    if (it > 0 && !reset_last) {
      require(avg >= prev - kMonotonicSlack * std::max(1.0, std::abs(prev)), ErrorKind::numeric,
              "gmm: EM log-likelihood decreased");
      if (avg - prev < opt.tol) {
        fit.converged = true;
        break;
      }
    }
    prev = avg;

    // M-step.
    reset_last = false;
    wsum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double nk = acc[L.nk(c)];
      weights[c] = nk * inv_n;
      if (!(weights[c] >= opt.weight_floor)) {
        const std::size_t pick = rng.below(n);
        for (std::size_t j = 0; j < d; ++j) {
          means[c * d + j] = data.row(pick)[j];
          vars[c * d + j] = std::max(iso_var, floor[j]);
        }
        weights[c] = inv_n;
        reset_last = true;
        log_kv({{"event", "gmm-component-reset"},
                {"iteration", std::to_string(it)},
                {"component", std::to_string(c)}});
      } else {
        const auto mu = fit.model.mean(c);
        for (std::size_t j = 0; j < d; ++j) {
          const double shift = acc[L.s1(c) + j] / nk;
          means[c * d + j] = mu[j] + shift;
          vars[c * d + j] = std::max(acc[L.s2(c) + j] / nk - shift * shift, floor[j]);
        }
      }
      wsum += weights[c];
    }
    for (double& w : weights) w /= wsum;
    if (reset_last) fit.reset_iterations.push_back(it);
    fit.model = GmmModel(k, d, weights, means, vars);
  }
  fit.iterations = fit.avg_log_likelihood.size();
  log_kv({{"stage", "fit-gmm"},
          {"k", std::to_string(k)},
          {"dim", std::to_string(d)},
          {"descriptors", std::to_string(n)},
          {"iterations", std::to_string(fit.iterations)},
          {"converged", fit.converged ? "1" : "0"},
          {"avg_loglik", fmt_double(fit.avg_log_likelihood.back())}});
  return fit;
}

void save_gmm(const GmmModel& model, const std::filesystem::path& dir) {
  const std::size_t k = model.components(), d = model.dim();
  write_tensor(GlobalVector({model.weights().begin(), model.weights().end()}),
               dir / "weights.fvt");
  write_tensor(FeatureMap(k, 1, d, {model.means().begin(), model.means().end()}),
               dir / "means.fvt");
  write_tensor(FeatureMap(k, 1, d, {model.variances().begin(), model.variances().end()}),
               dir / "variances.fvt");
  detail::write_model_header(dir, "fvforge-gmm",
                             {{"components", std::to_string(k)},
                              {"dim", std::to_string(d)},
                              {"weights", "weights.fvt"},
                              {"means", "means.fvt"},
                              {"variances", "variances.fvt"}});
}

GmmModel load_gmm(const std::filesystem::path& dir) {
  const auto h = detail::ModelHeader::read(dir, "fvforge-gmm");
  const std::size_t k = h.get_size("components"), d = h.get_size("dim");
  const GlobalVector w = read_global_vector(h.payload("weights"));
  const FeatureMap means = read_feature_map(h.payload("means"));
  const FeatureMap vars = read_feature_map(h.payload("variances"));
  require(w.dim() == k && means.height() == k && means.width() == 1 && means.channels() == d &&
              vars.height() == k && vars.width() == 1 && vars.channels() == d,
          ErrorKind::corruption, dir.string() + ": gmm payload shapes disagree with header");
  std::vector<double> weights(w.values().begin(), w.values().end());
  double total = 0.0;
  for (double x : weights) total += x;
  require(total > 0.0, ErrorKind::data, dir.string() + ": gmm weights sum to zero");
  for (double& x : weights) x /= total;
  return GmmModel(k, d, std::move(weights), {means.values().begin(), means.values().end()},
                  {vars.values().begin(), vars.values().end()});
}

}  // namespace fvforge
