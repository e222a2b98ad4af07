#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fvforge/exec.hpp"
#include "fvforge/normalize.hpp"

namespace fvforge {

/// K-component mixture with diagonal covariances.
class GmmModel {
 public:
  /// Checks weights sum to 1 (1e-9), weights positive, variances positive.
  GmmModel(std::size_t components, std::size_t dim, std::vector<double> weights,
           std::vector<double> means, std::vector<double> variances);

  std::size_t components() const { return k_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> means() const { return means_; }
  std::span<const double> variances() const { return variances_; }
  std::span<const double> mean(std::size_t k) const {
    return std::span<const double>(means_).subspan(k * dim_, dim_);
  }
  std::span<const double> variance(std::size_t k) const {
    return std::span<const double>(variances_).subspan(k * dim_, dim_);
  }

  /// log(pi_k) + log N(x; mu_k, sigma_k^2) for every component.
  void log_joint(std::span<const double> x, std::span<double> out) const;

  friend bool operator==(const GmmModel&, const GmmModel&) = default;

 private:
  std::size_t k_;
  std::size_t dim_;
  std::vector<double> weights_;
  std::vector<double> means_;
  std::vector<double> variances_;
  std::vector<double> log_norm_;  // log pi_k - 0.5 (d log 2pi + sum log var)
  std::vector<double> inv_var_;
};

struct GmmOptions {
  std::size_t components = 256;
  std::uint64_t seed = 7;
  std::size_t max_iters = 100;
  double tol = 1e-5;
  /// Variance floor as a fraction of the global per-dimension data variance.
  double variance_floor = 1e-4;
  double weight_floor = 1e-6;
  /// Descriptors used for fitting are capped at this count (seeded subsample).
  std::size_t max_descriptors = 500000;
  std::size_t kmeans_iters = 10;
};

struct GmmFit {
  GmmModel model;
  /// Per-point average log-likelihood evaluated at the start of each EM
  /// iteration, i.e. under the parameters of the previous M-step.
  std::vector<double> avg_log_likelihood;
  /// Iterations after which a collapsed component was re-seeded; the
  /// likelihood may drop across those.
  std::vector<std::size_t> reset_iterations;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Seeded k-means++ and Lloyd initialization followed by log-space EM.
GmmFit fit_gmm(const DescriptorSet& descriptors, const GmmOptions& options,
               Exec exec = Exec::parallel);

/// N x K posterior component probabilities, row-major.
struct Responsibilities {
  std::size_t count = 0;
  std::size_t components = 0;
  std::vector<double> gamma;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(gamma).subspan(i * components, components);
  }
};

Responsibilities responsibilities(const GmmModel& model, const DescriptorSet& descriptors,
                                  Exec exec = Exec::parallel);

/// Sum over descriptors of log sum_k pi_k N(x; mu_k, sigma_k^2).
double log_likelihood(const GmmModel& model, const DescriptorSet& descriptors,
                      Exec exec = Exec::parallel);

/// Writes gamma_k(x) for one descriptor into `out`, returns log p(x).
double posterior(const GmmModel& model, std::span<const double> x, std::span<double> out);

void save_gmm(const GmmModel& model, const std::filesystem::path& dir);
/// Weights are renormalized after the float32 round trip.
GmmModel load_gmm(const std::filesystem::path& dir);

}  // namespace fvforge
