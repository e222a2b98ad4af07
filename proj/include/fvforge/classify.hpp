#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fvforge/tensor.hpp"

namespace fvforge {

struct SvmOptions {
  double c = 1.0;
  std::uint64_t seed = 7;
  std::size_t max_epochs = 1000;
  /// Stop when max - min projected gradient over an epoch falls below tol.
  double tol = 1e-3;
};

/// Per-class training diagnostics, bitwise-or'ed.
enum ClassFlag : std::uint8_t {
  kClassOk = 0,
  kNoPositives = 1,        // trained as always-negative
  kNoNegatives = 2,        // trained as always-positive
  kConstantFeatures = 4,   // every training vector identical
};

/// One-vs-rest bank of linear scorers: score_k = w_k . x + b_k.
class LinearModel {
 public:
  LinearModel(std::vector<std::string> class_names, std::size_t feature_dim,
              std::vector<double> weights, std::vector<double> biases, double c,
              std::vector<std::uint8_t> flags);

  std::size_t class_count() const { return names_.size(); }
  std::size_t feature_dim() const { return dim_; }
  const std::vector<std::string>& class_names() const { return names_; }
  std::span<const double> weights(std::size_t k) const {
    return std::span<const double>(weights_).subspan(k * dim_, dim_);
  }
  std::span<const double> all_weights() const { return weights_; }
  std::span<const double> biases() const { return biases_; }
  double c() const { return c_; }
  const std::vector<std::uint8_t>& flags() const { return flags_; }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;

 private:
  std::vector<std::string> names_;
  std::size_t dim_;
  std::vector<double> weights_;
  std::vector<double> biases_;
  double c_;
  std::vector<std::uint8_t> flags_;
};

/// Dual coordinate descent for the l2-regularized L1-hinge SVM
///   min 1/2 ||[w; b]||^2 + C sum_i max(0, 1 - y_i (w . x_i + b)).
/// The bias is a constant-1 feature and is regularized with w.
struct BinarySvm {
  std::vector<double> w;
  double bias = 0.0;
  std::vector<double> alpha;
  std::size_t epochs = 0;
  bool converged = false;
};

BinarySvm train_binary(const DenseMatrix& x, std::span<const int> y, const SvmOptions& options,
                       std::uint64_t stream = 0);

/// Primal objective of (w, bias) on the given problem.
double primal_objective(std::span<const double> w, double bias, const DenseMatrix& x,
                        std::span<const int> y, double c);

struct TrainResult {
  LinearModel model;
  std::vector<std::vector<double>> duals;  // per class, one per example
  std::vector<std::size_t> epochs;
};

/// One binary problem per class (label k vs rest), classes trained
/// concurrently; each uses its own seeded shuffle stream.
TrainResult train_ovr(const DenseMatrix& features, std::span<const std::size_t> labels,
                      const std::vector<std::string>& class_names, const SvmOptions& options);

ScoreVector predict_scores(const LinearModel& model, std::span<const double> feature);
DenseMatrix predict_scores(const LinearModel& model, const DenseMatrix& features);

void save_linear_model(const LinearModel& model, const std::filesystem::path& dir);
LinearModel load_linear_model(const std::filesystem::path& dir);

}  // namespace fvforge
