#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "fvforge/exec.hpp"
#include "fvforge/normalize.hpp"

namespace fvforge {

/// Unwhitened linear projection onto the leading principal axes.
class PcaModel {
 public:
  /// Validates row orthonormality (1e-6) and eigenvalue ordering.
  PcaModel(std::size_t input_dim, std::size_t output_dim, std::vector<double> mean,
           std::vector<double> basis, std::vector<double> eigenvalues);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  std::span<const double> mean() const { return mean_; }
  /// output_dim x input_dim, row-major.
  std::span<const double> basis() const { return basis_; }
  std::span<const double> basis_row(std::size_t k) const {
    return std::span<const double>(basis_).subspan(k * input_dim_, input_dim_);
  }
  std::span<const double> eigenvalues() const { return eigenvalues_; }

  friend bool operator==(const PcaModel&, const PcaModel&) = default;

 private:
  std::size_t input_dim_;
  std::size_t output_dim_;
  std::vector<double> mean_;
  std::vector<double> basis_;
  std::vector<double> eigenvalues_;
};

/// Mean and 1/N covariance of a descriptor set.
struct Moments {
  std::vector<double> mean;
  std::vector<double> covariance;  // dim x dim
};
Moments sample_moments(const DescriptorSet& descriptors, Exec exec = Exec::parallel);

/// Leading `output_dim` eigenvectors of the 1/N sample covariance. Each basis
/// row is sign-fixed so its largest-magnitude entry (lowest index on ties) is
/// nonnegative.
PcaModel fit_pca(const DescriptorSet& descriptors, std::size_t output_dim,
                 Exec exec = Exec::parallel);

/// basis * (x - mean) for every descriptor.
DescriptorSet project(const PcaModel& model, const DescriptorSet& descriptors,
                      Exec exec = Exec::parallel);

/// Directory layout: model.txt header plus mean/basis/eigenvalues tensors.
void save_pca(const PcaModel& model, const std::filesystem::path& dir);
PcaModel load_pca(const std::filesystem::path& dir);

}  // namespace fvforge
