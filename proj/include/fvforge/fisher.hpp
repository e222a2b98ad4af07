#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fvforge/exec.hpp"
#include "fvforge/gmm.hpp"
#include "fvforge/normalize.hpp"
#include "fvforge/tensor.hpp"

namespace fvforge {

enum FvNorm : std::uint8_t { kNormIntra = 1, kNormPower = 2, kNormL2 = 4 };

/// Layout [u_1, v_1, ..., u_K, v_K]; u_k and v_k each have d entries.
class FisherVector {
 public:
  FisherVector(std::size_t components, std::size_t dim, std::vector<double> data,
               std::uint8_t applied = 0);

  std::size_t components() const { return k_; }
  std::size_t dim() const { return d_; }
  std::size_t size() const { return data_.size(); }
  std::span<const double> values() const { return data_; }
  std::span<const double> u(std::size_t k) const {
    return std::span<const double>(data_).subspan(2 * k * d_, d_);
  }
  std::span<const double> v(std::size_t k) const {
    return std::span<const double>(data_).subspan((2 * k + 1) * d_, d_);
  }
  std::uint8_t applied() const { return applied_; }

  GlobalVector to_global(std::string tag = "fv") const;

  friend bool operator==(const FisherVector&, const FisherVector&) = default;

 private:
  std::size_t k_;
  std::size_t d_;
  std::vector<double> data_;
  std::uint8_t applied_;
};

/// Gradient blocks averaged over descriptors:
///   u_k = 1/(N sqrt(pi_k))   sum_x gamma_k(x) (x - mu_k) / sigma_k
///   v_k = 1/(N sqrt(2 pi_k)) sum_x gamma_k(x) [((x - mu_k) / sigma_k)^2 - 1]
FisherVector encode_fv(const GmmModel& model, const DescriptorSet& descriptors,
                       Exec exec = Exec::parallel);

/// Intra-normalization block granularity: one block per (Gaussian, order)
/// of length d, or one per Gaussian of length 2d.
enum class IntraBlocks { per_order, per_gaussian };

/// Per-block l2 normalization; zero blocks stay zero. Applying it twice is a
/// parameter error.
FisherVector intra_normalize(const FisherVector& fv, IntraBlocks blocks = IntraBlocks::per_order);

/// Signed square root followed by global l2 normalization.
FisherVector power_l2_normalize(const FisherVector& fv);
GlobalVector power_l2_normalize(const GlobalVector& vec);

/// x / max(||x||, epsilon).
GlobalVector l2_normalize(const GlobalVector& vec, double epsilon = kNormEpsilon);
FisherVector l2_normalize(const FisherVector& fv, double epsilon = kNormEpsilon);

/// Elementwise sum of per-view encodings of one image.
FisherVector sum_pool(std::span<const FisherVector> views);

void signed_sqrt_inplace(std::span<double> v);
void l2_normalize_inplace(std::span<double> v, double epsilon = kNormEpsilon);

}  // namespace fvforge
