#include "fvforge/fisher.hpp"

#include <cmath>

#include "fvforge/augment.hpp"
#include "fvforge/error.hpp"

namespace fvforge {

FisherVector::FisherVector(std::size_t components, std::size_t dim, std::vector<double> data,
                           std::uint8_t applied)
    : k_(components), d_(dim), data_(std::move(data)), applied_(applied) {
  require(k_ > 0 && d_ > 0, ErrorKind::parameter, "fisher vector: K and d must be positive");
  require(data_.size() == 2 * k_ * d_, ErrorKind::shape, "fisher vector length must be 2*K*d");
  for (double v : data_) require(std::isfinite(v), ErrorKind::data, "fisher vector: non-finite value");
}

GlobalVector FisherVector::to_global(std::string tag) const {
  return GlobalVector(data_, std::move(tag));
}

namespace {

// Adds the unscaled gradient sums of descriptors [lo, hi) into acc.
void accumulate_fv(const GmmModel& model, const DescriptorSet& x, std::size_t lo, std::size_t hi,
                   const std::vector<double>& inv_sigma, std::vector<double>& acc) {
  const std::size_t k = model.components();
  const std::size_t d = model.dim();
  std::vector<double> gamma(k);
  for (std::size_t i = lo; i < hi; ++i) {
    const auto row = x.row(i);
    posterior(model, row, gamma);
    for (std::size_t c = 0; c < k; ++c) {
      const double g = gamma[c];
      if (g == 0.0) continue;
      const auto mu = model.mean(c);
      const double* is = inv_sigma.data() + c * d;
      double* u = acc.data() + 2 * c * d;
      double* v = u + d;
      for (std::size_t j = 0; j < d; ++j) {
        const double z = (row[j] - mu[j]) * is[j];
        u[j] += g * z;
        v[j] += g * (z * z - 1.0);
      }
    }
  }
}

}  // namespace

FisherVector encode_fv(const GmmModel& model, const DescriptorSet& descriptors, Exec exec) {
  require(descriptors.size() >= 1, ErrorKind::parameter, "encode_fv: empty descriptor set");
  require(descriptors.dim() == model.dim(), ErrorKind::shape,
          "encode_fv: descriptor dim " + std::to_string(descriptors.dim()) +
              " != gmm dim " + std::to_string(model.dim()));
  const std::size_t k = model.components();
  const std::size_t d = model.dim();
  std::vector<double> inv_sigma(k * d);
  for (std::size_t i = 0; i < k * d; ++i) inv_sigma[i] = 1.0 / std::sqrt(model.variances()[i]);

  std::vector<double> acc(2 * k * d, 0.0);
  if (exec == Exec::serial) {
    accumulate_fv(model, descriptors, 0, descriptors.size(), inv_sigma, acc);
  } else {
    ordered_chunk_reduce(descriptors.size(), acc,
                         [&](std::size_t lo, std::size_t hi, std::vector<double>& p) {
                           accumulate_fv(model, descriptors, lo, hi, inv_sigma, p);
                         });
  }
  const double n = static_cast<double>(descriptors.size());
  for (std::size_t c = 0; c < k; ++c) {
    const double pi = model.weights()[c];
    const double su = 1.0 / (n * std::sqrt(pi));
    const double sv = 1.0 / (n * std::sqrt(2.0 * pi));
    for (std::size_t j = 0; j < d; ++j) {
      acc[2 * c * d + j] *= su;
      acc[(2 * c + 1) * d + j] *= sv;
    }
  }
  return FisherVector(k, d, std::move(acc));
}

void signed_sqrt_inplace(std::span<double> v) {
  for (double& x : v) x = std::copysign(std::sqrt(std::abs(x)), x);
}

void l2_normalize_inplace(std::span<double> v, double epsilon) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double norm = std::sqrt(ss);
  if (norm == 0.0) return;
  const double denom = std::max(norm, epsilon);
  for (double& x : v) x /= denom;
}

FisherVector intra_normalize(const FisherVector& fv, IntraBlocks blocks) {
  require((fv.applied() & kNormIntra) == 0, ErrorKind::parameter,
          "intra normalization already applied");
  std::vector<double> out(fv.values().begin(), fv.values().end());
  const std::size_t len = blocks == IntraBlocks::per_order ? fv.dim() : 2 * fv.dim();
  for (std::size_t start = 0; start < out.size(); start += len)
    l2_normalize_inplace(std::span<double>(out).subspan(start, len));
  return FisherVector(fv.components(), fv.dim(), std::move(out), fv.applied() | kNormIntra);
}

FisherVector power_l2_normalize(const FisherVector& fv) {
  std::vector<double> out(fv.values().begin(), fv.values().end());
  signed_sqrt_inplace(out);
  l2_normalize_inplace(out);
  return FisherVector(fv.components(), fv.dim(), std::move(out),
                      fv.applied() | kNormPower | kNormL2);
}

GlobalVector power_l2_normalize(const GlobalVector& vec) {
  std::vector<double> out(vec.values().begin(), vec.values().end());
  signed_sqrt_inplace(out);
  l2_normalize_inplace(out);
  return GlobalVector(std::move(out), vec.source_tag());
}

GlobalVector l2_normalize(const GlobalVector& vec, double epsilon) {
  std::vector<double> out(vec.values().begin(), vec.values().end());
  l2_normalize_inplace(out, epsilon);
  return GlobalVector(std::move(out), vec.source_tag());
}

FisherVector l2_normalize(const FisherVector& fv, double epsilon) {
  std::vector<double> out(fv.values().begin(), fv.values().end());
  l2_normalize_inplace(out, epsilon);
  return FisherVector(fv.components(), fv.dim(), std::move(out), fv.applied() | kNormL2);
}

FisherVector sum_pool(std::span<const FisherVector> views) {
  require(!views.empty(), ErrorKind::parameter, "sum_pool needs at least one view");
  std::vector<std::vector<double>> raw;
  raw.reserve(views.size());
  for (const auto& v : views) {
    require(v.components() == views.front().components() && v.dim() == views.front().dim(),
            ErrorKind::shape, "sum_pool: fisher vector shapes differ");
    raw.emplace_back(v.values().begin(), v.values().end());
  }
  return FisherVector(views.front().components(), views.front().dim(), sum_pool(raw));
}

}  // namespace fvforge
