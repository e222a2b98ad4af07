#include "fvforge/pca.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "fvforge/error.hpp"
#include "fvforge/log.hpp"
#include "model_header.hpp"

namespace fvforge {

PcaModel::PcaModel(std::size_t input_dim, std::size_t output_dim, std::vector<double> mean,
                   std::vector<double> basis, std::vector<double> eigenvalues)
    : input_dim_(input_dim),
      output_dim_(output_dim),
      mean_(std::move(mean)),
      basis_(std::move(basis)),
      eigenvalues_(std::move(eigenvalues)) {
  require(input_dim_ > 0 && output_dim_ > 0 && output_dim_ <= input_dim_, ErrorKind::parameter,
          "pca: need 0 < output_dim <= input_dim");
  require(mean_.size() == input_dim_ && basis_.size() == input_dim_ * output_dim_ &&
              eigenvalues_.size() == output_dim_,
          ErrorKind::shape, "pca: model arrays do not match dimensions");
  for (std::size_t k = 0; k < output_dim_; ++k) {
    require(eigenvalues_[k] >= 0.0, ErrorKind::data, "pca: negative eigenvalue");
    if (k > 0)
      require(eigenvalues_[k] <= eigenvalues_[k - 1], ErrorKind::data,
              "pca: eigenvalues not sorted nonincreasing");
  }
  for (std::size_t a = 0; a < output_dim_; ++a)
    for (std::size_t b = a; b < output_dim_; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < input_dim_; ++i)
        dot += basis_[a * input_dim_ + i] * basis_[b * input_dim_ + i];
      require(std::abs(dot - (a == b ? 1.0 : 0.0)) <= 1e-6, ErrorKind::numeric,
              "pca: basis rows are not orthonormal");
    }
}

Moments sample_moments(const DescriptorSet& descriptors, Exec exec) {
  const std::size_t n = descriptors.size();
  const std::size_t d = descriptors.dim();
  require(n > 0, ErrorKind::parameter, "moments of an empty descriptor set");
  Moments m{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0)};

  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = descriptors.row(i);
      for (std::size_t a = 0; a < d; ++a) m.mean[a] += x[a];
    }
    for (double& v : m.mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = descriptors.row(i);
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b)
          m.covariance[a * d + b] += (x[a] - m.mean[a]) * (x[b] - m.mean[b]);
    }
  } else {
    ordered_chunk_reduce(n, m.mean, [&](std::size_t lo, std::size_t hi, std::vector<double>& p) {
      for (std::size_t i = lo; i < hi; ++i) {
        const auto x = descriptors.row(i);
        for (std::size_t a = 0; a < d; ++a) p[a] += x[a];
      }
    });
    for (double& v : m.mean) v /= static_cast<double>(n);
    ordered_chunk_reduce(n, m.covariance,
                         [&](std::size_t lo, std::size_t hi, std::vector<double>& p) {
                           std::vector<double> c(d);
                           for (std::size_t i = lo; i < hi; ++i) {
                             const auto x = descriptors.row(i);
                             for (std::size_t a = 0; a < d; ++a) c[a] = x[a] - m.mean[a];
                             for (std::size_t a = 0; a < d; ++a) {
                               const double ca = c[a];
                               double* row = p.data() + a * d;
                               for (std::size_t b = a; b < d; ++b) row[b] += ca * c[b];
                             }
                           }
                         });
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      const double v = m.covariance[a * d + b] / static_cast<double>(n);
      m.covariance[a * d + b] = v;
      m.covariance[b * d + a] = v;
    }
  return m;
}

PcaModel fit_pca(const DescriptorSet& descriptors, std::size_t output_dim, Exec exec) {
  const std::size_t d = descriptors.dim();
  require(output_dim >= 1 && output_dim <= d, ErrorKind::parameter,
          "pca: output dim must be in [1, input dim]");
  require(descriptors.size() >= output_dim, ErrorKind::parameter,
          "pca: fewer descriptors than output dims");

  const Moments m = sample_moments(descriptors, exec);
  Eigen::MatrixXd cov(d, d);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b)
      cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = m.covariance[a * d + b];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorKind::numeric, "pca: eigen-solve failed");

  // Eigen returns ascending eigenvalues.
  std::vector<double> basis(output_dim * d);
  std::vector<double> eigenvalues(output_dim);
  for (std::size_t k = 0; k < output_dim; ++k) {
    const auto col = static_cast<Eigen::Index>(d - 1 - k);
    eigenvalues[k] = std::max(0.0, solver.eigenvalues()(col));
    std::size_t peak = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(solver.eigenvectors()(static_cast<Eigen::Index>(i), col)) >
          std::abs(solver.eigenvectors()(static_cast<Eigen::Index>(peak), col)))
        peak = i;
    const double sign =
        solver.eigenvectors()(static_cast<Eigen::Index>(peak), col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < d; ++i)
      basis[k * d + i] = sign * solver.eigenvectors()(static_cast<Eigen::Index>(i), col);
  }
  log_kv({{"stage", "fit-pca"},
          {"descriptors", std::to_string(descriptors.size())},
          {"input_dim", std::to_string(d)},
          {"output_dim", std::to_string(output_dim)}});
  return PcaModel(d, output_dim, m.mean, std::move(basis), std::move(eigenvalues));
}

DescriptorSet project(const PcaModel& model, const DescriptorSet& descriptors, Exec exec) {
  require(descriptors.dim() == model.input_dim(), ErrorKind::shape,
          "pca: descriptor dim " + std::to_string(descriptors.dim()) + " != model input dim " +
              std::to_string(model.input_dim()));
  const std::size_t d = model.input_dim();
  const std::size_t k = model.output_dim();
  const auto n = static_cast<std::ptrdiff_t>(descriptors.size());
  std::vector<double> out(descriptors.size() * k);
  const auto mean = model.mean();
  const auto basis = model.basis();
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto x = descriptors.row(static_cast<std::size_t>(i));
    std::vector<double> centered(d);
    for (std::size_t a = 0; a < d; ++a) centered[a] = x[a] - mean[a];
    for (std::size_t r = 0; r < k; ++r) {
      double acc = 0.0;
      const double* row = basis.data() + r * d;
      for (std::size_t a = 0; a < d; ++a) acc += row[a] * centered[a];
      out[static_cast<std::size_t>(i) * k + r] = acc;
    }
  }
  return DescriptorSet(k, std::move(out), descriptors.provenance());
}

void save_pca(const PcaModel& model, const std::filesystem::path& dir) {
  const auto b = model.basis();
  write_tensor(GlobalVector({model.mean().begin(), model.mean().end()}), dir / "mean.fvt");
  write_tensor(FeatureMap(model.output_dim(), 1, model.input_dim(), {b.begin(), b.end()}),
               dir / "basis.fvt");
  // Eigenvalues may be exactly zero; the rank-1 container holds any finite value.
  write_tensor(GlobalVector({model.eigenvalues().begin(), model.eigenvalues().end()}),
               dir / "eigenvalues.fvt");
  detail::write_model_header(dir, "fvforge-pca",
                             {{"input_dim", std::to_string(model.input_dim())},
                              {"output_dim", std::to_string(model.output_dim())},
                              {"mean", "mean.fvt"},
                              {"basis", "basis.fvt"},
                              {"eigenvalues", "eigenvalues.fvt"}});
}

PcaModel load_pca(const std::filesystem::path& dir) {
  const auto h = detail::ModelHeader::read(dir, "fvforge-pca");
  const std::size_t in = h.get_size("input_dim");
  const std::size_t out = h.get_size("output_dim");
  const GlobalVector mean = read_global_vector(h.payload("mean"));
  const FeatureMap basis = read_feature_map(h.payload("basis"));
  const GlobalVector eig = read_global_vector(h.payload("eigenvalues"));
  require(basis.height() == out && basis.width() == 1 && basis.channels() == in,
          ErrorKind::corruption, dir.string() + ": basis shape disagrees with header");
  return PcaModel(in, out, {mean.values().begin(), mean.values().end()},
                  {basis.values().begin(), basis.values().end()},
                  {eig.values().begin(), eig.values().end()});
}

}  // namespace fvforge
