#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fvforge/gmm.hpp"
#include "fvforge/normalize.hpp"
#include "fvforge/tensor.hpp"
#include "oracles.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("fvforge-" + tag + "-" + std::to_string(rd()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Relative path -> contents for every regular file beneath `root`.
inline std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[e.path().lexically_relative(root).generic_string()] = slurp(e.path());
  return out;
}

inline std::vector<double> normals(std::mt19937_64& rng, std::size_t n, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

inline std::vector<double> uniforms(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::size_t between(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline fvforge::FeatureMap random_map(std::mt19937_64& rng, std::size_t h, std::size_t w,
                                      std::size_t c) {
  return fvforge::FeatureMap(h, w, c, normals(rng, h * w * c, 2.0));
}

/// Random mixture with weights bounded away from zero.
inline fvforge::GmmModel random_gmm(std::mt19937_64& rng, std::size_t k, std::size_t d) {
  auto w = uniforms(rng, k, 0.2, 1.0);
  double s = 0;
  for (double x : w) s += x;
  for (double& x : w) x /= s;
  return fvforge::GmmModel(k, d, w, normals(rng, k * d, 1.5), uniforms(rng, k * d, 0.3, 2.0));
}

inline oracle::Mixture to_oracle(const fvforge::GmmModel& g) {
  oracle::Mixture m;
  m.weights.assign(g.weights().begin(), g.weights().end());
  for (std::size_t k = 0; k < g.components(); ++k) {
    m.means.emplace_back(g.mean(k).begin(), g.mean(k).end());
    m.vars.emplace_back(g.variance(k).begin(), g.variance(k).end());
  }
  return m;
}

inline oracle::Mat to_rows(const fvforge::DescriptorSet& d) {
  oracle::Mat out;
  for (std::size_t i = 0; i < d.size(); ++i) out.emplace_back(d.row(i).begin(), d.row(i).end());
  return out;
}

inline fvforge::DescriptorSet random_descriptors(std::mt19937_64& rng, std::size_t n,
                                                 std::size_t d, double sd = 1.5) {
  return fvforge::DescriptorSet(d, normals(rng, n * d, sd));
}

/// Blobs centred at `centers`, unit variance, `per` points each, in blob order.
inline fvforge::DescriptorSet blobs(std::mt19937_64& rng, const oracle::Mat& centers,
                                    std::size_t per, double sd = 1.0) {
  const std::size_t d = centers[0].size();
  std::vector<double> flat;
  std::normal_distribution<double> g(0.0, sd);
  for (const auto& c : centers)
    for (std::size_t i = 0; i < per; ++i)
      for (std::size_t j = 0; j < d; ++j) flat.push_back(c[j] + g(rng));
  return fvforge::DescriptorSet(d, flat);
}

inline fvforge::DenseMatrix to_matrix(const oracle::Mat& rows) {
  fvforge::DenseMatrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  return m;
}

/// Ten isotropic blobs in 20 dimensions, centres ~ N(0, 1), noise sd 0.35;
/// 40 training and 20 test points per class.
struct ClassBlobs {
  oracle::Mat train, test;
  std::vector<std::size_t> train_y, test_y;
};

inline ClassBlobs ten_blobs(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t classes = 10, dim = 20;
  oracle::Mat centers;
  for (std::size_t c = 0; c < classes; ++c) centers.push_back(normals(rng, dim));
  ClassBlobs b;
  for (std::size_t c = 0; c < classes; ++c)
    for (int i = 0; i < 60; ++i) {
      auto x = centers[c];
      const auto n = normals(rng, dim, 0.35);
      for (std::size_t j = 0; j < dim; ++j) x[j] += n[j];
      (i < 40 ? b.train : b.test).push_back(x);
      (i < 40 ? b.train_y : b.test_y).push_back(c);
    }
  return b;
}

}  // namespace testing_support
