#include "fvforge/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "fvforge/error.hpp"
#include "fvforge/exec.hpp"
#include "fvforge/log.hpp"
#include "model_header.hpp"
#include "random.hpp"

namespace fvforge {

LinearModel::LinearModel(std::vector<std::string> class_names, std::size_t feature_dim,
                         std::vector<double> weights, std::vector<double> biases, double c,
                         std::vector<std::uint8_t> flags)
    : names_(std::move(class_names)),
      dim_(feature_dim),
      weights_(std::move(weights)),
      biases_(std::move(biases)),
      c_(c),
      flags_(std::move(flags)) {
  require(!names_.empty() && dim_ > 0, ErrorKind::parameter,
          "linear model needs classes and a positive feature dim");
  require(weights_.size() == names_.size() * dim_ && biases_.size() == names_.size() &&
              flags_.size() == names_.size(),
          ErrorKind::shape, "linear model arrays do not match class count");
  require(std::isfinite(c_) && c_ > 0.0, ErrorKind::parameter, "C must be positive");
  for (double v : weights_) require(std::isfinite(v), ErrorKind::data, "non-finite weight");
  for (double v : biases_) require(std::isfinite(v), ErrorKind::data, "non-finite bias");
}

BinarySvm train_binary(const DenseMatrix& x, std::span<const int> y, const SvmOptions& opt,
                       std::uint64_t stream) {
  const std::size_t n = x.rows;
  const std::size_t d = x.cols;
  require(y.size() == n, ErrorKind::shape, "svm: label count differs from example count");
  require(opt.c > 0.0 && opt.tol > 0.0 && opt.max_epochs > 0, ErrorKind::parameter,
          "svm: C, tol and max_epochs must be positive");
  const double c = opt.c;

  BinarySvm out;
  out.w.assign(d, 0.0);
  out.alpha.assign(n, 0.0);
  std::vector<double> qii(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    qii[i] = std::inner_product(xi.begin(), xi.end(), xi.begin(), 1.0);  // +1: bias feature
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  detail::Rng rng(opt.seed, stream);

  for (std::size_t epoch = 0; epoch < opt.max_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      const auto xi = x.row(i);
      const double yi = y[i];
      const double f = std::inner_product(xi.begin(), xi.end(), out.w.begin(), out.bias);
      const double g = yi * f - 1.0;
      double pg = g;
      if (out.alpha[i] == 0.0) pg = std::min(g, 0.0);
      else if (out.alpha[i] == c) pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (std::abs(pg) > 1e-12) {
        const double old = out.alpha[i];
        out.alpha[i] = std::min(std::max(old - g / qii[i], 0.0), c);
        const double step = (out.alpha[i] - old) * yi;
        for (std::size_t j = 0; j < d; ++j) out.w[j] += step * xi[j];
        out.bias += step;
      }
    }
    out.epochs = epoch + 1;
    if (n == 0 || pg_max - pg_min < opt.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

double primal_objective(std::span<const double> w, double bias, const DenseMatrix& x,
                        std::span<const int> y, double c) {
  double obj = 0.5 * (std::inner_product(w.begin(), w.end(), w.begin(), 0.0) + bias * bias);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto xi = x.row(i);
    const double f = std::inner_product(xi.begin(), xi.end(), w.begin(), bias);
    obj += c * std::max(0.0, 1.0 - y[i] * f);
  }
  return obj;
}

TrainResult train_ovr(const DenseMatrix& features, std::span<const std::size_t> labels,
                      const std::vector<std::string>& class_names, const SvmOptions& opt) {
  const std::size_t classes = class_names.size();
  const std::size_t n = features.rows;
  const std::size_t d = features.cols;
  require(classes > 0, ErrorKind::parameter, "svm: no classes");
  require(d > 0, ErrorKind::parameter, "svm: feature dim must be positive");
  require(labels.size() == n, ErrorKind::shape, "svm: label count differs from example count");
  require(opt.c > 0.0 && opt.tol > 0.0 && opt.max_epochs > 0, ErrorKind::parameter,
          "svm: C, tol and max_epochs must be positive");
  for (std::size_t l : labels)
    require(l < classes, ErrorKind::parameter, "svm: label out of range");

  std::size_t off_norm = 0;
  bool constant = n > 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = features.row(i);
    const double norm = std::sqrt(std::inner_product(xi.begin(), xi.end(), xi.begin(), 0.0));
    if (std::abs(norm - 1.0) > 0.1) ++off_norm;
    if (i > 0 && !std::equal(xi.begin(), xi.end(), features.row(0).begin())) constant = false;
  }
  if (off_norm > 0)
    log_kv({{"warning", "feature-norm"},
            {"vectors_off_unit_norm", std::to_string(off_norm)},
            {"of", std::to_string(n)}});

  std::vector<double> weights(classes * d, 0.0);
  std::vector<double> biases(classes, 0.0);
  std::vector<std::uint8_t> flags(classes, kClassOk);
  std::vector<std::vector<double>> duals(classes);
  std::vector<std::size_t> epochs(classes, 0);

  parallel_for_index(classes, [&](std::size_t k) {
    std::vector<int> y(n);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = labels[i] == k ? 1 : -1;
      pos += labels[i] == k;
    }
    if (constant) flags[k] |= kConstantFeatures;
    if (pos == 0 || pos == n) {
      flags[k] |= pos == 0 ? kNoPositives : kNoNegatives;
      biases[k] = pos == 0 ? -1.0 : 1.0;
      duals[k].assign(n, 0.0);
      return;
    }
    BinarySvm svm = train_binary(features, y, opt, k);
    std::copy(svm.w.begin(), svm.w.end(), weights.begin() + static_cast<std::ptrdiff_t>(k * d));
    biases[k] = svm.bias;
    duals[k] = std::move(svm.alpha);
    epochs[k] = svm.epochs;
  });

  std::size_t flagged = 0;
  for (auto f : flags) flagged += f != kClassOk;
  log_kv({{"stage", "train-svm"},
          {"classes", std::to_string(classes)},
          {"examples", std::to_string(n)},
          {"dim", std::to_string(d)},
          {"c", fmt_double(opt.c)},
          {"flagged_classes", std::to_string(flagged)},
          {"max_epochs_used", std::to_string(*std::max_element(epochs.begin(), epochs.end()))}});
  return TrainResult{LinearModel(class_names, d, std::move(weights), std::move(biases), opt.c,
                                 std::move(flags)),
                     std::move(duals), std::move(epochs)};
}

ScoreVector predict_scores(const LinearModel& model, std::span<const double> feature) {
  require(feature.size() == model.feature_dim(), ErrorKind::shape,
          "predict: feature dim " + std::to_string(feature.size()) + " != model dim " +
              std::to_string(model.feature_dim()));
  ScoreVector s{std::vector<double>(model.class_count())};
  for (std::size_t k = 0; k < model.class_count(); ++k) {
    const auto w = model.weights(k);
    s.scores[k] = std::inner_product(w.begin(), w.end(), feature.begin(), model.biases()[k]);
  }
  return s;
}

DenseMatrix predict_scores(const LinearModel& model, const DenseMatrix& features) {
  DenseMatrix out(features.rows, model.class_count());
  for (std::size_t i = 0; i < features.rows; ++i) {
    const ScoreVector s = predict_scores(model, features.row(i));
    std::copy(s.scores.begin(), s.scores.end(), out.row(i).begin());
  }
  return out;
}

void save_linear_model(const LinearModel& model, const std::filesystem::path& dir) {
  const auto w = model.all_weights();
  write_tensor(FeatureMap(model.class_count(), 1, model.feature_dim(), {w.begin(), w.end()}),
               dir / "weights.fvt");
  write_tensor(GlobalVector({model.biases().begin(), model.biases().end()}), dir / "biases.fvt");
  std::ostringstream names, flags;
  for (std::size_t k = 0; k < model.class_count(); ++k) {
    names << (k ? "," : "") << model.class_names()[k];
    flags << (k ? "," : "") << static_cast<int>(model.flags()[k]);
  }
  detail::write_model_header(dir, "fvforge-svm",
                             {{"classes", names.str()},
                              {"feature_dim", std::to_string(model.feature_dim())},
                              {"c", fmt_double(model.c())},
                              {"flags", flags.str()},
                              {"weights", "weights.fvt"},
                              {"biases", "biases.fvt"}});
}

LinearModel load_linear_model(const std::filesystem::path& dir) {
  const auto h = detail::ModelHeader::read(dir, "fvforge-svm");
  std::vector<std::string> names;
  {
    std::istringstream in(h.get("classes"));
    std::string item;
    while (std::getline(in, item, ',')) names.push_back(item);
  }
  std::vector<std::uint8_t> flags;
  {
    std::istringstream in(h.get("flags"));
    std::string item;
    while (std::getline(in, item, ',')) {
      try {
        flags.push_back(static_cast<std::uint8_t>(std::stoi(item)));
      } catch (const std::logic_error&) {
        fail(ErrorKind::format, dir.string() + ": bad class flag");
      }
    }
  }
  const std::size_t d = h.get_size("feature_dim");
  const FeatureMap w = read_feature_map(h.payload("weights"));
  const GlobalVector b = read_global_vector(h.payload("biases"));
  require(w.height() == names.size() && w.width() == 1 && w.channels() == d &&
              b.dim() == names.size(),
          ErrorKind::corruption, dir.string() + ": svm payload shapes disagree with header");
  return LinearModel(std::move(names), d, {w.values().begin(), w.values().end()},
                     {b.values().begin(), b.values().end()}, h.get_double("c"), std::move(flags));
}

}  // namespace fvforge
