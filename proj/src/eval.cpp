#include "fvforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fvforge/error.hpp"
#include "fvforge/exec.hpp"
#include "fvforge/log.hpp"

namespace fvforge {

double average_precision(std::span<const double> scores, std::span<const bool> labels,
                         Integration integration) {
  require(scores.size() == labels.size(), ErrorKind::shape, "AP: score and label counts differ");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  require(positives > 0, ErrorKind::data, "AP undefined: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t hits = 0;
  double prev_recall = 0.0;
  double prev_precision = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const bool pos = labels[order[rank]];
    if (pos) ++hits;
    const double precision = static_cast<double>(hits) / static_cast<double>(rank + 1);
    const double recall = static_cast<double>(hits) / static_cast<double>(positives);
    if (integration == Integration::step) {
      if (pos) ap += precision;
    } else {
      if (rank == 0) prev_precision = precision;
      ap += (recall - prev_recall) * 0.5 * (precision + prev_precision);
    }
    prev_recall = recall;
    prev_precision = precision;
  }
  return integration == Integration::step ? ap / static_cast<double>(positives) : ap;
}

std::vector<std::size_t> EvalReport::excluded_classes() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < per_class_ap.size(); ++k)
    if (!per_class_ap[k]) out.push_back(k);
  return out;
}

EvalReport evaluate(const DenseMatrix& scores, std::span<const std::size_t> labels,
                    std::vector<std::string> class_names, Integration integration) {
  const std::size_t classes = class_names.size();
  require(scores.cols == classes, ErrorKind::shape, "evaluate: score columns != class count");
  require(scores.rows == labels.size(), ErrorKind::shape, "evaluate: score rows != label count");
  require(scores.rows > 0, ErrorKind::data, "evaluate: no labeled images");
  for (std::size_t l : labels) require(l < classes, ErrorKind::validation, "evaluate: bad label");

  EvalReport r;
  r.class_names = std::move(class_names);
  r.per_class_ap.resize(classes);
  r.per_class_positives.assign(classes, 0);
  r.images = scores.rows;
  for (std::size_t l : labels) ++r.per_class_positives[l];

  parallel_for_index(classes, [&](std::size_t k) {
    if (r.per_class_positives[k] == 0) return;
    std::vector<double> col(scores.rows);
    std::unique_ptr<bool[]> truth(new bool[scores.rows]);
    for (std::size_t i = 0; i < scores.rows; ++i) {
      col[i] = scores.values[i * classes + k];
      truth[i] = labels[i] == k;
    }
    r.per_class_ap[k] =
        average_precision(col, std::span<const bool>(truth.get(), scores.rows), integration);
  });

  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& ap : r.per_class_ap)
    if (ap) {
      sum += *ap;
      ++counted;
    }
  r.map = sum / static_cast<double>(counted);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.rows; ++i) {
    const auto row = scores.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[i];
  }
  r.top1_accuracy = static_cast<double>(correct) / static_cast<double>(scores.rows);
  return r;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "# ranking ties broken by input order (stable sort); top-1 ties by lowest class index\n";
  out << "# classes without positives are excluded from mAP\n";
  out << "class,positives,ap\n";
  for (std::size_t k = 0; k < report.class_names.size(); ++k) {
    out << report.class_names[k] << ',' << report.per_class_positives[k] << ',';
    if (report.per_class_ap[k]) out << fmt_double(*report.per_class_ap[k]);
    else out << "excluded";
    out << '\n';
  }
  out << summary_line(report) << '\n';
  return out.str();
}

std::string summary_line(const EvalReport& report) {
  return "mAP=" + fmt_double(report.map) + " top1=" + fmt_double(report.top1_accuracy);
}

std::string score_table_csv(const ScoreTable& table) {
  std::ostringstream out;
  out << "image_id";
  for (std::size_t k = 0; k < table.scores.cols; ++k) out << ",score_" << k;
  out << '\n';
  for (std::size_t i = 0; i < table.scores.rows; ++i) {
    out << table.image_ids[i];
    for (double v : table.scores.row(i)) out << ',' << fmt_double(v);
    out << '\n';
  }
  return out.str();
}

ScoreTable read_score_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open scores file " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::format,
          path.string() + ": empty scores file");
  std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  require(line.rfind("image_id", 0) == 0 && cols > 0, ErrorKind::format,
          path.string() + ": bad scores header");
  ScoreTable t;
  t.scores.cols = cols;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::getline(ls, field, ',');
    t.image_ids.push_back(field);
    std::size_t got = 0;
    while (std::getline(ls, field, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        require(used == field.size() && std::isfinite(v), ErrorKind::data, "");
        t.scores.values.push_back(v);
      } catch (const std::exception&) {
        fail(ErrorKind::data, path.string() + ":" + std::to_string(line_no) + ": bad score value");
      }
      ++got;
    }
    require(got == cols, ErrorKind::format,
            path.string() + ":" + std::to_string(line_no) + ": wrong number of scores");
  }
  t.scores.rows = t.image_ids.size();
  return t;
}

}  // namespace fvforge
