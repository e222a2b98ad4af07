#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fvforge/tensor.hpp"

namespace fvforge {

/// Precision-recall integration rule. `step` is the standard AP (mean of the
/// precision at each positive's rank). `trapezoid` joins consecutive
/// (recall, precision) points with straight segments, starting from
/// (0, precision at rank 1).
enum class Integration { step, trapezoid };

/// Ranks by descending score; ties keep input order. Throws a data error
/// when `labels` has no positive.
double average_precision(std::span<const double> scores, std::span<const bool> labels,
                         Integration integration = Integration::step);

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<std::optional<double>> per_class_ap;  // empty when no positives
  std::vector<std::size_t> per_class_positives;
  double map = 0.0;
  double top1_accuracy = 0.0;
  std::size_t images = 0;

  std::vector<std::size_t> excluded_classes() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Per-class one-vs-rest AP, mAP over classes with at least one positive,
/// and top-1 accuracy with lowest-index argmax tie-break.
EvalReport evaluate(const DenseMatrix& scores, std::span<const std::size_t> labels,
                    std::vector<std::string> class_names,
                    Integration integration = Integration::step);

/// CSV with header `class,positives,ap`, preceded by comment lines stating
/// the tie-break; excluded classes carry `excluded` in the AP column.
std::string report_csv(const EvalReport& report);
std::string summary_line(const EvalReport& report);

/// `image_id,score_0,...,score_{C-1}` with a header row.
struct ScoreTable {
  std::vector<std::string> image_ids;
  DenseMatrix scores;
};

std::string score_table_csv(const ScoreTable& table);
ScoreTable read_score_table(const std::filesystem::path& path);

}  // namespace fvforge
