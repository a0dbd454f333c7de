#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "skinnet/tensor.hpp"

namespace skinnet {

/// Rows are the true class, columns the predicted class.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::uint64_t>> counts;

  std::size_t size() const noexcept { return counts.size(); }
  std::uint64_t total() const;
  std::uint64_t trace() const;
};

/// Missing names default to "0", "1", ...
ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t c,
                          std::vector<std::string> class_names = {});

struct ClassMetrics {
  std::string name;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::uint64_t support = 0;
  bool precision_undefined = false;  // nothing predicted as this class
  bool recall_undefined = false;     // no true samples of this class
};

struct AverageMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::uint64_t support = 0;
};

struct ClassificationReport {
  std::vector<ClassMetrics> classes;
  double accuracy = 0;
  AverageMetrics macro_avg;
  AverageMetrics weighted_avg;

  /// Any per-class denominator was zero; those metrics were set to 0.
  bool zero_division() const;
};

ClassificationReport report(const ConfusionMatrix& cm);

struct RocPoint {
  double fpr;
  double tpr;
};

struct RocCurve {
  std::string class_name;
  std::size_t class_index = 0;
  std::vector<RocPoint> points;  // (0,0) ... (1,1)
  double auc = 0;
};

/// One-vs-rest curve for `class_index` from per-sample score rows [n, c].
/// Equal scores form a single threshold step.
RocCurve roc_auc(std::span<const std::size_t> truth, const TensorD& scores, std::size_t class_index,
                 std::string class_name = {});
/// Binary form: `positive[k]` marks positives.
RocCurve roc_auc(std::span<const double> scores, const std::vector<bool>& positive);

enum class ReportFormat { kJson, kCsv };

ReportFormat parse_report_format(std::string_view s);

nlohmann::ordered_json report_json(const ClassificationReport& r, const ConfusionMatrix& cm,
                                   std::span<const RocCurve> curves);
std::string report_csv(const ClassificationReport& r);
std::string confusion_csv(const ConfusionMatrix& cm);
std::string roc_csv(const RocCurve& curve);

ConfusionMatrix confusion_from_json(const nlohmann::json& j);
ConfusionMatrix confusion_from_csv(std::string_view csv);

/// `roc_<class>.csv`, with path separators in the class name replaced by '_'.
std::string roc_file_name(const std::string& class_name);

/// JSON writes report.json; CSV writes report.csv, confusion.csv and one
/// roc_<class>.csv per curve. Returns the paths written.
std::vector<std::filesystem::path> emit_report(const ClassificationReport& r, const ConfusionMatrix& cm,
                                               std::span<const RocCurve> curves, ReportFormat format,
                                               const std::filesystem::path& out_dir);

/// Two-decimal text table in the usual classification-report layout.
std::string format_report(const ClassificationReport& r);

}  // namespace skinnet
