#include "skinnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "skinnet/error.hpp"
#include "skinnet/fileio.hpp"

namespace skinnet {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts)
    for (auto v : row) n += v;
  return n;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
  return n;
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t c,
                          std::vector<std::string> class_names) {
  if (truth.empty()) fail(ErrorKind::kData, "confusion: no samples");
  if (truth.size() != predicted.size())
    fail(ErrorKind::kShape, "confusion: " + std::to_string(truth.size()) + " labels vs " +
                                std::to_string(predicted.size()) + " predictions");
  if (c == 0) fail(ErrorKind::kConfig, "confusion: zero classes");
  if (class_names.empty())
    for (std::size_t i = 0; i < c; ++i) class_names.push_back(std::to_string(i));
  if (class_names.size() != c) fail(ErrorKind::kShape, "confusion: class name count does not match class count");

  ConfusionMatrix cm{std::move(class_names), std::vector<std::vector<std::uint64_t>>(c, std::vector<std::uint64_t>(c))};
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] >= c || predicted[k] >= c)
      fail(ErrorKind::kData, "confusion: label out of range at sample " + std::to_string(k));
    ++cm.counts[truth[k]][predicted[k]];
  }
  return cm;
}

bool ClassificationReport::zero_division() const {
  return std::any_of(classes.begin(), classes.end(),
                     [](const ClassMetrics& m) { return m.precision_undefined || m.recall_undefined; });
}

ClassificationReport report(const ConfusionMatrix& cm) {
  const std::size_t c = cm.size();
  if (c == 0) fail(ErrorKind::kData, "report: empty confusion matrix");
  for (const auto& row : cm.counts)
    if (row.size() != c) fail(ErrorKind::kShape, "report: confusion matrix is not square");
  const std::uint64_t total = cm.total();
  if (total == 0) fail(ErrorKind::kData, "report: all-zero confusion matrix");

  ClassificationReport r;
  for (std::size_t i = 0; i < c; ++i) {
    std::uint64_t predicted = 0, support = 0;
    for (std::size_t j = 0; j < c; ++j) {
      predicted += cm.counts[j][i];
      support += cm.counts[i][j];
    }
    const auto tp = static_cast<double>(cm.counts[i][i]);
    ClassMetrics m;
    m.name = i < cm.class_names.size() ? cm.class_names[i] : std::to_string(i);
    m.support = support;
    m.precision_undefined = predicted == 0;
    m.recall_undefined = support == 0;
    m.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    m.recall = support ? tp / static_cast<double>(support) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.classes.push_back(m);
  }

  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  // both averages are sum_i w_i * m_i; with equal supports s_i / N and 1 / c
  // round to the same double, so the two agree bitwise
  auto average = [&](auto weight) {
    AverageMetrics a;
    for (std::size_t i = 0; i < c; ++i) {
      const double w = weight(r.classes[i]);
      a.precision += w * r.classes[i].precision;
      a.recall += w * r.classes[i].recall;
      a.f1 += w * r.classes[i].f1;
    }
    a.support = total;
    return a;
  };
  r.macro_avg = average([&](const ClassMetrics&) { return 1.0 / static_cast<double>(c); });
  r.weighted_avg = average(
      [&](const ClassMetrics& m) { return static_cast<double>(m.support) / static_cast<double>(total); });
  return r;
}

RocCurve roc_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) fail(ErrorKind::kShape, "roc_auc: scores and labels differ in length");
  const auto n_pos = static_cast<std::uint64_t>(std::count(positive.begin(), positive.end(), true));
  const auto n_neg = static_cast<std::uint64_t>(positive.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    fail(ErrorKind::kData, std::string("roc_auc: degenerate class with no ") + (n_pos ? "negative" : "positive") +
                               " samples");
  for (double s : scores)
    if (!std::isfinite(s)) fail(ErrorKind::kNumeric, "roc_auc: non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  // twice the area in pair units: sum of dfp * (tp_before + tp_after)
  std::uint64_t tp = 0, fp = 0, twice_area = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    std::uint64_t dtp = 0, dfp = 0;
    for (; k < order.size() && scores[order[k]] == s; ++k) (positive[order[k]] ? dtp : dfp) += 1;
    twice_area += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  curve.auc = static_cast<double>(twice_area) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return curve;
}

RocCurve roc_auc(std::span<const std::size_t> truth, const TensorD& scores, std::size_t class_index,
                 std::string class_name) {
  if (scores.rank() != 2 || scores.dim(0) != truth.size())
    fail(ErrorKind::kShape, "roc_auc: score rows do not match labels");
  if (class_index >= scores.dim(1)) fail(ErrorKind::kShape, "roc_auc: class index out of range");
  std::vector<double> column(truth.size());
  std::vector<bool> positive(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    column[k] = scores.at(k, class_index);
    positive[k] = truth[k] == class_index;
  }
  RocCurve curve;
  try {
    curve = roc_auc(column, positive);
  } catch (const Error& e) {
    const std::string label = class_name.empty() ? std::to_string(class_index) : class_name;
    fail(e.kind(), std::string(e.what()) + " (class " + label + ")");
  }
  curve.class_index = class_index;
  curve.class_name = class_name.empty() ? std::to_string(class_index) : std::move(class_name);
  return curve;
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "csv") return ReportFormat::kCsv;
  fail(ErrorKind::kConfig, "unknown report format '" + std::string(s) + "' (expected json or csv)");
}

namespace {

ordered_json average_json(const AverageMetrics& a) {
  return {{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}, {"support", a.support}};
}

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  return fields;
}

std::uint64_t parse_count(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(ErrorKind::kData, "bad count '" + s + "'");
  return v;
}

}  // namespace

ordered_json report_json(const ClassificationReport& r, const ConfusionMatrix& cm, std::span<const RocCurve> curves) {
  ordered_json j;
  j["classes"] = ordered_json::array();
  for (const auto& m : r.classes)
    j["classes"].push_back(
        {{"name", m.name}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}});
  j["accuracy"] = r.accuracy;
  j["macro_avg"] = average_json(r.macro_avg);
  j["weighted_avg"] = average_json(r.weighted_avg);

  ordered_json flags = ordered_json::array();
  for (const auto& m : r.classes) {
    if (m.precision_undefined) flags.push_back({{"class", m.name}, {"metric", "precision"}});
    if (m.recall_undefined) flags.push_back({{"class", m.name}, {"metric", "recall"}});
  }
  j["zero_division"] = flags;
  j["confusion"] = {{"labels", cm.class_names}, {"counts", cm.counts}};
  j["roc"] = ordered_json::array();
  for (const auto& c : curves) {
    ordered_json pts = ordered_json::array();
    for (const auto& p : c.points) pts.push_back({p.fpr, p.tpr});
    j["roc"].push_back({{"class", c.class_name}, {"auc", c.auc}, {"points", pts}});
  }
  return j;
}

std::string report_csv(const ClassificationReport& r) {
  std::string out = "class,precision,recall,f1,support\n";
  for (const auto& m : r.classes)
    out += csv_field(m.name) + ',' + num(m.precision) + ',' + num(m.recall) + ',' + num(m.f1) + ',' +
           std::to_string(m.support) + '\n';
  out += "accuracy,,," + num(r.accuracy) + ',' + std::to_string(r.macro_avg.support) + '\n';
  for (const auto& [label, a] : {std::pair{"macro avg", r.macro_avg}, std::pair{"weighted avg", r.weighted_avg}})
    out += std::string(label) + ',' + num(a.precision) + ',' + num(a.recall) + ',' + num(a.f1) + ',' +
           std::to_string(a.support) + '\n';
  return out;
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "true\\predicted";
  for (const auto& n : cm.class_names) out += ',' + csv_field(n);
  out += '\n';
  for (std::size_t i = 0; i < cm.size(); ++i) {
    out += csv_field(cm.class_names[i]);
    for (auto v : cm.counts[i]) out += ',' + std::to_string(v);
    out += '\n';
  }
  return out;
}

std::string roc_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr\n";
  for (const auto& p : curve.points) out += num(p.fpr) + ',' + num(p.tpr) + '\n';
  return out;
}

ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  try {
    const auto& c = j.contains("confusion") ? j.at("confusion") : j;
    ConfusionMatrix cm;
    cm.class_names = c.at("labels").get<std::vector<std::string>>();
    cm.counts = c.at("counts").get<std::vector<std::vector<std::uint64_t>>>();
    return cm;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("confusion_from_json: ") + e.what());
  }
}

ConfusionMatrix confusion_from_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kData, "confusion_from_csv: empty input");
  auto header = split_csv_line(line);
  ConfusionMatrix cm;
  cm.class_names.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != cm.class_names.size() + 1) fail(ErrorKind::kData, "confusion_from_csv: ragged row");
    std::vector<std::uint64_t> row;
    for (std::size_t k = 1; k < fields.size(); ++k) row.push_back(parse_count(fields[k]));
    cm.counts.push_back(std::move(row));
  }
  if (cm.counts.size() != cm.class_names.size()) fail(ErrorKind::kData, "confusion_from_csv: matrix is not square");
  return cm;
}

std::string roc_file_name(const std::string& class_name) {
  std::string safe = class_name;
  std::replace(safe.begin(), safe.end(), '/', '_');
  std::replace(safe.begin(), safe.end(), '\\', '_');
  return "roc_" + safe + ".csv";
}

std::vector<fs::path> emit_report(const ClassificationReport& r, const ConfusionMatrix& cm,
                                  std::span<const RocCurve> curves, ReportFormat format, const fs::path& out_dir) {
  if (r.classes.size() != cm.size()) fail(ErrorKind::kShape, "emit_report: report and confusion class counts differ");
  for (const auto& c : curves)
    if (c.class_index >= cm.size()) fail(ErrorKind::kShape, "emit_report: curve class out of range");
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  std::vector<fs::path> written;
  auto put = [&](const fs::path& name, const std::string& text) {
    write_text_atomic(out_dir / name, text);
    written.push_back(out_dir / name);
  };
  if (format == ReportFormat::kJson) {
    put("report.json", report_json(r, cm, curves).dump(2) + '\n');
  } else {
    put("report.csv", report_csv(r));
    put("confusion.csv", confusion_csv(cm));
    for (const auto& c : curves) put(roc_file_name(c.class_name), roc_csv(c));
  }
  return written;
}

std::string format_report(const ClassificationReport& r) {
  std::size_t width = std::string("weighted avg").size();
  for (const auto& m : r.classes) width = std::max(width, m.name.size());
  const int w = static_cast<int>(width);
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%*s %10s %10s %10s %10s\n\n", w, "", "precision", "recall", "f1-score", "support");
  out += buf;
  for (const auto& m : r.classes) {
    std::snprintf(buf, sizeof buf, "%*s %10.2f %10.2f %10.2f %10llu\n", w, m.name.c_str(), m.precision, m.recall, m.f1,
                  static_cast<unsigned long long>(m.support));
    out += buf;
  }
  out += '\n';
  std::snprintf(buf, sizeof buf, "%*s %10s %10s %10.2f %10llu\n", w, "accuracy", "", "", r.accuracy,
                static_cast<unsigned long long>(r.macro_avg.support));
  out += buf;
  for (const auto& [label, a] : {std::pair{"macro avg", r.macro_avg}, std::pair{"weighted avg", r.weighted_avg}}) {
    std::snprintf(buf, sizeof buf, "%*s %10.2f %10.2f %10.2f %10llu\n", w, label, a.precision, a.recall, a.f1,
                  static_cast<unsigned long long>(a.support));
    out += buf;
  }
  return out;
}

}  // namespace skinnet
