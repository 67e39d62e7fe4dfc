#include <algorithm>
#include <cstdio>

#include "slicevlp/evalkit/evalkit.hpp"

namespace slicevlp::eval {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string table_text(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      if (j) line += "  ";
      line += rows[i][j] + std::string(width[j] - rows[i][j].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (std::size_t j = 0; j < width.size(); ++j) total += width[j] + (j ? 2 : 0);
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

const char* kConfigNames[] = {"a", "b", "c", "d"};

}  // namespace

std::string probe_report_csv(const ProbeReport& r) {
  std::string out = "fold,held_out,accuracy,macro_f1\n";
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    out += std::to_string(f) + "," + std::to_string(r.folds[f].held_out) + "," + fmt(r.folds[f].accuracy) + "," +
           fmt(r.folds[f].macro_f1) + "\n";
  }
  out += "mean,," + fmt(r.accuracy_mean) + "," + fmt(r.f1_mean) + "\n";
  out += "std,," + fmt(r.accuracy_std) + "," + fmt(r.f1_std) + "\n";
  return out;
}

std::string probe_report_text(const ProbeReport& r) {
  std::vector<std::vector<std::string>> rows{{"fold", "held_out", "accuracy", "macro_f1"}};
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    rows.push_back({std::to_string(f), std::to_string(r.folds[f].held_out), fmt(r.folds[f].accuracy),
                    fmt(r.folds[f].macro_f1)});
  }
  rows.push_back({"mean", "", fmt(r.accuracy_mean), fmt(r.f1_mean)});
  rows.push_back({"std", "", fmt(r.accuracy_std), fmt(r.f1_std)});
  return "linear probe, stratified " + std::to_string(r.folds.size()) +
         "-fold CV (F1 is macro-averaged; std uses n-1)\n" + table_text(rows);
}

std::string match_report_csv(const MatchReport& r) {
  std::string out = "true_class";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) out += ",pred_" + std::to_string(c);
  out += "\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    out += std::to_string(t);
    for (auto n : r.confusion[t]) out += "," + std::to_string(n);
    out += "\n";
  }
  out += "precision," + fmt(r.precision) + "\n";
  return out;
}

std::string match_report_text(const MatchReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"true\\pred"};
  for (std::size_t c = 0; c < r.confusion.size(); ++c) head.push_back(std::to_string(c));
  rows.push_back(head);
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    std::vector<std::string> row{std::to_string(t)};
    for (auto n : r.confusion[t]) row.push_back(std::to_string(n));
    rows.push_back(row);
  }
  return "top-1 image-text matching: precision " + fmt(r.precision) + " over " + std::to_string(r.total) +
         " samples\n" + table_text(rows);
}

std::string ablation_report_csv(const AblationReport& r) {
  std::string out = "config,encoder,pooling,probe_accuracy,probe_macro_f1,match_precision\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    out += std::string(kConfigNames[i % 4]) + "," + row.encoder + "," + row.pooling + "," + fmt(row.probe_accuracy) +
           "," + fmt(row.probe_f1) + "," + fmt(row.match_precision) + "\n";
  }
  return out;
}

std::string ablation_report_text(const AblationReport& r) {
  std::vector<std::vector<std::string>> rows{
      {"config", "encoder", "pooling", "probe_acc", "probe_macro_f1", "match_top1"}};
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    rows.push_back({kConfigNames[i % 4], row.encoder, row.pooling, fmt(row.probe_accuracy), fmt(row.probe_f1),
                    fmt(row.match_precision)});
  }
  return table_text(rows);
}

}  // namespace slicevlp::eval
