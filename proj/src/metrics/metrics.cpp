#include "sptok/metrics/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "sptok/error.hpp"

namespace sptok::metrics {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::gold_count(std::size_t c) const {
  std::uint64_t t = 0;
  for (std::size_t p = 0; p < num_classes; ++p) t += at(c, p);
  return t;
}

std::uint64_t ConfusionMatrix::predicted_count(std::size_t c) const {
  std::uint64_t t = 0;
  for (std::size_t g = 0; g < num_classes; ++g) t += at(g, c);
  return t;
}

nlohmann::json ConfusionMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t g = 0; g < num_classes; ++g) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < num_classes; ++p) row.push_back(at(g, p));
    rows.push_back(row);
  }
  return rows;
}

ConfusionMatrix confusion_matrix(std::span<const int> gold, std::span<const int> predicted, std::size_t num_classes,
                                 std::vector<std::string> class_names) {
  require(gold.size() == predicted.size(), ErrorCode::kLengthMismatch,
          "gold has " + std::to_string(gold.size()) + " labels, predictions " + std::to_string(predicted.size()));
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.counts.assign(num_classes * num_classes, 0);
  cm.class_names = std::move(class_names);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool ok = gold[i] >= 0 && predicted[i] >= 0 && static_cast<std::size_t>(gold[i]) < num_classes &&
                    static_cast<std::size_t>(predicted[i]) < num_classes;
    require(ok, ErrorCode::kLabelOutOfRange, "label out of range at index " + std::to_string(i));
    cm.counts[static_cast<std::size_t>(gold[i]) * num_classes + static_cast<std::size_t>(predicted[i])] += 1;
  }
  return cm;
}

double class_f1(const ConfusionMatrix& cm, std::size_t c) {
  const double tp = static_cast<double>(cm.at(c, c));
  const double fp = static_cast<double>(cm.predicted_count(c)) - tp;
  const double fn = static_cast<double>(cm.gold_count(c)) - tp;
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  std::vector<double> out(cm.num_classes);
  for (std::size_t c = 0; c < cm.num_classes; ++c) out[c] = class_f1(cm, c);
  return out;
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.num_classes == 0) return 0.0;
  double sum = 0;
  for (std::size_t c = 0; c < cm.num_classes; ++c) sum += class_f1(cm, c);
  return sum / static_cast<double>(cm.num_classes);
}

double positive_f1(const ConfusionMatrix& cm, std::size_t positive_class) {
  require(positive_class < cm.num_classes, ErrorCode::kLabelOutOfRange, "positive class out of range");
  return class_f1(cm, positive_class);
}

MetricKind parse_metric(const std::string& name) {
  if (name == "macro_f1") return MetricKind::kMacroF1;
  if (name == "positive_f1") return MetricKind::kPositiveF1;
  fail(ErrorCode::kInvalidConfig, "unknown metric '" + name + "'");
}

std::string metric_name(MetricKind kind) { return kind == MetricKind::kMacroF1 ? "macro_f1" : "positive_f1"; }

double task_metric(const ConfusionMatrix& cm, MetricKind kind, std::size_t positive_class) {
  return kind == MetricKind::kMacroF1 ? macro_f1(cm) : positive_f1(cm, positive_class);
}

std::vector<std::int64_t> DiscrepancyReport::ranked_tokens(std::size_t c, std::uint64_t min_occurrences) const {
  std::vector<const TokenAssociation*> rows;
  for (const auto& t : tokens) {
    if (t.occurrences >= min_occurrences) rows.push_back(&t);
  }
  std::stable_sort(rows.begin(), rows.end(), [c](const TokenAssociation* a, const TokenAssociation* b) {
    if (a->class_share[c] != b->class_share[c]) return a->class_share[c] > b->class_share[c];
    if (a->per_class[c] != b->per_class[c]) return a->per_class[c] > b->per_class[c];
    return a->token < b->token;
  });
  std::vector<std::int64_t> out;
  out.reserve(rows.size());
  for (const auto* r : rows) out.push_back(r->token);
  return out;
}

namespace {

std::string class_label(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() ? names[c] : std::to_string(c);
}

}  // namespace

nlohmann::json DiscrepancyReport::to_json() const {
  nlohmann::json j;
  j["num_samples"] = num_samples;
  j["num_classes"] = num_classes;
  j["class_names"] = class_names;
  j["a_correct_b_wrong"] = a_correct_b_wrong;
  j["a_wrong_b_correct"] = a_wrong_b_correct;
  nlohmann::json dis = nlohmann::json::array();
  for (const auto& d : disagreements) {
    dis.push_back({{"sample", d.sample}, {"id", d.sample_id}, {"gold", d.gold}, {"from", d.pred_a}, {"to", d.pred_b}});
  }
  j["disagreements"] = dis;
  nlohmann::json flip_rows = nlohmann::json::array();
  for (std::size_t a = 0; a < num_classes; ++a) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t b = 0; b < num_classes; ++b) row.push_back(flips[a * num_classes + b]);
    flip_rows.push_back(row);
  }
  j["flips"] = flip_rows;
  nlohmann::json toks = nlohmann::json::array();
  for (const auto& t : tokens) {
    toks.push_back({{"token", t.token},
                    {"occurrences", t.occurrences},
                    {"per_class", t.per_class},
                    {"class_frequency", t.class_frequency},
                    {"class_share", t.class_share}});
  }
  j["tokens"] = toks;
  return j;
}

std::string DiscrepancyReport::to_markdown(std::size_t top_k) const {
  std::ostringstream os;
  os << "## Prediction discrepancies\n\n";
  os << "Samples: " << num_samples << ", disagreements: " << disagreements.size()
     << " (A right / B wrong: " << a_correct_b_wrong << ", A wrong / B right: " << a_wrong_b_correct << ")\n\n";
  os << "| from \\ to |";
  for (std::size_t b = 0; b < num_classes; ++b) os << " " << class_label(class_names, b) << " |";
  os << "\n|---|";
  for (std::size_t b = 0; b < num_classes; ++b) os << "---|";
  os << "\n";
  for (std::size_t a = 0; a < num_classes; ++a) {
    os << "| " << class_label(class_names, a) << " |";
    for (std::size_t b = 0; b < num_classes; ++b) os << " " << flips[a * num_classes + b] << " |";
    os << "\n";
  }
  os << "\n## Class-associated tokens\n\n";
  for (std::size_t c = 0; c < num_classes; ++c) {
    os << "### " << class_label(class_names, c) << "\n\n| token | occurrences | in class | share |\n|---|---|---|---|\n";
    const auto ranked = ranked_tokens(c);
    for (std::size_t i = 0; i < std::min(top_k, ranked.size()); ++i) {
      const auto it = std::lower_bound(tokens.begin(), tokens.end(), ranked[i],
                                       [](const TokenAssociation& t, std::int64_t id) { return t.token < id; });
      char share[32];
      std::snprintf(share, sizeof(share), "%.3f", it->class_share[c]);
      os << "| " << it->token << " | " << it->occurrences << " | " << it->per_class[c] << " | " << share << " |\n";
    }
    os << "\n";
  }
  return os.str();
}

DiscrepancyReport discrepancy_report(std::span<const int> gold, std::span<const int> preds_a,
                                     std::span<const int> preds_b,
                                     std::span<const std::vector<std::int64_t>> token_occurrences,
                                     std::size_t num_classes, std::span<const std::string> sample_ids,
                                     std::vector<std::string> class_names) {
  const std::size_t n = gold.size();
  require(preds_a.size() == n && preds_b.size() == n && (token_occurrences.empty() || token_occurrences.size() == n) &&
              (sample_ids.empty() || sample_ids.size() == n),
          ErrorCode::kLengthMismatch, "discrepancy_report inputs differ in length");
  auto check = [num_classes](int v) {
    require(v >= 0 && static_cast<std::size_t>(v) < num_classes, ErrorCode::kLabelOutOfRange, "label out of range");
  };

  DiscrepancyReport r;
  r.num_samples = n;
  r.num_classes = num_classes;
  r.class_names = std::move(class_names);
  r.flips.assign(num_classes * num_classes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    check(gold[i]);
    check(preds_a[i]);
    check(preds_b[i]);
    if (preds_a[i] == preds_b[i]) continue;
    r.disagreements.push_back(
        {i, sample_ids.empty() ? std::to_string(i) : sample_ids[i], gold[i], preds_a[i], preds_b[i]});
    r.flips[static_cast<std::size_t>(preds_a[i]) * num_classes + static_cast<std::size_t>(preds_b[i])] += 1;
    if (preds_a[i] == gold[i]) ++r.a_correct_b_wrong;
    if (preds_b[i] == gold[i]) ++r.a_wrong_b_correct;
  }

  std::map<std::int64_t, TokenAssociation> table;
  for (std::size_t i = 0; i < token_occurrences.size(); ++i) {
    for (std::int64_t tok : token_occurrences[i]) {
      auto& row = table[tok];
      if (row.per_class.empty()) {
        row.token = tok;
        row.per_class.assign(num_classes, 0);
      }
      row.occurrences += 1;
      row.per_class[static_cast<std::size_t>(gold[i])] += 1;
    }
  }
  for (auto& [tok, row] : table) {
    row.class_frequency.resize(num_classes);
    row.class_share.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
      row.class_frequency[c] = n == 0 ? 0.0 : static_cast<double>(row.per_class[c]) / static_cast<double>(n);
      row.class_share[c] = static_cast<double>(row.per_class[c]) / static_cast<double>(row.occurrences);
    }
    r.tokens.push_back(std::move(row));
  }
  return r;
}

}  // namespace sptok::metrics
