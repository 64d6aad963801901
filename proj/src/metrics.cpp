#include "attnhar/metrics.hpp"

#include <sstream>

#include "attnhar/errors.hpp"
#include "json.hpp"

namespace attnhar {

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ArgumentError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t true_class, std::size_t predicted_class) {
  if (true_class >= classes_ || predicted_class >= classes_) {
    throw ArgumentError("confusion matrix: class index out of range (" +
                        std::to_string(true_class) + ", " +
                        std::to_string(predicted_class) + ") with C=" +
                        std::to_string(classes_));
  }
  ++counts_[true_class * classes_ + predicted_class];
  ++total_;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_)
    throw ArgumentError("confusion matrix merge: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
}

EvalReport report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArgumentError("report: empty confusion matrix");
  const std::size_t c = cm.classes();
  EvalReport rep;
  rep.precision.assign(c, 0.0);
  rep.recall.assign(c, 0.0);
  rep.f1.assign(c, 0.0);
  rep.support.assign(c, 0);

  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < c; ++i) {
    std::uint64_t tp = cm.at(i, i);
    std::uint64_t fp = 0, fn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == i) continue;
      fp += cm.at(j, i);
      fn += cm.at(i, j);
    }
    correct += tp;
    rep.support[i] = tp + fn;
    rep.precision[i] = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    rep.recall[i] = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double pr = rep.precision[i] + rep.recall[i];
    rep.f1[i] = pr == 0.0 ? 0.0 : 2.0 * rep.precision[i] * rep.recall[i] / pr;
  }

  double macro = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    macro += rep.f1[i];
    weighted += rep.f1[i] * static_cast<double>(rep.support[i]);
  }
  rep.mean_f1 = macro / static_cast<double>(c);
  rep.weighted_f1 = weighted / static_cast<double>(cm.total());
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(cm.total());
  return rep;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "class  precision  recall     f1         support\n";
  for (std::size_t i = 0; i < f1.size(); ++i) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-6zu %-10.4f %-10.4f %-10.4f %zu\n", i,
                  precision[i], recall[i], f1[i], static_cast<std::size_t>(support[i]));
    os << line;
  }
  char tail[160];
  std::snprintf(tail, sizeof(tail),
                "mean_f1 %.6f  weighted_f1 %.6f  accuracy %.6f\n", mean_f1,
                weighted_f1, accuracy);
  os << tail;
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["support"] = support;
  j["mean_f1"] = mean_f1;
  j["weighted_f1"] = weighted_f1;
  j["accuracy"] = accuracy;
  return j.dump(2);
}

}  // namespace attnhar
