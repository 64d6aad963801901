#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attnhar {

// C x C counts, entry (i, j) = true class i predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  void add(std::size_t true_class, std::size_t predicted_class);
  void merge(const ConfusionMatrix& other);

  std::size_t classes() const { return classes_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t at(std::size_t i, std::size_t j) const { return counts_[i * classes_ + j]; }

 private:
  std::size_t classes_;
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct EvalReport {
  std::vector<double> precision, recall, f1;
  std::vector<std::uint64_t> support;
  double mean_f1 = 0.0;      // unweighted macro mean over all classes
  double weighted_f1 = 0.0;  // support-weighted alternative
  double accuracy = 0.0;

  std::string to_text() const;
  std::string to_json() const;
};

// Per-class precision/recall/F1 with the 0/0 -> 0 convention; mean_f1 is the
// plain average over all C classes.
EvalReport report(const ConfusionMatrix& cm);

}  // namespace attnhar
