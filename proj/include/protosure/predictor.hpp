#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace protosure {

// Maps texts to per-class probabilities (each row sums to 1). The empty string
// stands for a document with every sentence removed and must be accepted.
// Implementations must tolerate concurrent calls.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t num_classes() const = 0;
  virtual std::vector<std::vector<double>> predict(std::span<const std::string> texts) const = 0;

  std::vector<double> predict_one(const std::string& text) const {
    return predict(std::span<const std::string>(&text, 1)).front();
  }
};

}  // namespace protosure
