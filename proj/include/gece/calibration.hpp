#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gece {

class CalibrationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CalibrationRecord {
  double confidence = 0.0;  // [0, 1]
  bool correct = false;
};

/// Expected calibration error over `num_bins` equal-width bins. Bin b covers
/// [b/B, (b+1)/B); the last bin also holds 1.0. Empty bins contribute 0.
double ece(std::span<const CalibrationRecord> records, std::size_t num_bins);

/// Index of the bin holding `confidence`, using exact comparisons against
/// the edges b/B.
std::size_t ece_bin_index(double confidence, std::size_t num_bins);

struct GradientVector {
  std::string instance_id;
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
};

/// Element-wise mean. Throws CalibrationError naming the first instance
/// whose dimension differs from the first vector's.
GradientVector dataset_mean_gradient(std::span<const GradientVector> grads);

double gradient_alignment(const GradientVector& mean_grad, const GradientVector& inst_grad);

/// The four measured quantities of one instance.
struct GeceInputs {
  double agreement = 0.0;        // METEOR (or a swapped-in metric), [0, 1]
  double mean_token_prob = 0.0;  // (0, 1]
  double alpha = 0.0;            // average word frequency, > 0
  double gradient_dot = 0.0;     // E(grad) . grad
};

struct GeceScore {
  double value = 0.0;
  GeceInputs components;
  bool denominator_floored = false;
};

inline constexpr double kDefaultDenomFloor = 1e-6;

/// |agreement - mean_token_prob| / (alpha * max(gradient_dot, denom_floor)).
GeceScore gece(const GeceInputs& inputs, double denom_floor = kDefaultDenomFloor);

/// Numerator only: the score with the frequency and gradient terms removed.
double gece_numerator(const GeceInputs& inputs);

}  // namespace gece
