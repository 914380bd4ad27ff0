#include "gece/calibration.hpp"

#include <cmath>

namespace gece {

std::size_t ece_bin_index(double confidence, std::size_t num_bins) {
  const double b = static_cast<double>(num_bins);
  auto idx = static_cast<std::size_t>(std::floor(confidence * b));
  if (idx >= num_bins) return num_bins - 1;
  // confidence * B can round across an edge; settle against the edges.
  if (idx > 0 && confidence < static_cast<double>(idx) / b) --idx;
  if (idx + 1 < num_bins && confidence >= static_cast<double>(idx + 1) / b) ++idx;
  return idx;
}

double ece(std::span<const CalibrationRecord> records, std::size_t num_bins) {
  if (num_bins == 0) throw CalibrationError("ece needs at least one bin");
  if (records.empty()) throw CalibrationError("ece of an empty record set");

  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<double> correct(num_bins, 0.0);
  std::vector<std::size_t> count(num_bins, 0);
  for (const auto& r : records) {
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw CalibrationError("confidence outside [0, 1]");
    }
    const std::size_t b = ece_bin_index(r.confidence, num_bins);
    conf_sum[b] += r.confidence;
    correct[b] += r.correct ? 1.0 : 0.0;
    ++count[b];
  }
  const double n = static_cast<double>(records.size());
  double total = 0.0;
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    total += (nb / n) * std::abs(correct[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

GradientVector dataset_mean_gradient(std::span<const GradientVector> grads) {
  if (grads.empty()) throw CalibrationError("mean gradient of an empty dataset");
  const std::size_t dim = grads.front().dimension();
  if (dim == 0) throw CalibrationError("gradient '" + grads.front().instance_id + "' is empty");
  GradientVector mean{"mean", std::vector<double>(dim, 0.0)};
  for (const auto& g : grads) {
    if (g.dimension() != dim) {
      throw CalibrationError("gradient dimension mismatch for instance '" + g.instance_id +
                             "': expected " + std::to_string(dim) + ", got " +
                             std::to_string(g.dimension()));
    }
    for (std::size_t j = 0; j < dim; ++j) mean.values[j] += g.values[j];
  }
  for (double& v : mean.values) v /= static_cast<double>(grads.size());
  return mean;
}

double gradient_alignment(const GradientVector& mean_grad, const GradientVector& inst_grad) {
  if (mean_grad.dimension() != inst_grad.dimension()) {
    throw CalibrationError("gradient dimension mismatch for instance '" + inst_grad.instance_id +
                           "'");
  }
  double dot = 0.0;
  for (std::size_t j = 0; j < mean_grad.dimension(); ++j) {
    dot += mean_grad.values[j] * inst_grad.values[j];
  }
  return dot;
}

double gece_numerator(const GeceInputs& inputs) {
  return std::abs(inputs.agreement - inputs.mean_token_prob);
}

GeceScore gece(const GeceInputs& inputs, double denom_floor) {
  if (!std::isfinite(inputs.agreement) || !std::isfinite(inputs.mean_token_prob) ||
      !std::isfinite(inputs.alpha) || !std::isfinite(inputs.gradient_dot) ||
      !std::isfinite(denom_floor)) {
    throw CalibrationError("gece inputs must be finite");
  }
  if (inputs.agreement < 0.0 || inputs.agreement > 1.0) {
    throw CalibrationError("agreement score outside [0, 1]");
  }
  if (!(inputs.mean_token_prob > 0.0 && inputs.mean_token_prob <= 1.0)) {
    throw CalibrationError("mean token probability outside (0, 1]");
  }
  if (!(inputs.alpha > 0.0)) throw CalibrationError("alpha must be positive");
  if (!(denom_floor > 0.0)) throw CalibrationError("denominator floor must be positive");

  GeceScore out;
  out.components = inputs;
  out.denominator_floored = inputs.gradient_dot < denom_floor;
  const double d = out.denominator_floored ? denom_floor : inputs.gradient_dot;
  out.value = gece_numerator(inputs) / (inputs.alpha * d);
  if (!std::isfinite(out.value)) throw CalibrationError("gece overflowed");
  return out;
}

}  // namespace gece
