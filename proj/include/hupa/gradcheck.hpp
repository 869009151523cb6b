#pragma once

// Central finite-difference verification of analytic gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "hupa/layers.hpp"

namespace hupa::nn {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates sampled without replacement; all of them if the parameter
  /// vector is smaller.
  int samples = 200;
  /// Denominator floor of the relative error, so coordinates whose true
  /// gradient is numerically zero are judged on absolute error.
  double floor = 1e-6;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  int skipped_kinks = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares `analytic` against central differences of `loss()` with respect
/// to `x`, which is perturbed in place and restored. Coordinates where
/// either perturbation changes a ReLU activation pattern are skipped.
template <class Loss>
GradCheckResult grad_check(Loss&& loss, std::span<double> x, std::span<const double> analytic,
                           const GradCheckOptions& opt = {}) {
  if (x.size() != analytic.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  ReluTrace& trace = relu_trace();
  struct Restore {
    ReluTrace& trace;
    bool enabled;
    ~Restore() { trace.enabled = enabled; }
  } restore{trace, trace.enabled};
  trace.enabled = true;
  auto evaluate = [&](std::uint64_t& signature) {
    trace.hash = 0xcbf29ce484222325ull;
    const double value = loss();
    signature = trace.hash;
    if (!std::isfinite(value)) throw std::runtime_error("grad_check: non-finite loss");
    return value;
  };

  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  std::mt19937_64 rng(opt.seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (coords.size() > static_cast<std::size_t>(opt.samples)) coords.resize(static_cast<std::size_t>(opt.samples));

  std::uint64_t base_sig = 0;
  evaluate(base_sig);
  GradCheckResult result;
  for (std::size_t i : coords) {
    if (!std::isfinite(analytic[i])) throw std::runtime_error("grad_check: non-finite analytic gradient");
    const double orig = x[i];
    std::uint64_t sig_plus = 0, sig_minus = 0;
    x[i] = orig + opt.step;
    const double plus = evaluate(sig_plus);
    x[i] = orig - opt.step;
    const double minus = evaluate(sig_minus);
    x[i] = orig;
    if (sig_plus != base_sig || sig_minus != base_sig) {
      ++result.skipped_kinks;
      continue;
    }
    const double numeric = (plus - minus) / (2 * opt.step);
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric, opt.floor));
    ++result.checked;
  }
  return result;
}

}  // namespace hupa::nn
