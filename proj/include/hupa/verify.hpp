#pragma once

// Finite-difference verification suite, run in double precision: one check
// per layer kind plus both full models at width 16.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hupa/gradcheck.hpp"
#include "hupa/trainer.hpp"

namespace hupa {

struct GradCheckLine {
  std::string name;
  double max_rel_error = 0;
  int checked = 0;
  int skipped_kinks = 0;
};

struct GradCheckSuiteOptions {
  double threshold = 1e-4;
  int width = 16;
  std::uint64_t seed = 1;
  /// Negative control: scales the analytic conv weight gradient by 1.05.
  bool corrupt_conv_backward = false;
};

struct GradCheckReport {
  std::vector<GradCheckLine> lines;
  double threshold = 0;

  bool passed() const {
    for (const auto& l : lines)
      if (!(l.max_rel_error < threshold) || l.checked == 0) return false;
    return true;
  }
};

namespace detail {

using nn::Tensor;

inline Tensor<double> random_tensor(std::vector<int> shape, std::mt19937_64& rng) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void merge(GradCheckLine& line, const nn::GradCheckResult& r) {
  line.max_rel_error = std::max(line.max_rel_error, r.max_rel_error);
  line.checked += r.checked;
  line.skipped_kinks += r.skipped_kinks;
}

/// Checks parameters (one stratum per tensor) and optionally an input under
/// a scalar loss. `backward` must refresh ps gradients and return dL/dx.
inline GradCheckLine check_graph(std::string name, nn::ParamSet<double>& ps, Tensor<double>* x,
                                 const std::function<double()>& loss,
                                 const std::function<Tensor<double>()>& backward, int per_tensor,
                                 const std::function<void(nn::ParamSet<double>&)>& tamper = {}) {
  GradCheckLine line{std::move(name)};
  const Tensor<double> gx = backward();
  if (tamper) tamper(ps);
  // The loss may overwrite gradients, so snapshot them first.
  std::vector<Tensor<double>> analytic;
  for (const auto& p : ps) analytic.push_back(p.grad);
  std::uint64_t seed = 1;
  std::size_t i = 0;
  for (auto& p : ps)
    merge(line, nn::grad_check(loss, p.value.span(), analytic[i++].span(), {.samples = per_tensor, .seed = seed++}));
  if (x) merge(line, nn::grad_check(loss, x->span(), gx.span(), {.samples = 4 * per_tensor, .seed = seed}));
  return line;
}

}  // namespace detail

inline GradCheckReport run_gradcheck_suite(const GradCheckSuiteOptions& opt = {}) {
  using detail::random_tensor;
  using nn::ParamSet;
  using nn::Tensor;
  GradCheckReport report;
  report.threshold = opt.threshold;
  std::mt19937_64 rng(opt.seed);
  auto scale_conv_grads = [&](ParamSet<double>& ps) {
    if (!opt.corrupt_conv_backward) return;
    for (auto& p : ps)
      if (p.value.rank() == 4)
        for (auto& g : p.grad.vec()) g *= 1.05;
  };

  {
    ParamSet<double> ps;
    const auto conv = nn::Conv2d::create(ps, "conv", 2, 3, 3, 2);
    conv.init(ps, rng);
    Tensor<double> x = random_tensor({2, 5, 5}, rng);
    const Tensor<double> r = random_tensor({3, 3, 3}, rng);
    report.lines.push_back(detail::check_graph(
        std::string(nn::layer_kind_name(nn::LayerKind::conv3x3)), ps, &x,
        [&] { return detail::dot(conv.forward(ps, x), r); },
        [&] {
          ps.zero_grad();
          nn::ConvCache<double> c;
          conv.forward(ps, x, c);
          return conv.backward(ps, c, r);
        },
        64, scale_conv_grads));
  }
  {
    ParamSet<double> ps;
    const auto lin = nn::Linear::create(ps, "linear", 6, 4);
    lin.init(ps, rng);
    Tensor<double> x = random_tensor({3, 6}, rng);
    const Tensor<double> r = random_tensor({3, 4}, rng);
    report.lines.push_back(detail::check_graph(
        std::string(nn::layer_kind_name(nn::LayerKind::linear)), ps, &x,
        [&] { return detail::dot(lin.forward(ps, x), r); },
        [&] {
          ps.zero_grad();
          nn::LinearCache<double> c;
          lin.forward(ps, x, &c);
          return lin.backward(ps, c, r);
        },
        64));
  }
  {
    // relu between two linear layers, so the kink filter is exercised.
    ParamSet<double> ps;
    const auto a = nn::Linear::create(ps, "a", 5, 7);
    const auto b = nn::Linear::create(ps, "b", 7, 3);
    a.init(ps, rng);
    b.init(ps, rng);
    Tensor<double> x = random_tensor({4, 5}, rng);
    const Tensor<double> r = random_tensor({4, 3}, rng);
    report.lines.push_back(detail::check_graph(
        std::string(nn::layer_kind_name(nn::LayerKind::relu)), ps, &x,
        [&] { return detail::dot(b.forward(ps, nn::relu(a.forward(ps, x))), r); },
        [&] {
          ps.zero_grad();
          nn::LinearCache<double> ca, cb;
          const Tensor<double> y = nn::relu(a.forward(ps, x, &ca));
          b.forward(ps, y, &cb);
          Tensor<double> gy = b.backward(ps, cb, r);
          nn::relu_backward_inplace(y.data(), gy.data(), gy.size());
          return a.backward(ps, ca, gy);
        },
        64));
  }
  {
    ParamSet<double> ps;
    const auto block = nn::ResidualBlock::create(ps, "block", 2, 3, 2);
    block.init(ps, rng);
    Tensor<double> x = random_tensor({2, 5, 5}, rng);
    const Tensor<double> r = random_tensor({3, 3, 3}, rng);
    report.lines.push_back(detail::check_graph(
        std::string(nn::layer_kind_name(nn::LayerKind::residual_block)), ps, &x,
        [&] { return detail::dot(block.forward(ps, x), r); },
        [&] {
          ps.zero_grad();
          nn::ResidualCache<double> c;
          block.forward(ps, x, c);
          return block.backward(ps, c, r);
        },
        64, scale_conv_grads));
  }
  {
    ParamSet<double> ps;
    const nn::AvgPool pool{2};
    Tensor<double> x = random_tensor({2, 4, 4}, rng);
    const Tensor<double> r = random_tensor({2, 2, 2}, rng);
    report.lines.push_back(detail::check_graph(
        std::string(nn::layer_kind_name(nn::LayerKind::avgpool)), ps, &x,
        [&] { return detail::dot(pool.forward(x), r); }, [&] { return pool.backward(x.shape(), r); }, 16));
  }
  {
    ParamSet<double> ps;
    Tensor<double> x = random_tensor({8}, rng);
    report.lines.push_back(detail::check_graph(
        std::string(nn::layer_kind_name(nn::LayerKind::softmax_xent)), ps, &x,
        [&] { return nn::softmax_cross_entropy(x, 3).loss; },
        [&] { return nn::softmax_cross_entropy(x, 3).grad; }, 2));
  }

  // Full models on a small batch drawn from two maps.
  std::vector<Sample> samples;
  for (int map_id : {0, 97}) {
    const Map& map = all_maps()[static_cast<std::size_t>(map_id)];
    const auto cells = map.open_cells();
    for (int k = 0; k < 5; ++k) {
      const Cell g = cells[rng() % cells.size()];
      Cell s = g;
      while (s == g) s = cells[rng() % cells.size()];
      const auto field = distance_field(map, g);
      samples.push_back({static_cast<std::uint16_t>(map_id), static_cast<std::uint8_t>(s.row),
                         static_cast<std::uint8_t>(s.col), static_cast<std::uint8_t>(g.row),
                         static_cast<std::uint8_t>(g.col), static_cast<std::uint8_t>(canonical_action(field, s).id()),
                         optimal_action_set(field, s)});
    }
  }
  std::vector<std::size_t> batch(samples.size());
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  for (ModelKind kind : {ModelKind::hupa, ModelKind::embedding}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.width = opt.width;
    PolicyModel<double> model(spec);
    model.init(rng);
    auto loss = [&] { return accumulate_gradients(model, samples, batch).first; };
    report.lines.push_back(detail::check_graph(
        std::string(model_kind_name(kind)) + "_w" + std::to_string(opt.width), model.params(), nullptr, loss,
        [&] {
          loss();
          return Tensor<double>();
        },
        12, scale_conv_grads));
  }
  return report;
}

inline std::string format_report(const GradCheckReport& r) {
  std::ostringstream os;
  for (const auto& l : r.lines) {
    os << l.name << " max_rel_error=" << l.max_rel_error << " checked=" << l.checked
       << " skipped_kinks=" << l.skipped_kinks << " " << (l.max_rel_error < r.threshold && l.checked > 0 ? "ok" : "FAIL")
       << "\n";
  }
  return os.str();
}

}  // namespace hupa
