#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <tuple>
#include <utility>
#include <vector>

namespace superres::quadrature {

struct Box {
  double x0, x1, y0, y1;
};

struct Result {
  double value = 0.0;
  double error = 0.0;  // achieved absolute error estimate
  int regions = 0;
  bool converged = false;
};

struct Options {
  double abs_tol = 1e-10;
  double rel_tol = 0.0;
  int max_regions = 20000;
  int initial_splits = 4;  // per axis
};

namespace detail {

// 15-point Kronrod rule with embedded 7-point Gauss rule on [-1, 1].
struct GaussKronrod15 {
  std::array<double, 15> nodes{};
  std::array<double, 15> kronrod{};
  std::array<double, 15> gauss{};

  GaussKronrod15() {
    constexpr std::array<double, 8> xgk = {
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.0};
    constexpr std::array<double, 8> wgk = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    constexpr std::array<double, 4> wg = {
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
    for (int i = 0; i < 7; ++i) {
      nodes[i] = -xgk[i];
      nodes[14 - i] = xgk[i];
      kronrod[i] = kronrod[14 - i] = wgk[i];
      const double g = (i % 2 == 1) ? wg[i / 2] : 0.0;
      gauss[i] = gauss[14 - i] = g;
    }
    nodes[7] = 0.0;
    kronrod[7] = wgk[7];
    gauss[7] = wg[3];
  }
};

inline const GaussKronrod15& rule() {
  static const GaussKronrod15 r;
  return r;
}

struct Region {
  Box box;
  double value;
  double err_x;
  double err_y;
  double error() const { return err_x + err_y; }
  bool operator<(const Region& other) const { return error() < other.error(); }
};

template <class F>
Region evaluate(F& f, const Box& b) {
  const auto& r = rule();
  const double cx = 0.5 * (b.x0 + b.x1), hx = 0.5 * (b.x1 - b.x0);
  const double cy = 0.5 * (b.y0 + b.y1), hy = 0.5 * (b.y1 - b.y0);
  double kk = 0.0, gk = 0.0, kg = 0.0;
  for (int i = 0; i < 15; ++i) {
    const double x = cx + hx * r.nodes[i];
    double row_k = 0.0, row_g = 0.0;
    for (int j = 0; j < 15; ++j) {
      const double v = f(x, cy + hy * r.nodes[j]);
      row_k += r.kronrod[j] * v;
      row_g += r.gauss[j] * v;
    }
    kk += r.kronrod[i] * row_k;
    gk += r.gauss[i] * row_k;
    kg += r.kronrod[i] * row_g;
  }
  const double area = hx * hy;
  return Region{b, kk * area, std::abs(kk - gk) * area, std::abs(kk - kg) * area};
}

}  // namespace detail

/// Globally adaptive cubature of f(x, y) over a rectangle. The region with
/// the largest error estimate is bisected along the axis that dominates its
/// error until the total estimate meets max(abs_tol, rel_tol * |value|).
template <class F>
Result integrate_2d(F&& f, const Box& box, const Options& opt = {}) {
  std::priority_queue<detail::Region> queue;
  const int n = std::max(1, opt.initial_splits);
  const double dx = (box.x1 - box.x0) / n, dy = (box.y1 - box.y0) / n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Box b{box.x0 + i * dx, (i + 1 == n) ? box.x1 : box.x0 + (i + 1) * dx,
                  box.y0 + j * dy, (j + 1 == n) ? box.y1 : box.y0 + (j + 1) * dy};
      queue.push(detail::evaluate(f, b));
    }
  }

  auto totals = [&queue] {
    auto copy = queue;
    double v = 0.0, e = 0.0;
    while (!copy.empty()) {
      v += copy.top().value;
      e += copy.top().error();
      copy.pop();
    }
    return std::pair{v, e};
  };

  auto [value, error] = totals();
  int regions = static_cast<int>(queue.size());
  while (error > std::max(opt.abs_tol, opt.rel_tol * std::abs(value)) && regions < opt.max_regions) {
    const detail::Region worst = queue.top();
    queue.pop();
    Box a = worst.box, b = worst.box;
    if (worst.err_x >= worst.err_y) {
      a.x1 = b.x0 = 0.5 * (worst.box.x0 + worst.box.x1);
    } else {
      a.y1 = b.y0 = 0.5 * (worst.box.y0 + worst.box.y1);
    }
    const auto ra = detail::evaluate(f, a);
    const auto rb = detail::evaluate(f, b);
    value += ra.value + rb.value - worst.value;
    error += ra.error() + rb.error() - worst.error();
    queue.push(ra);
    queue.push(rb);
    ++regions;
    // Incremental sums drift; resynchronize now and then.
    if (regions % 256 == 0) std::tie(value, error) = totals();
  }
  std::tie(value, error) = totals();
  return Result{value, error, regions, error <= std::max(opt.abs_tol, opt.rel_tol * std::abs(value))};
}

}  // namespace superres::quadrature
