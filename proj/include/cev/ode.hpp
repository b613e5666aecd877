#pragma once

#include "cev/diagnostics.hpp"

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace cev::ode {

/// Scalar analogue  y' + beta^2 a(y) d/dt(a(y) y) = f(t, y)  of the corrected
/// model, used to study the time discretizations without pressure or space.
struct Problem {
  std::function<double(double)> a;
  std::function<double(double, double)> f;  // f(t, y)
  double beta = 0.0;
};

struct StepOutput {
  double y = 0.0;
  double y_temp = 0.0;  // Method 2 Step 1 value (equals y for the other methods)
};

namespace detail {

// Solve c * y - rhs = scale * f(t, y) for y by Newton with a centred
// difference derivative; exact in one or two sweeps when f is affine in y.
inline double solve_implicit(double c, double rhs, double scale, double t, const Problem& p, double guess) {
  double y = guess;
  for (int it = 0; it < 60; ++it) {
    const double g = c * y - rhs - scale * p.f(t, y);
    const double h = 1e-6 * std::max(1.0, std::abs(y));
    const double dg = c - scale * (p.f(t, y + h) - p.f(t, y - h)) / (2.0 * h);
    if (dg == 0.0 || !std::isfinite(dg)) throw std::runtime_error("ode: singular implicit step");
    const double dy = g / dg;
    y -= dy;
    if (std::abs(dy) <= 1e-16 * std::max(1.0, std::abs(y))) break;
  }
  return y;
}

} // namespace detail

/// One step of Method 1, 2 or 3. `history` is newest first: y^n, y^{n-1}
/// (Methods 1-2), plus y^{n-2}, y^{n-3} for Method 3 (its extrapolated
/// weights a*^{n+1}, a*^n, a*^{n-1}). `t_next` = t_{n+1}.
inline StepOutput step(Method m, std::span<const double> history, const Problem& p, double t_next, double k) {
  const double b2 = p.beta * p.beta;
  if (history.size() < 2) throw std::invalid_argument("ode::step: need y^n and y^{n-1}");
  const double yn = history[0];
  const double an = p.a(history[0]), ap = p.a(history[1]);
  switch (m) {
  case Method::linearly_implicit: {
    const double y = detail::solve_implicit(1.0 + b2 * an * an, yn + b2 * an * ap * yn, k, t_next, p, yn);
    return {y, y};
  }
  case Method::modular: {
    const double yt = detail::solve_implicit(1.0, yn, k, t_next, p, yn);
    const double y = (yt + b2 * an * ap * yn) / (1.0 + b2 * an * an);
    return {y, yt};
  }
  case Method::bdf2_ab2: {
    if (history.size() < 4) throw std::invalid_argument("ode::step: Method 3 needs four history levels");
    const double a2 = p.a(history[2]), a3 = p.a(history[3]);
    const double ym = history[1];
    const double A1 = 2.0 * an - ap, A0 = 2.0 * ap - a2, Am = 2.0 * a2 - a3;
    const double y = detail::solve_implicit(3.0 + 3.0 * b2 * A1 * A1,
                                            4.0 * yn - ym + b2 * A1 * (4.0 * A0 * yn - Am * ym), 2.0 * k, t_next, p,
                                            yn);
    return {y, y};
  }
  }
  throw std::logic_error("ode::step: unknown method");
}

struct Trajectory {
  std::vector<double> t;
  std::vector<double> y;
  std::vector<double> y_temp;
};

/// Integrate `steps` steps from y0. Method 3 is started by three Method 1
/// steps unless `startup` supplies exact y^1..y^3.
inline Trajectory solve(Method m, double y0, const Problem& p, double k, int steps,
                        std::span<const double> startup = {}) {
  Trajectory tr;
  tr.t.push_back(0.0);
  tr.y.push_back(y0);
  tr.y_temp.push_back(y0);
  for (int n = 0; n < steps; ++n) {
    const double t_next = (n + 1) * k;
    const std::size_t sz = tr.y.size();
    auto hist = [&](std::size_t back) { return tr.y[sz - 1 - std::min(back, sz - 1)]; };
    StepOutput out;
    if (m == Method::bdf2_ab2 && n < 3) {
      if (!startup.empty()) {
        out = {startup[static_cast<std::size_t>(n)], startup[static_cast<std::size_t>(n)]};
      } else {
        const double h[2] = {hist(0), hist(1)};
        out = step(Method::linearly_implicit, h, p, t_next, k);
      }
    } else {
      // y^{-1} = y^0 so that a^{-1} = a^0
      const double h[4] = {hist(0), hist(1), hist(2), hist(3)};
      out = step(m, std::span<const double>(h, m == Method::bdf2_ab2 ? 4 : 2), p, t_next, k);
    }
    tr.t.push_back(t_next);
    tr.y.push_back(out.y);
    tr.y_temp.push_back(out.y_temp);
  }
  return tr;
}

} // namespace cev::ode
