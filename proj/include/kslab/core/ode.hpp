// Adaptive Dormand-Prince 5(4) integrator with dense output.
//
// The integrator is written for piecewise-smooth right-hand sides: the caller
// hands over a list of breakpoints, and the integration is restarted at every
// breakpoint inside the interval. Inside a segment the right-hand side only
// ever sees abscissae from the open segment, so one-sided values of a
// discontinuous coefficient are picked up correctly at the segment ends.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <vector>

#include "kslab/core/errors.hpp"

namespace kslab {

/// Raised when the step size underflows or the step budget is exhausted.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double where) : Error(what), location_(where) {}
  double location() const noexcept { return location_; }

 private:
  double location_;
};

template <std::size_t N>
using State = std::array<double, N>;

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-10;
  double h_min = 1e-13;
  double h_max = 0.25;
  std::size_t max_steps = 5'000'000;
};

struct OdeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

namespace detail {

// Butcher tableau and dense output coefficients (Hairer & Wanner, DOPRI5).
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                          a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0,
                          d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0,
                          d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0,
                          d7 = 69997945.0 / 29380423.0;
};

template <std::size_t N>
struct DenseStep {
  double x0 = 0.0;
  double h = 0.0;
  std::array<State<N>, 5> rc{};

  State<N> at(double x) const {
    const double t = (x - x0) / h;
    const double t1 = 1.0 - t;
    State<N> y{};
    for (std::size_t i = 0; i < N; ++i) {
      y[i] = rc[0][i] + t * (rc[1][i] + t1 * (rc[2][i] + t * (rc[3][i] + t1 * rc[4][i])));
    }
    return y;
  }
};

inline std::vector<double> segment_ends(double from, double to, std::span<const double> breakpoints) {
  const double lo = std::min(from, to);
  const double hi = std::max(from, to);
  std::vector<double> ends;
  ends.reserve(breakpoints.size() + 1);
  for (double b : breakpoints) {
    if (b > lo && b < hi) ends.push_back(b);
  }
  if (to > from) {
    std::sort(ends.begin(), ends.end());
  } else {
    std::sort(ends.begin(), ends.end(), std::greater<>());
  }
  ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
  ends.push_back(to);
  return ends;
}

}  // namespace detail

/// Integrates y' = rhs(x, y) from `from` to `to` (either direction).
///
/// `outputs` must be ordered along the direction of integration and lie in
/// the closed interval; `sink(x, y)` is called once per output point, using
/// the continuous extension inside accepted steps. Returns the state at `to`.
template <std::size_t N, class Rhs, class Sink>
State<N> integrate_dopri5(const Rhs& rhs, double from, double to, State<N> y,
                          std::span<const double> breakpoints, std::span<const double> outputs,
                          Sink&& sink, const OdeOptions& opt = {}, OdeStats* stats = nullptr) {
  using T = detail::Dopri5;
  std::size_t out = 0;
  const double dir = to >= from ? 1.0 : -1.0;
  while (out < outputs.size() && dir * (outputs[out] - from) <= 0.0) {
    sink(outputs[out], y);
    ++out;
  }
  if (from == to) return y;

  OdeStats local;
  OdeStats& st = stats ? *stats : local;

  const auto ends = detail::segment_ends(from, to, breakpoints);

  auto scale = [&](const State<N>& a, const State<N>& b) {
    State<N> sc{};
    for (std::size_t i = 0; i < N; ++i) {
      sc[i] = opt.atol + opt.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
    }
    return sc;
  };
  auto rms = [](const State<N>& v, const State<N>& sc) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double r = v[i] / sc[i];
      s += r * r;
    }
    return std::sqrt(s / static_cast<double>(N));
  };

  double x = from;
  double h = 0.0;
  std::size_t steps = 0;
  State<N> k1{}, k2{}, k3{}, k4{}, k5{}, k6{}, k7{}, tmp{}, ynew{};

  for (double seg_end : ends) {
    // Open-interval clamp keeps stage abscissae off the segment ends.
    const double seg_lo = std::min(x, seg_end);
    const double seg_hi = std::max(x, seg_end);
    const double in_lo = std::nextafter(seg_lo, seg_hi);
    const double in_hi = std::nextafter(seg_hi, seg_lo);
    auto f = [&](double t, const State<N>& s, State<N>& d) {
      rhs(std::clamp(t, in_lo, in_hi), s, d);
      ++st.evaluations;
    };

    f(x, y, k1);
    const double seg_len = std::abs(seg_end - x);

    if (h == 0.0) {
      // Initial step guess (Hairer's hinit, order 5).
      const auto sc = scale(y, y);
      const double d0 = rms(y, sc);
      const double d1 = rms(k1, sc);
      double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
      h0 = std::min({h0, seg_len, opt.h_max});
      for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + dir * h0 * k1[i];
      f(x + dir * h0, tmp, k2);
      State<N> diff{};
      for (std::size_t i = 0; i < N; ++i) diff[i] = k2[i] - k1[i];
      const double d2 = rms(diff, sc) / h0;
      const double dm = std::max(d1, d2);
      const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
      h = std::min({100.0 * h0, h1, opt.h_max});
    }

    bool last_rejected = false;
    while (dir * (seg_end - x) > 0.0) {
      if (++steps > opt.max_steps) {
        std::ostringstream msg;
        msg << "integrator step budget exhausted at x = " << x;
        throw IntegrationError(msg.str(), x);
      }
      double hs = std::min(h, opt.h_max);
      bool hits_end = false;
      if (hs * 1.01 >= std::abs(seg_end - x)) {
        hs = std::abs(seg_end - x);
        hits_end = true;
      }
      const double hd = dir * hs;

      for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + hd * T::a21 * k1[i];
      f(x + T::c2 * hd, tmp, k2);
      for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + hd * (T::a31 * k1[i] + T::a32 * k2[i]);
      f(x + T::c3 * hd, tmp, k3);
      for (std::size_t i = 0; i < N; ++i)
        tmp[i] = y[i] + hd * (T::a41 * k1[i] + T::a42 * k2[i] + T::a43 * k3[i]);
      f(x + T::c4 * hd, tmp, k4);
      for (std::size_t i = 0; i < N; ++i)
        tmp[i] = y[i] + hd * (T::a51 * k1[i] + T::a52 * k2[i] + T::a53 * k3[i] + T::a54 * k4[i]);
      f(x + T::c5 * hd, tmp, k5);
      for (std::size_t i = 0; i < N; ++i)
        tmp[i] = y[i] + hd * (T::a61 * k1[i] + T::a62 * k2[i] + T::a63 * k3[i] + T::a64 * k4[i] +
                              T::a65 * k5[i]);
      const double xn = hits_end ? seg_end : x + hd;
      f(x + hd, tmp, k6);
      for (std::size_t i = 0; i < N; ++i)
        ynew[i] = y[i] + hd * (T::a71 * k1[i] + T::a73 * k3[i] + T::a74 * k4[i] +
                               T::a75 * k5[i] + T::a76 * k6[i]);
      f(x + hd, ynew, k7);

      State<N> err{};
      for (std::size_t i = 0; i < N; ++i) {
        err[i] = hd * (T::e1 * k1[i] + T::e3 * k3[i] + T::e4 * k4[i] + T::e5 * k5[i] +
                       T::e6 * k6[i] + T::e7 * k7[i]);
      }
      const double e = rms(err, scale(y, ynew));
      if (!std::isfinite(e)) {
        hs *= 0.1;
        h = hs;
        ++st.rejected;
        last_rejected = true;
        if (hs < opt.h_min) throw IntegrationError("non-finite state during integration", x);
        continue;
      }

      double fac = e == 0.0 ? 5.0 : 0.9 * std::pow(e, -0.2);
      if (e <= 1.0) {
        ++st.accepted;
        if (out < outputs.size() && dir * (outputs[out] - xn) <= 0.0) {
          detail::DenseStep<N> ds;
          ds.x0 = x;
          ds.h = hd;
          for (std::size_t i = 0; i < N; ++i) {
            const double ydiff = ynew[i] - y[i];
            const double bspl = hd * k1[i] - ydiff;
            ds.rc[0][i] = y[i];
            ds.rc[1][i] = ydiff;
            ds.rc[2][i] = bspl;
            ds.rc[3][i] = ydiff - hd * k7[i] - bspl;
            ds.rc[4][i] = hd * (T::d1 * k1[i] + T::d3 * k3[i] + T::d4 * k4[i] + T::d5 * k5[i] +
                                T::d6 * k6[i] + T::d7 * k7[i]);
          }
          while (out < outputs.size() && dir * (outputs[out] - xn) <= 0.0) {
            if (outputs[out] == xn) {
              sink(outputs[out], ynew);
            } else {
              sink(outputs[out], ds.at(outputs[out]));
            }
            ++out;
          }
        }
        x = xn;
        y = ynew;
        k1 = k7;
        if (last_rejected) fac = std::min(fac, 1.0);
        last_rejected = false;
        h = hs * std::clamp(fac, 0.2, 5.0);
      } else {
        ++st.rejected;
        last_rejected = true;
        h = hs * std::clamp(fac, 0.2, 1.0);
        if (h < opt.h_min) {
          std::ostringstream msg;
          msg << "integrator step size underflow at x = " << x;
          throw IntegrationError(msg.str(), x);
        }
      }
    }
    x = seg_end;
  }
  while (out < outputs.size()) {
    sink(outputs[out], y);
    ++out;
  }
  return y;
}

/// Convenience overload without output points.
template <std::size_t N, class Rhs>
State<N> integrate_dopri5(const Rhs& rhs, double from, double to, State<N> y,
                          std::span<const double> breakpoints, const OdeOptions& opt = {},
                          OdeStats* stats = nullptr) {
  return integrate_dopri5<N>(rhs, from, to, y, breakpoints, std::span<const double>{},
                             [](double, const State<N>&) {}, opt, stats);
}

}  // namespace kslab
