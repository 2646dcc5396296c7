#include "almcflow/interpolant.hpp"

#include <cmath>
#include <numbers>

#include "almcflow/core.hpp"

namespace almcflow {

InterpolantKind parse_interpolant(std::string_view name) {
  if (name == "linear") return InterpolantKind::Linear;
  if (name == "follmer") return InterpolantKind::Follmer;
  if (name == "trig") return InterpolantKind::Trigonometric;
  throw DomainError("unknown interpolant '" + std::string(name) + "'");
}

std::string to_string(InterpolantKind kind) {
  switch (kind) {
    case InterpolantKind::Linear:
      return "linear";
    case InterpolantKind::Follmer:
      return "follmer";
    case InterpolantKind::Trigonometric:
      return "trig";
  }
  return "unknown";
}

ScheduleValues InterpolantSchedule::eval(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("interpolant time outside [0, 1]");
  switch (kind_) {
    case InterpolantKind::Linear:
      return {1.0 - t, t, -1.0, 1.0};
    case InterpolantKind::Follmer: {
      const double a = std::sqrt((1.0 - t) * (1.0 + t));
      // alpha_dot = -t / sqrt(1 - t^2) diverges at t = 1
      const double ad = a > 0.0 ? -t / a : -std::numeric_limits<double>::infinity();
      return {a, t, ad, 1.0};
    }
    case InterpolantKind::Trigonometric: {
      constexpr double h = std::numbers::pi / 2.0;
      // cos(pi/2) is not exactly 0 in floating point
      const double a = t == 1.0 ? 0.0 : std::cos(h * t);
      const double b = t == 1.0 ? 1.0 : std::sin(h * t);
      return {a, b, -h * b, h * a};
    }
  }
  throw DomainError("invalid interpolant kind");
}

VelocityCoeffs InterpolantSchedule::velocity_coeffs(double t) const {
  if (!(t > 0.0 && t < 1.0))
    throw DomainError("velocity coefficients are singular outside the open interval (0, 1)");
  const auto s = eval(t);
  const double a = s.alpha_dot / s.alpha;
  return {a, s.beta_dot - a * s.beta};
}

double InterpolantSchedule::log_bridge_kernel(double t, std::span<const double> x,
                                              std::span<const double> y) const {
  if (x.size() != y.size()) throw DomainError("bridge kernel dimension mismatch");
  const auto s = eval(t);
  double r2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = x[j] - s.beta * y[j];
    r2 += diff * diff;
  }
  return -r2 / (2.0 * s.alpha * s.alpha);
}

}  // namespace almcflow
