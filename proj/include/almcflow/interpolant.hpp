#pragma once

#include <span>
#include <string>
#include <string_view>

namespace almcflow {

enum class InterpolantKind { Linear, Follmer, Trigonometric };

/// Parses "linear" | "follmer" | "trig".
InterpolantKind parse_interpolant(std::string_view name);
std::string to_string(InterpolantKind kind);

struct ScheduleValues {
  double alpha;
  double beta;
  double alpha_dot;
  double beta_dot;
};

/// Coefficients of v(t, x) = a x + c E[x1 | x_t = x].
struct VelocityCoeffs {
  double a;
  double c;
};

/// Interpolation path x_t = alpha(t) z + beta(t) x1 between N(0, I) at t = 0
/// and the target at t = 1.
class InterpolantSchedule {
 public:
  explicit InterpolantSchedule(InterpolantKind kind = InterpolantKind::Follmer) : kind_(kind) {}

  InterpolantKind kind() const { return kind_; }

  /// Throws DomainError for t outside [0, 1].
  ScheduleValues eval(double t) const;

  /// a = alpha_dot / alpha, c = beta_dot - a beta. Singular at t = 0 and t = 1.
  VelocityCoeffs velocity_coeffs(double t) const;

  /// log g(t, x, y) = -|x - beta(t) y|^2 / (2 alpha(t)^2). Unnormalized.
  double log_bridge_kernel(double t, std::span<const double> x, std::span<const double> y) const;

 private:
  InterpolantKind kind_;
};

}  // namespace almcflow
