#pragma once

#include <string>

namespace cvloc {

/// Robust cost on a squared residual norm s = |r|^2.
///
///   squared:        rho(s) = s
///   huber(d):       rho(s) = s                  for s <= d^2
///                            2 d sqrt(s) - d^2  otherwise
///   geman_mcclure(o): rho(s) = o^2 s / (o^2 + s)
struct RobustCost {
  enum class Kind { kSquared, kHuber, kGemanMcClure };

  Kind kind = Kind::kHuber;
  double param = 0.5;

  static RobustCost squared() { return {Kind::kSquared, 0.0}; }
  static RobustCost huber(double delta) { return {Kind::kHuber, delta}; }
  static RobustCost geman_mcclure(double sigma) { return {Kind::kGemanMcClure, sigma}; }

  std::string name() const;
  void validate() const;
};

struct RobustValue {
  double rho;
  double drho;
};

RobustValue robust_eval(const RobustCost& cost, double s);

/// Parses "squared", "huber" or "geman_mcclure" (config and CLI spelling).
RobustCost::Kind parse_robust_kind(const std::string& name);

}  // namespace cvloc
