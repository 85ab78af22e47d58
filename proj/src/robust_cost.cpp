#include "cvloc/robust_cost.hpp"

#include <cmath>

#include "cvloc/errors.hpp"

namespace cvloc {

std::string RobustCost::name() const {
  switch (kind) {
    case Kind::kSquared: return "squared";
    case Kind::kHuber: return "huber";
    case Kind::kGemanMcClure: return "geman_mcclure";
  }
  return "unknown";
}

void RobustCost::validate() const {
  if (kind != Kind::kSquared && !(param > 0.0)) throw ContractError("robust cost: parameter must be positive");
}

RobustValue robust_eval(const RobustCost& cost, double s) {
  if (!(s >= 0.0)) throw ContractError("robust_eval: s must be >= 0");
  switch (cost.kind) {
    case RobustCost::Kind::kSquared:
      return {s, 1.0};
    case RobustCost::Kind::kHuber: {
      const double d = cost.param;
      if (s <= d * d) return {s, 1.0};
      const double n = std::sqrt(s);
      return {2.0 * d * n - d * d, d / n};
    }
    case RobustCost::Kind::kGemanMcClure: {
      const double o2 = cost.param * cost.param;
      const double den = o2 + s;
      return {o2 * s / den, o2 * o2 / (den * den)};
    }
  }
  throw ContractError("robust_eval: unknown kind");
}

RobustCost::Kind parse_robust_kind(const std::string& name) {
  if (name == "squared") return RobustCost::Kind::kSquared;
  if (name == "huber") return RobustCost::Kind::kHuber;
  if (name == "geman_mcclure") return RobustCost::Kind::kGemanMcClure;
  throw ConfigError("unknown robust cost kind '" + name + "'");
}

}  // namespace cvloc
