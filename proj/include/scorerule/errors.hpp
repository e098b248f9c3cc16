#pragma once

#include <stdexcept>
#include <string>

namespace scorerule {

/// Base class for all library errors.
class ScoreRuleError : public std::runtime_error {
 public:
  explicit ScoreRuleError(const std::string& what) : std::runtime_error(what) {}
};

#define SCORERULE_DEFINE_ERROR(NAME)                                   \
  class NAME : public ScoreRuleError {                                 \
   public:                                                             \
    explicit NAME(const std::string& what) : ScoreRuleError(#NAME ": " + what) {} \
  }

// rules
SCORERULE_DEFINE_ERROR(NonPositiveDensity);
SCORERULE_DEFINE_ERROR(InvalidSimplexPoint);
SCORERULE_DEFINE_ERROR(DivergentIntegral);
SCORERULE_DEFINE_ERROR(QuadratureFailure);
SCORERULE_DEFINE_ERROR(GaugeNegative);
SCORERULE_DEFINE_ERROR(NonSmoothDensity);

// models
SCORERULE_DEFINE_ERROR(RhoOutOfDomain);
SCORERULE_DEFINE_ERROR(ThetaOutOfDomain);

// estimate
SCORERULE_DEFINE_ERROR(NoConvergence);
SCORERULE_DEFINE_ERROR(DomainEscape);
SCORERULE_DEFINE_ERROR(EmptyNuisance);
SCORERULE_DEFINE_ERROR(DegenerateData);

// infer
SCORERULE_DEFINE_ERROR(SingularK);
SCORERULE_DEFINE_ERROR(SingularJ);
SCORERULE_DEFINE_ERROR(SingularV);
SCORERULE_DEFINE_ERROR(SingularBlock);
SCORERULE_DEFINE_ERROR(NotScalarParam);
SCORERULE_DEFINE_ERROR(NegativeWeight);

// simlab
SCORERULE_DEFINE_ERROR(TooManyFailures);

#undef SCORERULE_DEFINE_ERROR

}  // namespace scorerule
