#pragma once

#include <stdexcept>
#include <string>

namespace rtdw {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define RTDW_ERROR_TYPE(NAME)                                          \
  class NAME : public Error {                                          \
   public:                                                             \
    explicit NAME(const std::string& what) : Error(#NAME ": " + what) {} \
  };

RTDW_ERROR_TYPE(SchemaMismatch)
RTDW_ERROR_TYPE(NoActiveStagingCycle)
RTDW_ERROR_TYPE(CacheOverflow)
RTDW_ERROR_TYPE(CacheNotConfigured)
RTDW_ERROR_TYPE(UnknownMember)
RTDW_ERROR_TYPE(NoVersionCovers)
RTDW_ERROR_TYPE(TimestampRegression)
RTDW_ERROR_TYPE(UnknownFact)
RTDW_ERROR_TYPE(UnknownDimension)
RTDW_ERROR_TYPE(UnknownAttribute)
RTDW_ERROR_TYPE(UnknownMeasure)
RTDW_ERROR_TYPE(DuplicateRuleId)
RTDW_ERROR_TYPE(GroupedSpecNotScalar)
RTDW_ERROR_TYPE(UnknownRule)
RTDW_ERROR_TYPE(PeriodNotInLadder)
RTDW_ERROR_TYPE(SourceUnreadable)
RTDW_ERROR_TYPE(UnknownGenerator)
RTDW_ERROR_TYPE(ParseError)
RTDW_ERROR_TYPE(ConfigError)
RTDW_ERROR_TYPE(UnwritableOutput)
RTDW_ERROR_TYPE(WalCorrupt)

#undef RTDW_ERROR_TYPE

}  // namespace rtdw
