#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sekge {

enum class ErrorKind {
  UnknownEntityInTriple,
  DuplicateEntityId,
  FootprintOutsideStudyArea,
  MultipleTypes,
  EmptyKG,
  InfeasibleSplit,
  UnknownEntity,
  UnknownRelation,
  UnknownType,
  BadScaleRange,
  NonFiniteInput,
  DimensionMismatch,
  UnsupportedMode,
  EmptyInput,
  ZeroVector,
  CyclicQuery,
  MultipleSinks,
  UnknownAnchor,
  MalformedQuery,
  NotGeographic,
  SamplingExhausted,
  EmptyNegativePool,
  EmptyNegatives,
  NonFiniteLoss,
  NoLocationEncoder,
  BadArgument,
  VersionMismatch,
  CorruptBlob,
  IoFailure,
  ParseError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownEntityInTriple: return "UnknownEntityInTriple";
    case ErrorKind::DuplicateEntityId: return "DuplicateEntityId";
    case ErrorKind::FootprintOutsideStudyArea: return "FootprintOutsideStudyArea";
    case ErrorKind::MultipleTypes: return "MultipleTypes";
    case ErrorKind::EmptyKG: return "EmptyKG";
    case ErrorKind::InfeasibleSplit: return "InfeasibleSplit";
    case ErrorKind::UnknownEntity: return "UnknownEntity";
    case ErrorKind::UnknownRelation: return "UnknownRelation";
    case ErrorKind::UnknownType: return "UnknownType";
    case ErrorKind::BadScaleRange: return "BadScaleRange";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::UnsupportedMode: return "UnsupportedMode";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::CyclicQuery: return "CyclicQuery";
    case ErrorKind::MultipleSinks: return "MultipleSinks";
    case ErrorKind::UnknownAnchor: return "UnknownAnchor";
    case ErrorKind::MalformedQuery: return "MalformedQuery";
    case ErrorKind::NotGeographic: return "NotGeographic";
    case ErrorKind::SamplingExhausted: return "SamplingExhausted";
    case ErrorKind::EmptyNegativePool: return "EmptyNegativePool";
    case ErrorKind::EmptyNegatives: return "EmptyNegatives";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NoLocationEncoder: return "NoLocationEncoder";
    case ErrorKind::BadArgument: return "BadArgument";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptBlob: return "CorruptBlob";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace sekge
