#include "nmpo/error.hpp"
#include "nmpo/types.hpp"

namespace nmpo {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::EmptyInput: return "empty input";
    case ErrorKind::Ambiguous: return "ambiguity error";
    case ErrorKind::MissingStatistic: return "missing statistic";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Duplicate: return "duplicate error";
    case ErrorKind::Join: return "join error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Feature: return "feature error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::DegenerateVariance: return "degenerate variance";
    case ErrorKind::SampleSize: return "sample-size error";
    case ErrorKind::Name: return "name error";
    case ErrorKind::Fit: return "fit error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Corpus: return "corpus error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Version: return "version error";
    case ErrorKind::Integrity: return "integrity error";
    case ErrorKind::Internal: return "internal error";
  }
  return "internal error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Config:
      return 1;
    case ErrorKind::Version:
    case ErrorKind::Integrity:
      return 3;
    case ErrorKind::Internal:
      return 4;
    default:
      return 2;
  }
}

std::string_view to_string(OffloadLabel label) {
  switch (label) {
    case OffloadLabel::yes: return "yes";
    case OffloadLabel::maybe: return "maybe";
    case OffloadLabel::no: return "no";
  }
  return "no";
}

OffloadLabel parse_label(std::string_view text) {
  if (text == "yes") return OffloadLabel::yes;
  if (text == "maybe") return OffloadLabel::maybe;
  if (text == "no") return OffloadLabel::no;
  throw Error(ErrorKind::Validation, "unknown label '" + std::string(text) + "'");
}

}  // namespace nmpo
