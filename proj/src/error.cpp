#include "phenokg/error.hpp"

namespace phenokg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "parse_error";
    case ErrorKind::Validation: return "validation_error";
    case ErrorKind::Domain: return "domain_error";
    case ErrorKind::Integrity: return "integrity_error";
    case ErrorKind::DuplicateId: return "duplicate_id";
    case ErrorKind::Schema: return "schema_error";
    case ErrorKind::BackendUnavailable: return "backend_unavailable";
    case ErrorKind::ReplayMiss: return "replay_miss";
    case ErrorKind::Scoring: return "scoring_error";
    case ErrorKind::Io: return "io_error";
    case ErrorKind::Config: return "config_error";
  }
  return "error";
}

}  // namespace phenokg
