#include "gbatc/error.hpp"

namespace gbatc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidGeometry: return "invalid-geometry";
    case ErrorKind::kCoverage: return "coverage";
    case ErrorKind::kInvalidSpec: return "invalid-spec";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kState: return "state";
    case ErrorKind::kRank: return "rank";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kCorruption: return "corruption";
    case ErrorKind::kEncoding: return "encoding";
    case ErrorKind::kDecoding: return "decoding";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kChecksum: return "checksum";
    case ErrorKind::kTruncation: return "truncation";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kGuarantee: return "guarantee";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, std::string module, const std::string& message)
    : std::runtime_error(module + ": " + std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      module_(std::move(module)),
      detail_(message) {}

}  // namespace gbatc
