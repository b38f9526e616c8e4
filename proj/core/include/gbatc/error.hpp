#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gbatc {

enum class ErrorKind {
  kInvalidGeometry,
  kCoverage,
  kInvalidSpec,
  kInvalidInput,
  kShape,
  kState,
  kRank,
  kConfiguration,
  kCorruption,
  kEncoding,
  kDecoding,
  kVersion,
  kChecksum,
  kTruncation,
  kValidation,
  kGuarantee,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries the module that raised it so
// the CLI can print "<module>: <kind>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }
  // The message without the module and kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string module_;
  std::string detail_;
};

}  // namespace gbatc
