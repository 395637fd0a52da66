#pragma once

#include <stdexcept>
#include <string>

namespace polyroom {

enum class ErrorKind {
  kInvalidPolygon,
  kDegenerateEdge,
  kUndefinedIoU,
  kDegenerateResult,
  kCapacity,
  kShape,
  kSchema,
  kDimensionMismatch,
  kIo,
  kGeneration,
  kEmptyMask,
  kDegenerateExtent,
  kNumeric,
  kConfig,
  kCoverage,
  kContract,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it to an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidPolygon: return "invalid polygon";
    case ErrorKind::kDegenerateEdge: return "degenerate edge";
    case ErrorKind::kUndefinedIoU: return "undefined iou";
    case ErrorKind::kDegenerateResult: return "degenerate result";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kGeneration: return "generation";
    case ErrorKind::kEmptyMask: return "empty mask";
    case ErrorKind::kDegenerateExtent: return "degenerate extent";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kCoverage: return "coverage";
    case ErrorKind::kContract: return "contract";
  }
  return "unknown";
}

}  // namespace polyroom
