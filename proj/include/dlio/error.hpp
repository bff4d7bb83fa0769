#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace dlio {

enum class ErrorKind {
  not_found,
  io_error,
  quota_exceeded,
  invalid_argument,
  decode_error,
  element_error,
  incomplete_checkpoint,
  corrupt_checkpoint,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return "NotFound";
    case ErrorKind::io_error: return "IoError";
    case ErrorKind::quota_exceeded: return "QuotaExceeded";
    case ErrorKind::invalid_argument: return "InvalidArgument";
    case ErrorKind::decode_error: return "DecodeError";
    case ErrorKind::element_error: return "ElementError";
    case ErrorKind::incomplete_checkpoint: return "IncompleteCheckpoint";
    case ErrorKind::corrupt_checkpoint: return "CorruptCheckpoint";
  }
  return "Unknown";
}

// Base of every error raised by the library. The message is prefixed with the
// kind name so logs stay readable without a catch per subtype.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Filesystem errors carry the tier-relative path they refer to.
class PathError : public Error {
 public:
  PathError(ErrorKind kind, std::string relpath, const std::string& msg)
      : Error(kind, relpath + ": " + msg), relpath_(std::move(relpath)) {}

  const std::string& relpath() const noexcept { return relpath_; }

 private:
  std::string relpath_;
};

class NotFound : public PathError {
 public:
  NotFound(std::string relpath, const std::string& msg = "no such file")
      : PathError(ErrorKind::not_found, std::move(relpath), msg) {}
};

class IoError : public PathError {
 public:
  IoError(std::string relpath, const std::string& msg)
      : PathError(ErrorKind::io_error, std::move(relpath), msg) {}
};

class QuotaExceeded : public PathError {
 public:
  QuotaExceeded(std::string relpath, const std::string& msg)
      : PathError(ErrorKind::quota_exceeded, std::move(relpath), msg) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg) : Error(ErrorKind::invalid_argument, msg) {}
};

class DecodeError : public Error {
 public:
  explicit DecodeError(const std::string& msg) : Error(ErrorKind::decode_error, msg) {}
};

// Failure scoped to a single pipeline element. Only this class is absorbed by
// the ignore_errors stage; anything else terminates the epoch.
class ElementError : public Error {
 public:
  ElementError(std::uint64_t seq_id, const std::string& cause)
      : Error(ErrorKind::element_error, "seq_id " + std::to_string(seq_id) + ": " + cause),
        seq_id_(seq_id),
        cause_(cause) {}

  std::uint64_t seq_id() const noexcept { return seq_id_; }
  const std::string& cause() const noexcept { return cause_; }
  std::optional<std::uint64_t> batch_index() const noexcept { return batch_index_; }

  ElementError with_batch_index(std::uint64_t index) const {
    ElementError tagged(seq_id_, cause_ + " (batch " + std::to_string(index) + ")");
    tagged.cause_ = cause_;
    tagged.batch_index_ = index;
    return tagged;
  }

 private:
  std::uint64_t seq_id_;
  std::string cause_;
  std::optional<std::uint64_t> batch_index_;
};

class IncompleteCheckpoint : public Error {
 public:
  IncompleteCheckpoint(std::string missing, const std::string& msg)
      : Error(ErrorKind::incomplete_checkpoint, missing + ": " + msg), missing_(std::move(missing)) {}

  const std::string& missing_file() const noexcept { return missing_; }

 private:
  std::string missing_;
};

class CorruptCheckpoint : public Error {
 public:
  CorruptCheckpoint(std::string variable, const std::string& msg)
      : Error(ErrorKind::corrupt_checkpoint, (variable.empty() ? std::string("<layout>") : variable) + ": " + msg),
        variable_(std::move(variable)) {}

  // Name of the damaged variable; empty when the damage is structural.
  const std::string& variable() const noexcept { return variable_; }

 private:
  std::string variable_;
};

}  // namespace dlio
