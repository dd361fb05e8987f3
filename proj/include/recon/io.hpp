#pragma once

#include <stdexcept>
#include <string>

namespace recon {

/// Artifact (de)serialization failure with a machine-checkable category.
/// Version mismatches are rejected, never migrated.
class io_error : public std::runtime_error {
public:
  enum class Kind { corrupt_header, version_mismatch, truncation, parse };

  io_error(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

}  // namespace recon
