// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace decaylens {

// Input file fails schema validation. Carries the offending path and field
// so the CLI can emit a machine-parsable error record (exit code 3).
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, std::string field, const std::string& message)
      : std::runtime_error(message + " (file: " + path + ", field: " + field + ")"),
        path_(std::move(path)),
        field_(std::move(field)) {}

  const std::string& path() const { return path_; }
  const std::string& field() const { return field_; }

 private:
  std::string path_;
  std::string field_;
};

}  // namespace decaylens
