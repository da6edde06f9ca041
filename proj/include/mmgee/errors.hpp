#pragma once

#include <stdexcept>
#include <string>

namespace mmgee {

// Error taxonomy mirrored by the CLI exit codes:
//   SpecError -> 2 (model/usage), DataError -> 3 (input data),
//   NumericalError -> 4 (solver/numerics).

class SpecError : public std::runtime_error {
 public:
  explicit SpecError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mmgee
