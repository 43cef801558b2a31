#pragma once

#include <stdexcept>
#include <string>

namespace idiomark {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File or header does not have the expected structure.
struct SchemaError : Error {
  using Error::Error;
};

// Values are structurally fine but semantically invalid.
struct ValidationError : Error {
  using Error::Error;
};

// An API precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Training hit a non-finite loss; message carries step diagnostics.
struct TrainingDiverged : Error {
  using Error::Error;
};

}  // namespace idiomark
