#pragma once

#include <stdexcept>
#include <string>

namespace faraday {

// Base of every error the library throws. The CLI maps the concrete class
// to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A configuration value violates a declared bound.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation precondition (mismatched streams, empty
// segments, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// The measured data cannot be turned into an estimate.
class EstimationError : public Error {
 public:
  using Error::Error;
};

class PreparationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class E>
void require(bool ok, const std::string& what) {
  if (!ok) throw E(what);
}

}  // namespace detail
}  // namespace faraday
