#pragma once

#include <stdexcept>
#include <string>

namespace distcast {

/// Malformed or inconsistent user input (files, config, panel contents).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation was called outside its documented precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An optimizer or iterative fit did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A command needs an artifact produced by an earlier command.
class MissingArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A fit or forecast touched data newer than its origin.
class LeakageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Attempt to mutate something that the evaluation protocol froze.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace distcast
