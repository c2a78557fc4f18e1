// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace echo {

// Base of every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (stepping a finished episode,
// encoding an invalid trajectory, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Malformed wire payload or request.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Version gap or duplicate publication.
class ConflictError : public Error {
 public:
  using Error::Error;
};

// Push size is not an integer multiple of the trainer mini-batch.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

// Non-finite logits, gradients or parameters.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Remote service unreachable or returned an unexpected status.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace echo
