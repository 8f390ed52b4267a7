// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace e2est {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are inconsistent with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value (NaN/Inf) was produced.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff graph (non-scalar loss, unrecorded forward, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// A CTC target cannot be aligned to the available frames.
class CtcInfeasibleError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint file is unreadable, truncated, tampered, or of another version.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// A transplant scheme could not be applied; the target is left untouched.
class TransplantError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace e2est
