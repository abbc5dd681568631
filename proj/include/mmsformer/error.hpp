// Copyright 2026 The mmsformer Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mms {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, training, dataset or generator configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Wrong number of inputs (e.g. modality count differs from the model's).
class ArityError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Well-formed input carrying invalid content (e.g. out-of-range labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated on-disk container.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable file.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff graph (double backward, non-scalar root).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API contract (e.g. a non-scalar function handed to grad_check).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A result that is mathematically undefined (e.g. mIoU with no defined class).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace mms
