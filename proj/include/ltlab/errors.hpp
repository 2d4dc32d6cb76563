#pragma once

#include <stdexcept>
#include <string>

namespace ltlab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad parameter values (out-of-range delta, IR < 1, ...).
struct InvalidArgumentError : Error {
  using Error::Error;
};

// File parsing / validation failures while reading external data.
struct IngestionError : Error {
  using Error::Error;
};

// NaN logits, zero-norm rows under cosine / tau-norm, and similar.
struct NumericalDomainError : Error {
  using Error::Error;
};

// Structural dataset problems (empty class, missing split, ...).
struct InvalidDatasetError : Error {
  using Error::Error;
};

// Metric not computable for a class (no positives, |L| below tolerance).
struct MetricUndefinedError : Error {
  using Error::Error;
};

// Training produced non-finite values; carries the last epoch that completed.
struct DivergenceError : Error {
  int last_good_epoch;
  DivergenceError(const std::string& what, int epoch)
      : Error(what), last_good_epoch(epoch) {}
};

}  // namespace ltlab
