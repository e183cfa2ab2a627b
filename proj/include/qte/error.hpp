#pragma once

#include <stdexcept>
#include <string>

namespace qte {

// Malformed user input: bad flags, unknown method names, inconsistent config.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Data that cannot be estimated on: schema problems, missing values, empty
// strata, cells with no treated or no control units.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyStratumError : public DataError {
 public:
  EmptyStratumError(int stratum, const std::string& label)
      : DataError("stratum '" + label + "' has zero (weighted) size"),
        stratum_(stratum) {}
  int stratum() const noexcept { return stratum_; }

 private:
  int stratum_;
};

class DegenerateCellError : public DataError {
 public:
  DegenerateCellError(int stratum, const std::string& label, int missing_arm)
      : DataError("stratum '" + label + "' has no " +
                  (missing_arm == 1 ? std::string("treated") : std::string("control")) +
                  " units"),
        stratum_(stratum),
        missing_arm_(missing_arm) {}
  int stratum() const noexcept { return stratum_; }
  int missing_arm() const noexcept { return missing_arm_; }

 private:
  int stratum_;
  int missing_arm_;
};

// A fit or solve that failed numerically (or a requested configuration that
// cannot be fitted, such as more sieve terms than observations in a cell).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CellTooSmallError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Evaluation of an adjustment model outside what it was fitted on.
class UnknownStratumError : public UsageError {
 public:
  using UsageError::UsageError;
};

class UnfittedTauError : public UsageError {
 public:
  using UsageError::UsageError;
};

}  // namespace qte
