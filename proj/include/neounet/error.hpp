#pragma once

#include <stdexcept>
#include <string>

namespace neounet {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or usage (bad config file, bad CLI arguments,
// mismatched module wiring). CLI maps these to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Argument outside an operation's documented domain.
class DomainError : public Error {
public:
  using Error::Error;
};

// Corrupt or inconsistent input data (unknown mask colors, size mismatches
// between an image and its mask, malformed containers).
class DataError : public Error {
public:
  using Error::Error;
};

// Filesystem / serialization failures, always carrying the offending path.
class IoError : public Error {
public:
  using Error::Error;
};

// Training aborted (non-finite loss). A diagnostic dump path is included
// in the message when one was written.
class TrainingError : public Error {
public:
  using Error::Error;
};

} // namespace neounet
