// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace olaf {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor/raster dimension disagreements.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration values (CLI flags, run configs, module configs).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Malformed or inconsistent data on disk (rasters, labels, manifests).
class DataError : public Error {
public:
  using Error::Error;
};

/// A mask provider could not produce its output (missing asset, bad descriptor).
class ProviderError : public Error {
public:
  using Error::Error;
};

/// Structural mismatch when wiring LDF into a host architecture.
class WiringError : public Error {
public:
  using Error::Error;
};

/// printf-style message formatting for error construction.
inline std::string strfmt(const char *fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[1024];
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

} // namespace olaf

#define OLAF_CHECK(cond, ExcType, ...)                                         \
  do {                                                                         \
    if (!(cond)) throw ExcType(::olaf::strfmt(__VA_ARGS__));                   \
  } while (0)
