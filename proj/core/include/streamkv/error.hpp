// Copyright (c) 2026 The streamkv Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace streamkv {

enum class ErrorKind {
  Shape,           // dimension mismatch or malformed tensor input
  Config,          // invalid configuration value
  DegenerateInput, // input outside the mathematical domain (zero norm, empty mean)
  Vocab,           // token id outside [0, vocab_size)
  Masking,         // a query row was left with no allowed keys
  Ordering,        // frames appended or consumed out of order
  Storage,         // I/O failure or illegal tier transition
  NotFound,        // unknown frame index or missing file
  Corruption,      // checksum or header mismatch on a stored block
  Capacity,        // request exceeds a fixed capacity bound
  Backpressure,    // bounded queue is full
  UndefinedMetric, // metric has no value on this input (empty relevant set)
  Index,           // lookup into an auxiliary index failed
  TraceSpec,       // inconsistent synthetic trace specification
};

const char* error_kind_name(ErrorKind kind);

// Single exception type for the whole library. `kind()` is stable API;
// messages are for humans and may change.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  static Error shape(const std::string& m) { return {ErrorKind::Shape, m}; }
  static Error config(const std::string& m) { return {ErrorKind::Config, m}; }
  static Error degenerate(const std::string& m) { return {ErrorKind::DegenerateInput, m}; }
  static Error vocab(const std::string& m) { return {ErrorKind::Vocab, m}; }
  static Error masking(const std::string& m) { return {ErrorKind::Masking, m}; }
  static Error ordering(const std::string& m) { return {ErrorKind::Ordering, m}; }
  static Error storage(const std::string& m) { return {ErrorKind::Storage, m}; }
  static Error not_found(const std::string& m) { return {ErrorKind::NotFound, m}; }
  static Error corruption(const std::string& m) { return {ErrorKind::Corruption, m}; }
  static Error capacity(const std::string& m) { return {ErrorKind::Capacity, m}; }
  static Error backpressure(const std::string& m) { return {ErrorKind::Backpressure, m}; }
  static Error undefined_metric(const std::string& m) { return {ErrorKind::UndefinedMetric, m}; }
  static Error index(const std::string& m) { return {ErrorKind::Index, m}; }
  static Error trace_spec(const std::string& m) { return {ErrorKind::TraceSpec, m}; }

private:
  ErrorKind kind_;
};

} // namespace streamkv
