#pragma once

#include <stdexcept>
#include <string>

namespace vsr {

// Error taxonomy shared by the library and the CLI exit codes.

struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct index_error : std::out_of_range {
  explicit index_error(const std::string& msg) : std::out_of_range("index error: " + msg) {}
};

struct capacity_error : std::runtime_error {
  explicit capacity_error(const std::string& msg) : std::runtime_error("capacity error: " + msg) {}
};

// Violated call protocol (backward on non-scalar, step in bidirectional mode, ...).
struct contract_error : std::logic_error {
  explicit contract_error(const std::string& msg) : std::logic_error("contract error: " + msg) {}
};

struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct format_error : std::runtime_error {
  explicit format_error(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

// File payload shorter than its header promises.
struct truncation_error : format_error {
  explicit truncation_error(const std::string& msg) : format_error("truncated: " + msg) {}
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

// NaN/Inf escaped a numeric contract (training abort path).
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct argument_error : std::invalid_argument {
  explicit argument_error(const std::string& msg) : std::invalid_argument("argument error: " + msg) {}
};

}  // namespace vsr
