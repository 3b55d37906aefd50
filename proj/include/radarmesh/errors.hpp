// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace radarmesh {

// Bad user-supplied configuration (unknown action, nonpositive limb length, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke an operation's precondition (shape/count mismatch, misaligned RoIs).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class DegenerateGeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyFrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A training stage was started before the checkpoints it depends on exist.
class PipelineOrderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NanLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace radarmesh
