#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace avoinv {

// Error taxonomy mirrored by the CLI exit codes: config=2, fit=3,
// sampling/numerics=4, io=5.
class error : public std::runtime_error {
public:
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class config_error : public error {
public:
  explicit config_error(const std::string& msg) : error("config: " + msg) {}
};

class fit_error : public error {
public:
  explicit fit_error(const std::string& msg) : error("fit: " + msg) {}
};

class sampling_error : public error {
public:
  explicit sampling_error(const std::string& msg) : error(msg) {}
};

class io_error : public error {
public:
  explicit io_error(const std::string& msg) : error("io: " + msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw error(msg);
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace avoinv
