#pragma once

#include <stdexcept>
#include <string>

namespace dulqa {

// Thrown when a rollout leaves the numerically sane region (non-finite w or
// |w_i| > 1e6). step is the update index that produced the bad state.
class divergence_error : public std::runtime_error {
 public:
  divergence_error(int step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace dulqa
