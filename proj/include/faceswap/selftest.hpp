#pragma once

#include <functional>
#include <string>

namespace faceswap::pipeline {

// Runs the built-in invariant suite, reporting one line per check.
// Returns the number of failed checks (0 = all green).
int run_self_test(const std::function<void(const std::string&)>& log);

}  // namespace faceswap::pipeline
