#pragma once

#include <functional>
#include <string>
#include <vector>

namespace concad {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs the built-in example checks of every module (seconds, no I/O beyond a
/// temporary directory). `on_result` is called as each check finishes.
std::vector<SelfTestResult> run_selftest(const std::function<void(const SelfTestResult&)>& on_result = {});

}  // namespace concad
