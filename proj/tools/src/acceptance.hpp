#pragma once

#include <functional>
#include <string>
#include <vector>

namespace critshe::verify {

struct CriterionResult {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

enum class Suite { analytic, duality, all };
Suite parse_suite(const std::string& name);  // throws std::invalid_argument

struct Criterion {
  std::string id;
  std::string title;
  Suite suite;  // analytic or duality
  std::function<CriterionResult()> run;
};

const std::vector<Criterion>& criteria();
// Runs the criteria of a suite in order; on_result sees each as it finishes.
std::vector<CriterionResult> run_suite(Suite suite, const std::function<void(const CriterionResult&)>& on_result = {});
std::string format_line(const CriterionResult& r);

}  // namespace critshe::verify
