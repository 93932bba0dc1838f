// Runs every acceptance criterion at its stated tolerance and prints one line
// per criterion. Exit status is nonzero when any criterion fails.

#include <cstring>
#include <iostream>

#include "acceptance.hpp"

int main(int argc, char** argv) {
  std::string suite = "all";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::strcmp(argv[i], "--suite") == 0) suite = argv[i + 1];
  }
  using namespace critshe::verify;
  const auto results = run_suite(parse_suite(suite), [](const CriterionResult& r) {
    std::cout << format_line(r) << std::endl;
  });
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << results.size() - failed << " of " << results.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
