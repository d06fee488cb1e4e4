#pragma once

#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace supermarket {

/// One violated invariant, located by block indices where that makes sense.
struct Violation {
  std::string what;
  int level_i = -1;
  int level_j = -1;
  double magnitude = 0.0;
};

/// Result of the validate_* functions. Empty means every checked invariant
/// holds within tolerance.
struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }

  void add(std::string what, int i = -1, int j = -1, double magnitude = 0.0) {
    violations.push_back(Violation{std::move(what), i, j, magnitude});
  }

  void merge(const ValidationReport& other, const std::string& prefix) {
    for (const auto& v : other.violations)
      violations.push_back(Violation{prefix + v.what, v.level_i, v.level_j, v.magnitude});
  }

  std::string str() const {
    std::ostringstream os;
    for (const auto& v : violations) {
      os << v.what;
      if (v.level_i >= 0) {
        os << " [level " << v.level_i;
        if (v.level_j >= 0) os << "," << v.level_j;
        os << "]";
      }
      os << " |err|=" << v.magnitude << "\n";
    }
    return os.str();
  }
};

}  // namespace supermarket
