#pragma once

#include <string>
#include <vector>

struct PropertyResult {
  std::string name;
  bool pass = true;
  std::string detail;  // first failure
};

std::vector<PropertyResult> run_property_suite();
