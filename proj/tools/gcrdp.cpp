// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "gcrdp/cli.hpp"

int main(int argc, char** argv) {
  return gcrdp::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
