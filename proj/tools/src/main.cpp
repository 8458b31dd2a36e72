// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "fingerspell_cli/cli.hpp"

int main(int argc, char** argv) {
  return fsr::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
