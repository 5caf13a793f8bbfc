// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "stst/cli.hpp"

int main(int argc, char** argv) { return stst::run_cli(argc, argv, std::cout, std::cerr); }
