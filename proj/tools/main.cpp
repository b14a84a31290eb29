// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <string>
#include <vector>

#include "bitro/cli/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return bitro::cli::run(args, std::cout, std::cerr);
}
