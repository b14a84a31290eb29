// Copyright 2026 The bitro Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bitro::cli {

/// Runs one command line (args[0] is the program name). Returns the exit
/// code; failures print a single "error: <kind>: <message>" line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Version string in git-describe style.
std::string version();

}  // namespace bitro::cli
