// Copyright 2026 The DSTT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace dstt::cli {

enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,  // bad flags or configuration
  kDataError = 2,   // missing or malformed inputs, numeric blow-up
  kVerifyFailed = 3,
};

/// Runs one command line (without the program name). Normal output goes to
/// `out`; diagnostics go to `err` prefixed with "error:".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Sets a dotted key ("optim.lr", "configs.0.n") in `target`. The key must
/// exist in `schema`. The value is parsed as JSON when possible, else taken
/// as a string.
void apply_override(nlohmann::json& target, const nlohmann::json& schema, const std::string& assignment);

/// Throws ConfigError naming the first key of `given` that `schema` lacks.
/// Arrays in the schema are not inspected.
void check_known_keys(const nlohmann::json& given, const nlohmann::json& schema, const std::string& prefix = "");

}  // namespace dstt::cli
