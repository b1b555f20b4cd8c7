// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "prodembed/config.hpp"

namespace prodembed::cli {

// Subcommand entry point shared by the binary and the integration tests.
// Throws on misuse; returns 0 on success.
int run_command(const std::string& name, const KvConfig& cfg);

std::vector<std::string> known_commands();

}  // namespace prodembed::cli
