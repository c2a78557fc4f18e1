// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <string>

#include <CLI11.hpp>

namespace echo::cli {

// Set by SIGINT/SIGTERM; long-running commands poll it.
extern std::atomic<bool> g_stop;

void install_signal_handlers();
void block_until_signalled();

void add_service_commands(CLI::App& app);
void add_trainer_command(CLI::App& app);
void add_harness_command(CLI::App& app);

// Thrown by commands whose checks ran but failed; maps to exit status 1.
struct CheckFailed {
  std::string what;
};

}  // namespace echo::cli
