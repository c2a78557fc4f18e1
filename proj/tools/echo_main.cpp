// SPDX-License-Identifier: Apache-2.0
#include <csignal>
#include <filesystem>
#include <iostream>
#include <set>
#include <thread>
#include <vector>

#include "cli.hpp"
#include "echo/core/error.hpp"

namespace echo::cli {

std::atomic<bool> g_stop{false};

void install_signal_handlers() {
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
}

void block_until_signalled() {
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds{50});
}

}  // namespace echo::cli

int main(int argc, char** argv) {
  // Invoked through a symlink such as `trainer`: treat the link name as the
  // first subcommand.
  std::vector<std::string> args(argv, argv + argc);
  static const std::set<std::string> kAliases{"trainer", "harness", "inference-worker", "snapshot-store",
                                              "replay-buffer", "coordinator"};
  const auto invoked = std::filesystem::path(args[0]).filename().string();
  if (kAliases.contains(invoked)) args.insert(args.begin() + 1, invoked);

  CLI::App app{"echo: decoupled trajectory generation and policy optimisation services"};
  app.require_subcommand(1);
  echo::cli::add_service_commands(app);
  echo::cli::add_trainer_command(app);
  echo::cli::add_harness_command(app);
  echo::cli::install_signal_handlers();

  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const echo::cli::CheckFailed& e) {
    std::cerr << "FAILED: " << e.what << "\n";
    return 1;
  } catch (const echo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
