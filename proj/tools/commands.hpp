#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lpnmf::cli {

enum ExitCode : int { ok = 0, validation_failure = 1, numerical_failure = 2 };

// Runs the command line given as separate arguments (without the program
// name) and returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Lowercase hex SHA-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace lpnmf::cli
