#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace asktmk::cli {

/// Runs one command line. `env` stands in for the process environment
/// (only ASKTMK_* keys are read). Failures print one "error: ..." line to
/// `err` and return nonzero.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const std::map<std::string, std::string>& env);

/// argv form over the real environment.
int run(int argc, char** argv);

}  // namespace asktmk::cli
