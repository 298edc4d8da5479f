#pragma once

#include "forestllm/forest.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace forestllm {

/// Entry point of the command-line tool. Returns 0 on success, 1 on a
/// runtime error (reported as one "error: <Code>: <detail>" line on `err`)
/// and 2 on a usage error.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Human-readable dump used by `inspect`.
std::string render_model_dump(const ForestModel& model);

}  // namespace forestllm
