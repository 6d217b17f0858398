#ifndef ELASTREC_TOOLS_CLI_HPP
#define ELASTREC_TOOLS_CLI_HPP

#include <string>
#include <vector>

namespace elastrec::cli {

/// Runs one `elastrec` invocation; args excludes the program name.
/// Returns 0 on success, 2 for argument errors, 3 for I/O and format
/// errors, 4 for numerical failures and 1 for anything else.
int run(const std::vector<std::string>& args);

int run(int argc, const char* const* argv);

}  // namespace elastrec::cli

#endif  // ELASTREC_TOOLS_CLI_HPP
