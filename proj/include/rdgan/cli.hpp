#ifndef RDGAN_CLI_HPP_
#define RDGAN_CLI_HPP_

// Command-line front end. Subcommands: train, sample, eval, uot-check,
// conjugate-table. Exit codes: 0 success, 1 usage or input error, 2 numerical
// failure (non-finite training loss, or a failed oracle check).

#include <iosfwd>
#include <string>
#include <vector>

namespace rdgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

}  // namespace rdgan::cli

#endif  // RDGAN_CLI_HPP_
