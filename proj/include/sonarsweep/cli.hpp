#ifndef SONARSWEEP_CLI_HPP
#define SONARSWEEP_CLI_HPP

namespace sonarsweep {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitInputData = 3,
  kExitNumerical = 4,
};

/// Entry point of the `sonarsweep` executable. Errors are reported on stderr
/// and mapped to the exit codes above.
int run_cli(int argc, char** argv);

}  // namespace sonarsweep

#endif  // SONARSWEEP_CLI_HPP
