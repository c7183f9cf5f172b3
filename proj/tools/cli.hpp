#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pfn::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kRuntimeError = 1,
  kUsageError = 2,      // unknown command or bad flags
  kConfigError = 3,     // invalid configuration values
  kMissingFile = 4,     // a referenced input file does not exist
  kDataError = 5,       // malformed dataset, embeddings or checkpoint
  kGradCheckFailed = 6,
  kNumericError = 7,    // NaN/Inf during training or inference
};

// Runs one subcommand (train, eval, predict, synth, ablate, gradcheck).
// Summaries go to `out`, logs and errors to `err`, artifacts to --out.
int run(const std::string& command, const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string usage();

}  // namespace pfn::cli
