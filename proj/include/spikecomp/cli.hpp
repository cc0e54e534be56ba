#pragma once

namespace spikecomp {

/// Command-line entry point. Returns 0 on success; on failure prints the
/// reason to stderr and returns a nonzero code.
int cli_main(int argc, char** argv);

}  // namespace spikecomp
