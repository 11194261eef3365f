#pragma once

namespace qcalib::cli {

/// Entry point shared by the binary and the tests. Exit codes: 0 success
/// (calibration converged), 1 input error, 2 solver non-convergence.
int run(int argc, const char* const* argv);

}  // namespace qcalib::cli
