#pragma once

namespace fcomb {

/// Execution policy for the data-parallel kernels. Serial is the reference
/// path; both produce bit-identical results.
enum class Exec { Serial, Parallel };

int max_threads();
void set_threads(int n);

}  // namespace fcomb
