#pragma once

#include <cstdint>
#include <ostream>

namespace confuse {

struct SelfCheckOptions {
    std::uint64_t seed = 0;
    // Added to one analytic gradient entry before comparison; nonzero values
    // simulate a gradient bug and must make the gradient suite fail.
    double gradient_corruption = 0.0;
};

// Runs the oracle suites (joint-gradient finite differences over all six
// activations, prox equivalence, Toeplitz/convolution agreement, log-det
// value and gradient, AUC midrank vs pairwise, solver trace monotonicity),
// printing one line per suite with its max relative error and tolerance.
// Returns true when every suite passes.
bool run_selfcheck(const SelfCheckOptions& options, std::ostream& out);

}  // namespace confuse
