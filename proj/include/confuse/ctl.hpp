#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "confuse/activations.hpp"

namespace confuse {

// Bank of M convolution filters of length P, stored as the P x M matrix whose
// columns are the filters.
struct FilterBank {
    Matrix taps;
    Index filter_len() const { return taps.rows(); }
    Index num_filters() const { return taps.cols(); }
};

struct CtlHyper {
    double mu = 1e-4;
    double lambda = 1e-2;
    ActivationKind activation = {Activation::Relu, 0.0};
};

// Seeded transform initialization: entries i.i.d. uniform on
// [-1/sqrt(rows*cols), +1/sqrt(rows*cols)]; full rank with probability 1.
Matrix init_transform(Index rows, Index cols, std::mt19937_64& rng);

// Feature map Phi(S T), one column per filter, length preserving. Column m is
// the activated circular convolution of the signal with filter m.
Matrix ctl_features(const FilterBank& bank, const Vector& signal,
                    const ActivationKind& activation);

// Single-channel transform-learning objective with the nonnegativity penalty:
//
//   1/2 sum_k (||S_k T - X_k||_F^2 + i+(X_k)) + mu ||T||_F^2 - lambda logdet(T)
//
// Returns +infinity when any feature entry is negative (the indicator fires);
// throws NumericalError when T is rank-deficient and lambda > 0.
double ctl_objective(const FilterBank& bank, const std::vector<Matrix>& features,
                     const std::vector<Vector>& signals, const CtlHyper& hyper);

struct CtlSolveResult {
    FilterBank bank;
    std::vector<Matrix> features;
    std::vector<double> objective_trace;  // entry 0 = objective at the initial point
};

// Reference alternating solver: exact prox update on X (closed form through
// the activation identity), backtracked gradient step on T. Desk-scale oracle
// for the end-to-end trainer, not a production path.
CtlSolveResult ctl_prox_alternating(const std::vector<Vector>& signals, Index num_filters,
                                    Index filter_len, const CtlHyper& hyper, int iters,
                                    double step, std::uint64_t seed);

}  // namespace confuse
