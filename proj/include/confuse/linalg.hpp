#pragma once

#include <Eigen/Dense>

#include "confuse/errors.hpp"

namespace confuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Singular values at or below this floor count as rank collapse.
inline constexpr double kSigmaFloor = 1e-12;

struct SvdResult {
    Matrix u;      // orthonormal columns
    Vector sigma;  // non-negative, sorted non-increasing
    Matrix v;      // orthonormal columns
};

// Circular 1D convolution, length preserving. The kernel is centered so that
// an odd-length filter reproduces the same-length "pad = (P-1)/2" convention;
// even lengths use offset P/2 - 1.
//
//   out[i] = sum_j filter[j] * signal[(i - j + off) mod L]
Vector circular_conv1d(const Vector& signal, const Vector& filter);

// L x P matrix S built from the signal so that S * t equals
// circular_conv1d(signal, t) for every filter t of length P. Each column is a
// cyclic shift of the signal.
Matrix toeplitz_from_signal(const Vector& signal, Index taps);

// Thin SVD. Throws NumericalError on non-finite input or failed convergence.
SvdResult svd(const Matrix& m);

// Sum of log singular values of a (possibly rectangular) matrix.
// Returns -infinity when any singular value falls at or below kSigmaFloor.
double logdet_rect(const Matrix& m);

// Gradient of logdet_rect: U diag(1/sigma) V^T, the transpose of the
// pseudo-inverse. Throws NumericalError when the matrix is rank-deficient.
Matrix logdet_grad(const Matrix& m);

// Smallest singular value.
double sigma_min(const Matrix& m);

}  // namespace confuse
