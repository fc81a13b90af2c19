#include "confuse/linalg.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace confuse {

namespace {

// Centering offset: odd P keeps the kernel symmetric around its middle tap,
// even P puts the extra tap on the causal side.
Index kernel_offset(Index taps) {
    return (taps % 2 == 1) ? (taps - 1) / 2 : taps / 2 - 1;
}

Index wrap(Index i, Index n) {
    Index r = i % n;
    return r < 0 ? r + n : r;
}

}  // namespace

Vector circular_conv1d(const Vector& signal, const Vector& filter) {
    const Index len = signal.size();
    const Index taps = filter.size();
    if (taps < 1) {
        throw DimensionError("circular_conv1d: filter must have at least one tap");
    }
    if (taps > len) {
        throw DimensionError("circular_conv1d: filter length " + std::to_string(taps) +
                             " exceeds signal length " + std::to_string(len));
    }
    const Index off = kernel_offset(taps);
    Vector out(len);
    for (Index i = 0; i < len; ++i) {
        double acc = 0.0;
        for (Index j = 0; j < taps; ++j) {
            acc += filter[j] * signal[wrap(i - j + off, len)];
        }
        out[i] = acc;
    }
    return out;
}

Matrix toeplitz_from_signal(const Vector& signal, Index taps) {
    const Index len = signal.size();
    if (taps < 1) {
        throw DimensionError("toeplitz_from_signal: need at least one tap");
    }
    if (taps > len) {
        throw DimensionError("toeplitz_from_signal: tap count " + std::to_string(taps) +
                             " exceeds signal length " + std::to_string(len));
    }
    const Index off = kernel_offset(taps);
    Matrix s(len, taps);
    for (Index i = 0; i < len; ++i) {
        for (Index j = 0; j < taps; ++j) {
            s(i, j) = signal[wrap(i - j + off, len)];
        }
    }
    return s;
}

SvdResult svd(const Matrix& m) {
    if (!m.allFinite()) {
        throw NumericalError("svd: input has non-finite entries");
    }
    Eigen::JacobiSVD<Matrix> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success) {
        throw NumericalError("svd: iteration cap reached without convergence");
    }
    return SvdResult{dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

double logdet_rect(const Matrix& m) {
    if (!m.allFinite()) {
        throw NumericalError("logdet_rect: input has non-finite entries");
    }
    Eigen::JacobiSVD<Matrix> dec(m);
    const Vector& sigma = dec.singularValues();
    if (sigma.size() == 0 || sigma.minCoeff() <= kSigmaFloor) {
        return -std::numeric_limits<double>::infinity();
    }
    return sigma.array().log().sum();
}

Matrix logdet_grad(const Matrix& m) {
    SvdResult dec = svd(m);
    const double smin = dec.sigma.size() == 0 ? 0.0 : dec.sigma.minCoeff();
    if (smin <= kSigmaFloor) {
        throw NumericalError("logdet_grad: rank-deficient matrix (sigma_min = " +
                             std::to_string(smin) + ")");
    }
    return dec.u * dec.sigma.cwiseInverse().asDiagonal() * dec.v.transpose();
}

double sigma_min(const Matrix& m) {
    if (!m.allFinite()) {
        throw NumericalError("sigma_min: input has non-finite entries");
    }
    Eigen::JacobiSVD<Matrix> dec(m);
    const Vector& sigma = dec.singularValues();
    return sigma.size() == 0 ? 0.0 : sigma.minCoeff();
}

}  // namespace confuse
