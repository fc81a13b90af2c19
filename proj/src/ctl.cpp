#include "confuse/ctl.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace confuse {

namespace {

constexpr double kBacktrackTol = 1e-8;
constexpr double kMinStep = 1e-18;

// Objective with the indicator dropped (features are kept feasible by the
// prox update) and no rank guard: rank-deficient T evaluates to +infinity so
// backtracking rejects it.
double smooth_objective(const Matrix& taps, const std::vector<Matrix>& features,
                        const std::vector<Matrix>& toeplitz, const CtlHyper& hyper) {
    double value = 0.0;
    for (std::size_t k = 0; k < features.size(); ++k) {
        value += 0.5 * (toeplitz[k] * taps - features[k]).squaredNorm();
    }
    value += hyper.mu * taps.squaredNorm();
    if (hyper.lambda != 0.0) {
        const double ld = logdet_rect(taps);
        if (std::isinf(ld)) {
            return std::numeric_limits<double>::infinity();
        }
        value -= hyper.lambda * ld;
    }
    return value;
}

}  // namespace

Matrix init_transform(Index rows, Index cols, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows * cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = dist(rng);
        }
    }
    return m;
}

Matrix ctl_features(const FilterBank& bank, const Vector& signal,
                    const ActivationKind& activation) {
    if (bank.filter_len() > signal.size()) {
        throw DimensionError("ctl_features: filter length exceeds signal length");
    }
    const Matrix s = toeplitz_from_signal(signal, bank.filter_len());
    return apply(activation, s * bank.taps);
}

double ctl_objective(const FilterBank& bank, const std::vector<Matrix>& features,
                     const std::vector<Vector>& signals, const CtlHyper& hyper) {
    if (features.size() != signals.size()) {
        throw DimensionError("ctl_objective: feature and signal counts differ");
    }
    double value = 0.0;
    for (std::size_t k = 0; k < features.size(); ++k) {
        const Matrix s = toeplitz_from_signal(signals[k], bank.filter_len());
        if (features[k].rows() != s.rows() || features[k].cols() != bank.num_filters()) {
            throw DimensionError("ctl_objective: feature matrix " + std::to_string(k) +
                                 " has the wrong shape");
        }
        if (features[k].minCoeff() < 0.0) {
            return std::numeric_limits<double>::infinity();  // indicator fires
        }
        value += 0.5 * (s * bank.taps - features[k]).squaredNorm();
    }
    value += hyper.mu * bank.taps.squaredNorm();
    if (hyper.lambda != 0.0) {
        const double ld = logdet_rect(bank.taps);
        if (std::isinf(ld)) {
            throw NumericalError("ctl_objective: rank-deficient transform");
        }
        value -= hyper.lambda * ld;
    }
    return value;
}

CtlSolveResult ctl_prox_alternating(const std::vector<Vector>& signals, Index num_filters,
                                    Index filter_len, const CtlHyper& hyper, int iters,
                                    double step, std::uint64_t seed) {
    if (iters < 1) {
        throw ConfigError("ctl_prox_alternating: need at least one iteration");
    }
    if (signals.empty()) {
        throw DataError("ctl_prox_alternating: no signals");
    }
    if (step <= 0.0) {
        throw ConfigError("ctl_prox_alternating: step must be positive");
    }

    std::mt19937_64 rng(seed);
    Matrix taps = init_transform(filter_len, num_filters, rng);

    std::vector<Matrix> toeplitz;
    toeplitz.reserve(signals.size());
    for (const Vector& s : signals) {
        toeplitz.push_back(toeplitz_from_signal(s, filter_len));
    }

    std::vector<Matrix> features(signals.size());
    auto update_features = [&] {
        for (std::size_t k = 0; k < signals.size(); ++k) {
            features[k] = prox_nonneg(toeplitz[k] * taps);
        }
    };

    update_features();
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(iters) + 1);
    trace.push_back(smooth_objective(taps, features, toeplitz, hyper));

    for (int it = 1; it <= iters; ++it) {
        if (std::isinf(trace.back())) {
            throw NumericalError("ctl_prox_alternating: rank collapse at iteration " +
                                 std::to_string(it));
        }

        // (a) exact prox on the features, (b) backtracked gradient step on T.
        update_features();
        const double before = smooth_objective(taps, features, toeplitz, hyper);

        Matrix grad = 2.0 * hyper.mu * taps;
        for (std::size_t k = 0; k < signals.size(); ++k) {
            grad += toeplitz[k].transpose() * (toeplitz[k] * taps - features[k]);
        }
        if (hyper.lambda != 0.0) {
            try {
                grad -= hyper.lambda * logdet_grad(taps);
            } catch (const NumericalError&) {
                throw NumericalError("ctl_prox_alternating: rank collapse at iteration " +
                                     std::to_string(it));
            }
        }

        while (step >= kMinStep) {
            const Matrix candidate = taps - step * grad;
            if (smooth_objective(candidate, features, toeplitz, hyper) <= before + kBacktrackTol) {
                taps = candidate;
                break;
            }
            step *= 0.5;
        }
        trace.push_back(smooth_objective(taps, features, toeplitz, hyper));
    }

    update_features();
    return CtlSolveResult{FilterBank{taps}, std::move(features), std::move(trace)};
}

}  // namespace confuse
