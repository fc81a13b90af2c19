#include "confuse/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "confuse/ctl.hpp"
#include "confuse/downstream.hpp"
#include "confuse/errors.hpp"
#include "confuse/model.hpp"

// Every suite here re-derives its expected values through an independent
// route (scalar loops, finite differences, elimination, pairwise counting)
// rather than calling back into the code under test.

namespace confuse {

namespace {

constexpr double kFdEps = 1e-6;

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct SuiteResult {
    std::string name;
    double err = 0.0;
    double tol = 0.0;
    bool pass() const { return err <= tol; }
};

// --- independent oracles ---------------------------------------------------

Vector conv_by_index_sum(const Vector& s, const Vector& t) {
    const Index n = s.size();
    const Index p = t.size();
    const Index off = (p % 2 == 1) ? (p - 1) / 2 : p / 2 - 1;
    Vector out = Vector::Zero(n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) {
            Index idx = (i - j + off) % n;
            if (idx < 0) idx += n;
            out[i] += t[j] * s[idx];
        }
    return out;
}

// log det of a symmetric positive-definite matrix by elimination with
// partial pivoting
double logdet_spd_lu(Matrix a) {
    const Index n = a.rows();
    double logdet = 0.0;
    double sign = 1.0;
    for (Index k = 0; k < n; ++k) {
        Index piv = k;
        for (Index i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (a(piv, k) == 0.0) return -std::numeric_limits<double>::infinity();
        if (piv != k) {
            a.row(piv).swap(a.row(k));
            sign = -sign;
        }
        if (a(k, k) < 0.0) sign = -sign;
        logdet += std::log(std::abs(a(k, k)));
        for (Index i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            a.row(i).tail(n - k) -= f * a.row(k).tail(n - k);
        }
    }
    return sign > 0.0 ? logdet : -std::numeric_limits<double>::infinity();
}

// minimize 1/2 (x - a)^2 over x in [0, hi] by golden-section search
double project_scalar_golden(double a) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0;
    double hi = std::max(a, 0.0) + 1.0;
    auto f = [a](double x) { return 0.5 * (x - a) * (x - a); };
    double x1 = hi - phi * (hi - lo);
    double x2 = lo + phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    return 0.5 * (lo + hi);
}

double auc_pairwise(const Vector& probs, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            const double pi = probs[static_cast<Index>(i)];
            const double pj = probs[static_cast<Index>(j)];
            if (pi > pj)
                wins += 1.0;
            else if (pi == pj)
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// --- suites ------------------------------------------------------------------

struct GradInstance {
    ConFuseModel model;
    std::vector<WindowedSample> samples;
    std::vector<int> indices;
};

// Seeded small instance with strictly interior Z and pre-activations at
// least margin away from the activation kinks.
GradInstance make_grad_instance(ActivationKind act, std::mt19937_64& rng) {
    const Index C = 2, L = 8, M = 2, P = 3, F = 4, K = 3;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.5, 1.5);

    for (int attempt = 0; attempt < 500; ++attempt) {
        GradInstance inst;
        inst.model.dims = Dims{C, L, M, P, F};
        inst.model.activation = act;
        inst.model.config.mu = 1e-4;
        inst.model.config.lambda = 1e-2;
        inst.model.banks.resize(static_cast<std::size_t>(C));
        for (auto& bank : inst.model.banks) {
            bank.taps = Matrix(P, M);
            for (Index i = 0; i < P; ++i)
                for (Index j = 0; j < M; ++j) bank.taps(i, j) = unit(rng);
        }
        inst.model.fusion = Matrix(F, C * L * M);
        for (Index i = 0; i < F; ++i)
            for (Index j = 0; j < C * L * M; ++j) inst.model.fusion(i, j) = unit(rng);
        inst.model.z_train = Matrix(K, F);
        for (Index i = 0; i < K; ++i)
            for (Index j = 0; j < F; ++j) inst.model.z_train(i, j) = pos(rng);
        inst.samples.resize(static_cast<std::size_t>(K));
        for (auto& s : inst.samples) {
            s.windows.resize(static_cast<std::size_t>(C));
            for (auto& w : s.windows) {
                w = Vector(L);
                for (Index i = 0; i < L; ++i) w[i] = unit(rng);
            }
        }
        inst.indices.resize(static_cast<std::size_t>(K));
        std::iota(inst.indices.begin(), inst.indices.end(), 0);

        double margin = std::numeric_limits<double>::infinity();
        for (const auto& s : inst.samples)
            for (Index c = 0; c < C; ++c) {
                Matrix pre = toeplitz_from_signal(s.windows[static_cast<std::size_t>(c)], P) *
                             inst.model.banks[static_cast<std::size_t>(c)].taps;
                margin = std::min(margin, pre.cwiseAbs().minCoeff());
            }
        if (margin > 1e-3) return inst;
    }
    throw NumericalError("could not find a kink-free gradient instance");
}

SuiteResult suite_gradient_fd(std::uint64_t seed, double corruption) {
    SuiteResult res{"gradient-fd", 0.0, 1e-5};
    const char* names[] = {"selu", "relu", "prelu", "leakyrelu", "tanh", "sigmoid"};
    std::mt19937_64 rng(seed);
    for (const char* name : names) {
        ActivationKind act = make_activation(name);
        GradInstance inst = make_grad_instance(act, rng);
        ConFuseModel& m = inst.model;
        auto loss = [&]() { return joint_loss(m, inst.samples, inst.indices); };
        JointGrads g = joint_grad(m, inst.samples, inst.indices);
        g.fusion(0, 0) += corruption;

        for (std::size_t c = 0; c < m.banks.size(); ++c)
            for (Index i = 0; i < m.banks[c].taps.rows(); ++i)
                for (Index j = 0; j < m.banks[c].taps.cols(); ++j) {
                    const double keep = m.banks[c].taps(i, j);
                    m.banks[c].taps(i, j) = keep + kFdEps;
                    const double up = loss();
                    m.banks[c].taps(i, j) = keep - kFdEps;
                    const double dn = loss();
                    m.banks[c].taps(i, j) = keep;
                    res.err = std::max(res.err, rel_err(g.banks[c](i, j), (up - dn) / (2 * kFdEps)));
                }
        for (Index i = 0; i < m.fusion.rows(); ++i)
            for (Index j = 0; j < m.fusion.cols(); ++j) {
                const double keep = m.fusion(i, j);
                m.fusion(i, j) = keep + kFdEps;
                const double up = loss();
                m.fusion(i, j) = keep - kFdEps;
                const double dn = loss();
                m.fusion(i, j) = keep;
                res.err = std::max(res.err, rel_err(g.fusion(i, j), (up - dn) / (2 * kFdEps)));
            }
        for (const auto& [k, gz] : g.z_rows)
            for (Index j = 0; j < gz.size(); ++j) {
                const double keep = m.z_train(k, j);
                m.z_train(k, j) = keep + kFdEps;
                const double up = loss();
                m.z_train(k, j) = keep - kFdEps;
                const double dn = loss();
                m.z_train(k, j) = keep;
                res.err = std::max(res.err, rel_err(gz[j], (up - dn) / (2 * kFdEps)));
            }
        if (act.tag == Activation::Prelu) {
            const double keep = m.activation.slope;
            m.activation.slope = keep + kFdEps;
            const double up = loss();
            m.activation.slope = keep - kFdEps;
            const double dn = loss();
            m.activation.slope = keep;
            res.err = std::max(res.err, rel_err(g.slope, (up - dn) / (2 * kFdEps)));
        }
    }
    return res;
}

SuiteResult suite_prox(std::uint64_t seed) {
    SuiteResult res{"prox-equivalence", 0.0, 1e-9};
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> bump(-0.3, 0.3);
    for (int trial = 0; trial < 20; ++trial) {
        const Index L = 8, M = 2, P = 3;
        Vector s(L);
        for (Index i = 0; i < L; ++i) s[i] = unit(rng);
        Matrix taps(P, M);
        for (Index i = 0; i < P; ++i)
            for (Index j = 0; j < M; ++j) taps(i, j) = unit(rng);
        Matrix pre = toeplitz_from_signal(s, P) * taps;
        Matrix best = prox_nonneg(pre);
        const double f_best = 0.5 * (pre - best).squaredNorm();

        for (int p = 0; p < 1000; ++p) {
            Matrix cand = best;
            for (Index i = 0; i < cand.rows(); ++i)
                for (Index j = 0; j < cand.cols(); ++j)
                    cand(i, j) = std::max(cand(i, j) + bump(rng), 0.0);
            const double f_cand = 0.5 * (pre - cand).squaredNorm();
            res.err = std::max(res.err, f_best - f_cand);  // positive = prox lost
        }
        for (Index i = 0; i < pre.rows(); ++i)
            for (Index j = 0; j < pre.cols(); ++j)
                res.err = std::max(res.err,
                                   std::abs(project_scalar_golden(pre(i, j)) - best(i, j)));
    }
    res.err = std::max(res.err, 0.0);
    return res;
}

SuiteResult suite_toeplitz(std::uint64_t seed) {
    SuiteResult res{"toeplitz-conv", 0.0, 1e-12};
    std::mt19937_64 rng(seed + 2);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Index L = 2 + static_cast<Index>(rng() % 31);
        const Index P = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(L));
        Vector s(L), t(P);
        for (Index i = 0; i < L; ++i) s[i] = unit(rng);
        for (Index i = 0; i < P; ++i) t[i] = unit(rng);
        Vector via_matrix = toeplitz_from_signal(s, P) * t;
        Vector via_conv = circular_conv1d(s, t);
        Vector oracle = conv_by_index_sum(s, t);
        res.err = std::max(res.err, (via_matrix - oracle).cwiseAbs().maxCoeff());
        res.err = std::max(res.err, (via_conv - oracle).cwiseAbs().maxCoeff());
    }
    return res;
}

SuiteResult suite_logdet_value(std::uint64_t seed) {
    SuiteResult res{"logdet-value", 0.0, 1e-9};
    std::mt19937_64 rng(seed + 3);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Index rows = 2 + static_cast<Index>(rng() % 15);
        const Index cols = 1 + static_cast<Index>(
                                   rng() % static_cast<std::uint64_t>(std::min<Index>(rows, 8)));
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = unit(rng);
        const double expected = 0.5 * logdet_spd_lu(m.transpose() * m);
        res.err = std::max(res.err, rel_err(logdet_rect(m), expected));
    }
    return res;
}

SuiteResult suite_logdet_grad(std::uint64_t seed) {
    SuiteResult res{"logdet-grad", 0.0, 1e-5};
    std::mt19937_64 rng(seed + 4);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Index rows = 2 + static_cast<Index>(rng() % 15);
        const Index cols = 1 + static_cast<Index>(
                                   rng() % static_cast<std::uint64_t>(std::min<Index>(rows, 8)));
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = unit(rng);
        Matrix g = logdet_grad(m);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) {
                const double keep = m(i, j);
                m(i, j) = keep + kFdEps;
                const double up = logdet_rect(m);
                m(i, j) = keep - kFdEps;
                const double dn = logdet_rect(m);
                m(i, j) = keep;
                res.err = std::max(res.err, rel_err(g(i, j), (up - dn) / (2 * kFdEps)));
            }
    }
    return res;
}

SuiteResult suite_auc(std::uint64_t seed) {
    SuiteResult res{"auc-pairwise", 0.0, 1e-12};
    std::mt19937_64 rng(seed + 5);
    std::uniform_int_distribution<int> grid(0, 10);  // coarse grid forces ties
    std::uniform_int_distribution<int> coin(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 60;
        Vector probs(n);
        std::vector<int> labels(static_cast<std::size_t>(n));
        bool both = false;
        while (!both) {
            for (Index i = 0; i < n; ++i) {
                probs[i] = grid(rng) / 10.0;
                labels[static_cast<std::size_t>(i)] = coin(rng);
            }
            const long pos = std::count(labels.begin(), labels.end(), 1);
            both = pos > 0 && pos < n;
        }
        ClassificationMetrics m = classification_metrics(probs, labels);
        res.err = std::max(res.err, std::abs(*m.auc - auc_pairwise(probs, labels)));
    }
    return res;
}

SuiteResult suite_ctl_trace(std::uint64_t seed) {
    SuiteResult res{"ctl-trace", 0.0, 1e-8};
    std::mt19937_64 rng(seed + 6);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<Vector> signals(4);
    for (auto& s : signals) {
        s = Vector(8);
        for (Index i = 0; i < 8; ++i) s[i] = unit(rng);
    }
    CtlHyper hyper;
    hyper.activation = make_activation("relu");
    CtlSolveResult sol = ctl_prox_alternating(signals, 2, 3, hyper, 40, 0.05, seed);
    for (std::size_t i = 1; i < sol.objective_trace.size(); ++i)
        res.err = std::max(res.err, sol.objective_trace[i] - sol.objective_trace[i - 1]);
    res.err = std::max(res.err, 0.0);
    if (sol.objective_trace.back() >= sol.objective_trace.front())
        res.err = std::max(res.err, 1.0);  // no progress at all: fail loudly
    return res;
}

}  // namespace

bool run_selfcheck(const SelfCheckOptions& options, std::ostream& out) {
    std::vector<SuiteResult> suites;
    suites.push_back(suite_gradient_fd(options.seed, options.gradient_corruption));
    suites.push_back(suite_prox(options.seed));
    suites.push_back(suite_toeplitz(options.seed));
    suites.push_back(suite_logdet_value(options.seed));
    suites.push_back(suite_logdet_grad(options.seed));
    suites.push_back(suite_auc(options.seed));
    suites.push_back(suite_ctl_trace(options.seed));

    int passed = 0;
    for (const SuiteResult& s : suites) {
        char line[160];
        std::snprintf(line, sizeof(line), "[%s] %-18s max err %.3e  tol %.0e\n",
                      s.pass() ? " ok " : "FAIL", s.name.c_str(), s.err, s.tol);
        out << line;
        if (s.pass()) ++passed;
    }
    out << "selfcheck: " << passed << "/" << suites.size() << " suites passed (seed "
        << options.seed << ")\n";
    return passed == static_cast<int>(suites.size());
}

}  // namespace confuse
