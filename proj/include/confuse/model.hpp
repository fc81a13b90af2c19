#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "confuse/activations.hpp"
#include "confuse/ctl.hpp"
#include "confuse/data.hpp"
#include "confuse/linalg.hpp"

namespace confuse {

struct Dims {
    Index channels = 5;
    Index window_len = 20;   // L, samples per channel window
    Index num_filters = 4;   // M, filters per channel bank
    Index filter_len = 5;    // P, taps per filter
    Index fusion_dim = 64;   // F, fused representation size

    Index stacked() const { return channels * window_len * num_filters; }
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    double weight_decay = 5e-5;  // decoupled, transforms only
    double mu = 1e-4;
    double lambda = 1e-2;
    std::uint64_t seed = 0;
    bool train_prelu_slope = true;
};

struct ConFuseModel {
    Dims dims;
    ActivationKind activation;
    TrainConfig config;
    std::vector<FilterBank> banks;  // one per channel, filter_len x num_filters
    Matrix fusion;                  // fusion_dim x stacked()
    Matrix z_train;                 // train samples x fusion_dim, nonnegative
    bool has_norm = false;
    NormParams norm;
    double split_fraction = 0.8;
    Index window_stride = 1;
    std::string symbol;
};

// Per-channel convolution features flattened channel-major, then time, then
// filter: out[c*L*M + i*M + m] = F_c(i, m).
Vector channel_stack(const std::vector<FilterBank>& banks, ActivationKind activation,
                     const std::vector<Vector>& windows);

inline Vector channel_stack(const ConFuseModel& model, const WindowedSample& sample) {
    return channel_stack(model.banks, model.activation, sample.windows);
}

// Fused representation of one sample: the nonnegative part of fusion applied
// to the stacked channel features.
Vector extract_features(const ConFuseModel& model, const WindowedSample& sample);

// Joint objective over the index subset: half the squared fusion residual per
// sample plus the transform penalties. Returns +inf when a selected feature
// row has a negative entry; throws NumericalError on a rank-deficient
// transform when lambda > 0. An empty subset leaves only the penalties.
double joint_loss(const ConFuseModel& model, std::span<const WindowedSample> samples,
                  std::span<const int> indices);

struct JointGrads {
    std::vector<Matrix> banks;
    Matrix fusion;
    std::vector<std::pair<int, Vector>> z_rows;  // touched feature rows only
    double slope = 0.0;                          // nonzero only for a trained slope
};

JointGrads joint_grad(const ConFuseModel& model, std::span<const WindowedSample> samples,
                      std::span<const int> indices);

struct AdamState {
    Matrix m;
    Matrix v;
    long step = 0;
};

// One decoupled-decay Adam step. Decay scales the pre-step parameter, so with
// decay = 0 the first step moves each entry by exactly -lr * g / (|g| + eps).
void adam_update(Matrix& param, const Matrix& grad, AdamState& state, const TrainConfig& config,
                 double decay);

struct OptimizerState {
    std::vector<AdamState> banks;
    AdamState fusion;
    AdamState slope;
    Matrix z_m;
    Matrix z_v;
    std::vector<long> z_steps;  // per-row counters, rows step only when touched
};

// Apply one optimizer step to every parameter a gradient was produced for.
// Feature rows take an Adam step without decay and are then projected back
// onto the nonnegative orthant; a trained slope is clamped away from 0 and 1.
void adam_project_step(ConFuseModel& model, OptimizerState& state, const JointGrads& grads);

struct TrainResult {
    ConFuseModel model;
    std::vector<double> loss_trace;  // full-data loss after each epoch
};

// Train transforms and feature rows jointly with mini-batch projected Adam.
// Initialization draws the channel banks in channel order, then the fusion
// transform, from one generator seeded by config.seed; feature rows warm
// start at the projected fused features. With epochs = 0 the warm-started
// model is returned untouched and the trace is empty.
TrainResult train(const Dims& dims, ActivationKind activation, const TrainConfig& config,
                  const std::vector<WindowedSample>& train_samples);

void save_model(const ConFuseModel& model, const std::string& path);
ConFuseModel load_model(const std::string& path);

void write_loss_trace(const std::vector<double>& trace, const std::string& path);

}  // namespace confuse
