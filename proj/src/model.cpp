#include "confuse/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "confuse/errors.hpp"

namespace confuse {

namespace {

constexpr char kModelMagic[4] = {'C', 'F', 'S', 'E'};
constexpr std::uint32_t kModelVersion = 1;
// Feature layout: channel-major, then window position, then filter.
constexpr const char* kFlattenTag = "ctf.v1";
// Trained slope stays strictly inside (0, 1) so the activation keeps a
// distinct negative side.
constexpr double kSlopeFloor = 1e-4;

void check_dims(const Dims& d) {
    if (d.channels < 1 || d.window_len < 1 || d.num_filters < 1 || d.filter_len < 1 ||
        d.fusion_dim < 1)
        throw ConfigError("model dimensions must be positive");
    if (d.filter_len > d.window_len) throw ConfigError("filter length exceeds window length");
}

void check_config(const TrainConfig& c) {
    if (c.epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (c.batch_size < 1) throw ConfigError("batch size must be positive");
    if (!(c.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (!(c.eps_adam > 0.0)) throw ConfigError("adam epsilon must be positive");
    if (c.weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
    if (c.mu < 0.0) throw ConfigError("mu must be nonnegative");
    if (c.lambda < 0.0) throw ConfigError("lambda must be nonnegative");
}

void check_sample_index(int k, std::span<const WindowedSample> samples, const Matrix& z) {
    if (k < 0 || k >= static_cast<int>(samples.size()))
        throw DimensionError("sample index " + std::to_string(k) + " out of range");
    if (k >= z.rows())
        throw DimensionError("feature row " + std::to_string(k) + " out of range");
}

}  // namespace

Vector channel_stack(const std::vector<FilterBank>& banks, ActivationKind activation,
                     const std::vector<Vector>& windows) {
    if (banks.empty()) throw DimensionError("channel stack needs at least one filter bank");
    if (windows.size() != banks.size())
        throw DimensionError("channel count mismatch: " + std::to_string(windows.size()) +
                             " windows for " + std::to_string(banks.size()) + " banks");
    const Index P = banks[0].filter_len();
    const Index M = banks[0].num_filters();
    const Index L = windows[0].size();
    Vector out(static_cast<Index>(banks.size()) * L * M);
    for (std::size_t c = 0; c < banks.size(); ++c) {
        if (banks[c].taps.rows() != P || banks[c].taps.cols() != M)
            throw DimensionError("filter banks disagree on shape");
        if (windows[c].size() != L) throw DimensionError("channel windows disagree on length");
        Matrix s = toeplitz_from_signal(windows[c], P);
        Matrix feat = apply(activation, s * banks[c].taps);  // L x M
        const Index base = static_cast<Index>(c) * L * M;
        for (Index i = 0; i < L; ++i)
            for (Index m = 0; m < M; ++m) out[base + i * M + m] = feat(i, m);
    }
    return out;
}

Vector extract_features(const ConFuseModel& model, const WindowedSample& sample) {
    Vector stack = channel_stack(model.banks, model.activation, sample.windows);
    if (model.fusion.cols() != stack.size())
        throw DimensionError("fusion transform expects " + std::to_string(model.fusion.cols()) +
                             " stacked features, got " + std::to_string(stack.size()));
    return prox_nonneg(model.fusion * stack);
}

double joint_loss(const ConFuseModel& model, std::span<const WindowedSample> samples,
                  std::span<const int> indices) {
    const TrainConfig& c = model.config;
    double loss = 0.0;
    for (int k : indices) {
        check_sample_index(k, samples, model.z_train);
        if ((model.z_train.row(k).array() < 0.0).any())
            return std::numeric_limits<double>::infinity();
        Vector stack = channel_stack(model.banks, model.activation, samples[k].windows);
        Vector r = model.fusion * stack - model.z_train.row(k).transpose();
        loss += 0.5 * r.squaredNorm();
    }
    loss += c.mu * model.fusion.squaredNorm();
    for (const FilterBank& bank : model.banks) loss += c.mu * bank.taps.squaredNorm();
    if (c.lambda > 0.0) {  // 0 * (-inf) would poison the sum, so gate the term
        double ld = logdet_rect(model.fusion);
        if (std::isinf(ld)) throw NumericalError("fusion transform is rank deficient");
        double total = ld;
        for (std::size_t ch = 0; ch < model.banks.size(); ++ch) {
            ld = logdet_rect(model.banks[ch].taps);
            if (std::isinf(ld))
                throw NumericalError("channel " + std::to_string(ch) +
                                     " filter bank is rank deficient");
            total += ld;
        }
        loss -= c.lambda * total;
    }
    return loss;
}

JointGrads joint_grad(const ConFuseModel& model, std::span<const WindowedSample> samples,
                      std::span<const int> indices) {
    const TrainConfig& cfg = model.config;
    const Index C = static_cast<Index>(model.banks.size());
    if (C == 0) throw DimensionError("model has no filter banks");
    const Index P = model.banks[0].filter_len();
    const Index M = model.banks[0].num_filters();
    const Index F = model.fusion.rows();
    const bool want_slope =
        model.activation.tag == Activation::Prelu && cfg.train_prelu_slope;

    JointGrads g;
    g.banks.assign(static_cast<std::size_t>(C), Matrix::Zero(P, M));
    g.fusion = Matrix::Zero(F, model.fusion.cols());
    g.z_rows.reserve(indices.size());

    std::vector<Matrix> toep(static_cast<std::size_t>(C));
    std::vector<Matrix> preact(static_cast<std::size_t>(C));
    for (int k : indices) {
        check_sample_index(k, samples, model.z_train);
        const WindowedSample& sample = samples[static_cast<std::size_t>(k)];
        if (static_cast<Index>(sample.windows.size()) != C)
            throw DimensionError("channel count mismatch in sample");
        const Index L = sample.windows[0].size();
        Vector stack(C * L * M);
        for (Index c = 0; c < C; ++c) {
            const std::size_t ci = static_cast<std::size_t>(c);
            toep[ci] = toeplitz_from_signal(sample.windows[ci], P);
            preact[ci] = toep[ci] * model.banks[ci].taps;
            Matrix feat = apply(model.activation, preact[ci]);
            const Index base = c * L * M;
            for (Index i = 0; i < L; ++i)
                for (Index m = 0; m < M; ++m) stack[base + i * M + m] = feat(i, m);
        }
        Vector r = model.fusion * stack - model.z_train.row(k).transpose();
        g.fusion.noalias() += r * stack.transpose();
        g.z_rows.emplace_back(k, (-r).eval());
        Vector back = model.fusion.transpose() * r;  // d loss / d stack
        for (Index c = 0; c < C; ++c) {
            const std::size_t ci = static_cast<std::size_t>(c);
            Matrix gm(L, M);
            const Index base = c * L * M;
            for (Index i = 0; i < L; ++i)
                for (Index m = 0; m < M; ++m) gm(i, m) = back[base + i * M + m];
            Matrix chain = gm.cwiseProduct(derivative(model.activation, preact[ci]));
            g.banks[ci].noalias() += toep[ci].transpose() * chain;
            if (want_slope)
                g.slope += gm.cwiseProduct(slope_derivative(model.activation, preact[ci])).sum();
        }
    }

    g.fusion += 2.0 * cfg.mu * model.fusion;
    for (Index c = 0; c < C; ++c)
        g.banks[static_cast<std::size_t>(c)] +=
            2.0 * cfg.mu * model.banks[static_cast<std::size_t>(c)].taps;
    if (cfg.lambda > 0.0) {
        try {
            g.fusion -= cfg.lambda * logdet_grad(model.fusion);
        } catch (const NumericalError&) {
            throw NumericalError("fusion transform is rank deficient");
        }
        for (Index c = 0; c < C; ++c) {
            try {
                g.banks[static_cast<std::size_t>(c)] -=
                    cfg.lambda * logdet_grad(model.banks[static_cast<std::size_t>(c)].taps);
            } catch (const NumericalError&) {
                throw NumericalError("channel " + std::to_string(c) +
                                     " filter bank is rank deficient");
            }
        }
    }
    return g;
}

void adam_update(Matrix& param, const Matrix& grad, AdamState& state, const TrainConfig& config,
                 double decay) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols())
        throw DimensionError("adam update shape mismatch");
    if (state.m.rows() != param.rows() || state.m.cols() != param.cols()) {
        state.m = Matrix::Zero(param.rows(), param.cols());
        state.v = Matrix::Zero(param.rows(), param.cols());
        state.step = 0;
    }
    ++state.step;
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    if (decay > 0.0) param *= 1.0 - config.lr * decay;
    param.array() -=
        config.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + config.eps_adam);
}

void adam_project_step(ConFuseModel& model, OptimizerState& state, const JointGrads& grads) {
    const TrainConfig& cfg = model.config;
    if (grads.banks.size() != model.banks.size())
        throw DimensionError("gradient bank count mismatch");
    if (state.banks.size() != model.banks.size()) state.banks.resize(model.banks.size());
    for (std::size_t c = 0; c < model.banks.size(); ++c)
        adam_update(model.banks[c].taps, grads.banks[c], state.banks[c], cfg, cfg.weight_decay);
    adam_update(model.fusion, grads.fusion, state.fusion, cfg, cfg.weight_decay);

    if (model.activation.tag == Activation::Prelu && cfg.train_prelu_slope) {
        Matrix sp(1, 1), sg(1, 1);
        sp(0, 0) = model.activation.slope;
        sg(0, 0) = grads.slope;
        adam_update(sp, sg, state.slope, cfg, 0.0);  // no decay on the slope
        model.activation.slope = std::clamp(sp(0, 0), kSlopeFloor, 1.0 - kSlopeFloor);
    }

    if (state.z_m.rows() != model.z_train.rows() || state.z_m.cols() != model.z_train.cols()) {
        state.z_m = Matrix::Zero(model.z_train.rows(), model.z_train.cols());
        state.z_v = Matrix::Zero(model.z_train.rows(), model.z_train.cols());
        state.z_steps.assign(static_cast<std::size_t>(model.z_train.rows()), 0);
    }
    for (const auto& [k, gz] : grads.z_rows) {
        if (k < 0 || k >= model.z_train.rows())
            throw DimensionError("feature row " + std::to_string(k) + " out of range");
        if (gz.size() != model.z_train.cols())
            throw DimensionError("feature row gradient length mismatch");
        const long step = ++state.z_steps[static_cast<std::size_t>(k)];
        Vector m = cfg.beta1 * state.z_m.row(k).transpose() + (1.0 - cfg.beta1) * gz;
        Vector v = cfg.beta2 * state.z_v.row(k).transpose() +
                   (1.0 - cfg.beta2) * gz.cwiseProduct(gz);
        state.z_m.row(k) = m.transpose();
        state.z_v.row(k) = v.transpose();
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        Vector row = model.z_train.row(k).transpose();
        row.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps_adam);
        model.z_train.row(k) = row.cwiseMax(0.0).transpose();  // projection, not decay
    }
}

TrainResult train(const Dims& dims, ActivationKind activation, const TrainConfig& config,
                  const std::vector<WindowedSample>& train_samples) {
    check_dims(dims);
    check_config(config);
    if (train_samples.empty()) throw DataError("no training samples");
    if (static_cast<std::size_t>(config.batch_size) > train_samples.size())
        throw ConfigError("batch size " + std::to_string(config.batch_size) + " exceeds " +
                          std::to_string(train_samples.size()) + " training samples");
    for (const WindowedSample& s : train_samples) {
        if (static_cast<Index>(s.windows.size()) != dims.channels)
            throw DimensionError("sample has " + std::to_string(s.windows.size()) +
                                 " channels, model expects " + std::to_string(dims.channels));
        for (const Vector& w : s.windows)
            if (w.size() != dims.window_len)
                throw DimensionError("sample window length " + std::to_string(w.size()) +
                                     " does not match model " +
                                     std::to_string(dims.window_len));
    }

    ConFuseModel model;
    model.dims = dims;
    model.activation = activation;
    model.config = config;

    std::mt19937_64 rng(config.seed);
    model.banks.resize(static_cast<std::size_t>(dims.channels));
    for (auto& bank : model.banks)
        bank.taps = init_transform(dims.filter_len, dims.num_filters, rng);
    model.fusion = init_transform(dims.fusion_dim, dims.stacked(), rng);

    const int K = static_cast<int>(train_samples.size());
    model.z_train = Matrix(K, dims.fusion_dim);
    for (int k = 0; k < K; ++k)
        model.z_train.row(k) =
            extract_features(model, train_samples[static_cast<std::size_t>(k)]).transpose();

    OptimizerState opt;
    std::vector<int> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> all = order;

    TrainResult result;
    result.loss_trace.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int b = 0; b < K; b += config.batch_size) {
            const int len = std::min(config.batch_size, K - b);
            std::span<const int> batch(order.data() + b, static_cast<std::size_t>(len));
            JointGrads g;
            try {
                g = joint_grad(model, train_samples, batch);
            } catch (const NumericalError& err) {
                throw NumericalError("epoch " + std::to_string(epoch) + ": " + err.what());
            }
            adam_project_step(model, opt, g);
        }
        double loss;
        try {
            loss = joint_loss(model, train_samples, all);
        } catch (const NumericalError& err) {
            throw NumericalError("epoch " + std::to_string(epoch) + ": " + err.what());
        }
        if (!std::isfinite(loss))
            throw NumericalError("epoch " + std::to_string(epoch) + ": loss is not finite");
        result.loss_trace.push_back(loss);
    }
    result.model = std::move(model);
    return result;
}

void save_model(const ConFuseModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out.write(kModelMagic, 4);
    io::write_u32(out, kModelVersion);
    io::write_string(out, kFlattenTag);
    io::write_string(out, std::string(activation_name(model.activation.tag)));
    io::write_f64(out, model.activation.slope);
    io::write_u32(out, static_cast<std::uint32_t>(model.dims.channels));
    io::write_u32(out, static_cast<std::uint32_t>(model.dims.window_len));
    io::write_u32(out, static_cast<std::uint32_t>(model.dims.num_filters));
    io::write_u32(out, static_cast<std::uint32_t>(model.dims.filter_len));
    io::write_u32(out, static_cast<std::uint32_t>(model.dims.fusion_dim));
    io::write_u32(out, static_cast<std::uint32_t>(model.config.epochs));
    io::write_u32(out, static_cast<std::uint32_t>(model.config.batch_size));
    io::write_f64(out, model.config.lr);
    io::write_f64(out, model.config.beta1);
    io::write_f64(out, model.config.beta2);
    io::write_f64(out, model.config.eps_adam);
    io::write_f64(out, model.config.weight_decay);
    io::write_f64(out, model.config.mu);
    io::write_f64(out, model.config.lambda);
    io::write_u64(out, model.config.seed);
    io::write_u8(out, model.config.train_prelu_slope ? 1 : 0);
    io::write_u8(out, model.has_norm ? 1 : 0);
    if (model.has_norm) {
        io::write_string(out, std::string(scheme_name(model.norm.scheme)));
        for (int c = 0; c < kNumChannels; ++c) {
            io::write_f64(out, model.norm.shift[c]);
            io::write_f64(out, model.norm.scale[c]);
        }
    }
    io::write_f64(out, model.split_fraction);
    io::write_u32(out, static_cast<std::uint32_t>(model.window_stride));
    io::write_string(out, model.symbol);
    for (const FilterBank& bank : model.banks) io::write_matrix(out, bank.taps);
    io::write_matrix(out, model.fusion);
    io::write_matrix(out, model.z_train);
    out.flush();
    if (!out) throw DataError("write failed for " + path);
}

ConFuseModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::string_view(magic, 4) != std::string_view(kModelMagic, 4))
        throw DataError(path + " is not a model file");
    const std::uint32_t version = io::read_u32(in);
    if (version != kModelVersion)
        throw DataError("unsupported model version " + std::to_string(version));
    const std::string tag = io::read_string(in);
    if (tag != kFlattenTag) throw DataError("unknown feature layout tag '" + tag + "'");

    ConFuseModel model;
    const std::string act_name = io::read_string(in);
    const double slope = io::read_f64(in);
    try {
        model.activation = make_activation(act_name);
        if (uses_slope(model.activation.tag)) {
            if (!(slope > 0.0 && slope < 1.0))
                throw DataError("stored slope " + std::to_string(slope) + " out of range");
            model.activation.slope = slope;
        }
    } catch (const ConfigError& err) {
        throw DataError(path + ": " + err.what());
    }

    model.dims.channels = static_cast<Index>(io::read_u32(in));
    model.dims.window_len = static_cast<Index>(io::read_u32(in));
    model.dims.num_filters = static_cast<Index>(io::read_u32(in));
    model.dims.filter_len = static_cast<Index>(io::read_u32(in));
    model.dims.fusion_dim = static_cast<Index>(io::read_u32(in));
    if (model.dims.channels < 1 || model.dims.window_len < 1 || model.dims.num_filters < 1 ||
        model.dims.filter_len < 1 || model.dims.fusion_dim < 1)
        throw DataError(path + ": nonpositive model dimension");

    model.config.epochs = static_cast<int>(io::read_u32(in));
    model.config.batch_size = static_cast<int>(io::read_u32(in));
    model.config.lr = io::read_f64(in);
    model.config.beta1 = io::read_f64(in);
    model.config.beta2 = io::read_f64(in);
    model.config.eps_adam = io::read_f64(in);
    model.config.weight_decay = io::read_f64(in);
    model.config.mu = io::read_f64(in);
    model.config.lambda = io::read_f64(in);
    model.config.seed = io::read_u64(in);
    model.config.train_prelu_slope = io::read_u8(in) != 0;

    model.has_norm = io::read_u8(in) != 0;
    if (model.has_norm) {
        try {
            model.norm.scheme = parse_scheme(io::read_string(in));
        } catch (const ConfigError& err) {
            throw DataError(path + ": " + err.what());
        }
        for (int c = 0; c < kNumChannels; ++c) {
            model.norm.shift[c] = io::read_f64(in);
            model.norm.scale[c] = io::read_f64(in);
        }
    }
    model.split_fraction = io::read_f64(in);
    model.window_stride = static_cast<Index>(io::read_u32(in));
    model.symbol = io::read_string(in);

    model.banks.resize(static_cast<std::size_t>(model.dims.channels));
    for (auto& bank : model.banks) {
        bank.taps = io::read_matrix(in);
        if (bank.taps.rows() != model.dims.filter_len || bank.taps.cols() != model.dims.num_filters)
            throw DataError(path + ": filter bank shape does not match header");
    }
    model.fusion = io::read_matrix(in);
    if (model.fusion.rows() != model.dims.fusion_dim ||
        model.fusion.cols() != model.dims.stacked())
        throw DataError(path + ": fusion transform shape does not match header");
    model.z_train = io::read_matrix(in);
    if (model.z_train.cols() != model.dims.fusion_dim)
        throw DataError(path + ": feature matrix shape does not match header");
    return model;
}

void write_loss_trace(const std::vector<double>& trace, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write " + path);
    for (std::size_t i = 0; i < trace.size(); ++i)
        std::fprintf(f, "%d %.17g\n", static_cast<int>(i + 1), trace[i]);
    if (std::fclose(f) != 0) throw DataError("write failed for " + path);
}

}  // namespace confuse
