#include "confuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <utility>

#include "confuse/data.hpp"
#include "confuse/downstream.hpp"
#include "confuse/errors.hpp"
#include "confuse/model.hpp"
#include "seeding.hpp"

namespace fs = std::filesystem;

namespace confuse {

namespace {

// Rethrow with the per-stock context while keeping the error type (each type
// maps to its own exit code).
template <class Fn>
void with_context(const std::string& ctx, Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        throw ConfigError(ctx + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(ctx + ": " + e.what());
    } catch (const DimensionError& e) {
        throw DimensionError(ctx + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(ctx + ": " + e.what());
    }
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t stock_seed(std::uint64_t master, const std::string& symbol) {
    return seeding::splitmix64(master ^ seeding::fnv1a64(symbol));
}

std::vector<Index> anchor_rows(Index n, Index window_len, Index stride) {
    std::vector<Index> anchors;
    for (Index t = window_len - 1; t <= n - 2; t += stride) anchors.push_back(t);
    return anchors;
}

MultiChannelSeries apply_norm(const MultiChannelSeries& series, const NormParams& params) {
    MultiChannelSeries out;
    out.symbol = series.symbol;
    out.dates = series.dates;
    for (int c = 0; c < kNumChannels; ++c) {
        out.channels[c].resize(series.size());
        for (std::size_t i = 0; i < series.size(); ++i)
            out.channels[c][i] = params.normalize_value(c, series.channels[c][i]);
    }
    return out;
}

struct EvalData {
    ConFuseModel model;
    SplitSamples split;
};

// Windows and splits a stock under a stored model: its normalization params,
// window geometry, and split fraction, never refit.
EvalData prepare_eval(const RunConfig& config, const MultiChannelSeries& raw) {
    EvalData d;
    d.model = load_model(config.out + "/" + raw.symbol + "/model.bin");
    MultiChannelSeries series = d.model.has_norm ? apply_norm(raw, d.model.norm) : raw;
    std::vector<WindowedSample> samples =
        window(series, d.model.dims.window_len, d.model.window_stride);
    d.split = split_temporal(samples, d.model.split_fraction);
    return d;
}

Matrix feature_matrix(const ConFuseModel& model, const std::vector<WindowedSample>& samples) {
    Matrix z(static_cast<Index>(samples.size()), model.dims.fusion_dim);
    for (std::size_t i = 0; i < samples.size(); ++i)
        z.row(static_cast<Index>(i)) = extract_features(model, samples[i]).transpose();
    return z;
}

Matrix target_matrix(const std::vector<WindowedSample>& samples) {
    Matrix y(static_cast<Index>(samples.size()), kNumChannels);
    for (std::size_t i = 0; i < samples.size(); ++i) y.row(static_cast<Index>(i)) = samples[i].target;
    return y;
}

Matrix denorm_matrix(const Matrix& values, const NormParams& params) {
    Matrix out = values;
    for (Index i = 0; i < out.rows(); ++i)
        for (Index j = 0; j < out.cols(); ++j)
            out(i, j) = params.denormalize_value(static_cast<int>(j), out(i, j));
    return out;
}

Vector mean_of(const std::vector<Vector>& rows) {
    Vector acc = Vector::Zero(rows.front().size());
    for (const Vector& r : rows) acc += r;
    return acc / static_cast<double>(rows.size());
}

}  // namespace

std::vector<std::string> list_stock_files(const std::string& data_path) {
    fs::path p(data_path);
    if (data_path.empty() || !fs::exists(p))
        throw DataError("data path does not exist: " + data_path);
    if (fs::is_regular_file(p)) return {p.string()};
    if (!fs::is_directory(p)) throw DataError("data path is neither file nor directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(p)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext == ".csv") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .csv files under " + data_path);
    return files;
}

void write_resolved_config(const RunConfig& config, const std::string& command,
                           const std::string& path) {
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') q += '\\';
            q += c;
        }
        return q + "\"";
    };
    auto value_for = [&](const std::string& key) -> std::string {
        if (key == "data") return quote(config.data);
        if (key == "out") return quote(config.out);
        if (key == "activation") return quote(config.activation);
        if (key == "slope") return fmt(config.slope);
        if (key == "norm") return quote(config.norm);
        if (key == "split") return fmt(config.split);
        if (key == "window") return std::to_string(config.window);
        if (key == "stride") return std::to_string(config.stride);
        if (key == "filters") return std::to_string(config.filters);
        if (key == "taps") return std::to_string(config.taps);
        if (key == "fusion-dim") return std::to_string(config.fusion_dim);
        if (key == "epochs") return std::to_string(config.epochs);
        if (key == "batch") return std::to_string(config.batch);
        if (key == "lr") return fmt(config.lr);
        if (key == "beta1") return fmt(config.beta1);
        if (key == "beta2") return fmt(config.beta2);
        if (key == "eps") return fmt(config.eps);
        if (key == "weight-decay") return fmt(config.weight_decay);
        if (key == "mu") return fmt(config.mu);
        if (key == "lambda") return fmt(config.lambda);
        if (key == "seed") return std::to_string(config.seed);
        if (key == "freeze-slope") return config.freeze_slope ? "true" : "false";
        if (key == "ridge-alpha") return fmt(config.ridge_alpha);
        if (key == "denormalized-mae") return config.denormalized_mae ? "true" : "false";
        if (key == "trees") return std::to_string(config.trees);
        if (key == "depth") return std::to_string(config.depth);
        if (key == "min-leaf") return std::to_string(config.min_leaf);
        if (key == "mtry") return std::to_string(config.mtry);
        if (key == "threshold") return fmt(config.threshold);
        throw ConfigError("unknown config key " + key);
    };
    std::vector<std::string> keys;
    if (command == "train")
        keys = {"data",   "out",   "activation", "slope", "norm",  "split",
                "window", "stride", "filters",   "taps",  "fusion-dim", "epochs",
                "batch",  "lr",    "beta1",      "beta2", "eps",   "weight-decay",
                "mu",     "lambda", "seed",      "freeze-slope"};
    else if (command == "forecast")
        keys = {"data", "out", "ridge-alpha", "denormalized-mae"};
    else if (command == "trade")
        keys = {"data", "out", "seed", "trees", "depth", "min-leaf", "mtry", "threshold"};
    else if (command == "features")
        keys = {"data", "out"};
    else
        throw ConfigError("unknown command " + command);

    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    // the section header routes the keys to the right subcommand when the file
    // is fed back through --config
    out << "[" << command << "]\n";
    for (const std::string& key : keys) out << key << "=" << value_for(key) << "\n";
    if (!out) throw DataError("write failed for " + path);
}

void cmd_train(const RunConfig& config, std::ostream& log) {
    const NormScheme scheme = parse_scheme(config.norm);
    const ActivationKind activation = make_activation(config.activation, config.slope);
    Dims dims;
    dims.channels = kNumChannels;
    dims.window_len = config.window;
    dims.num_filters = config.filters;
    dims.filter_len = config.taps;
    dims.fusion_dim = config.fusion_dim;

    const std::vector<std::string> files = list_stock_files(config.data);
    fs::create_directories(config.out);
    write_resolved_config(config, "train", config.out + "/resolved_train.conf");

    for (const std::string& path : files) {
        LoadReport report = load_stock_csv(path);
        const std::string sym = report.series.symbol;
        with_context(sym, [&] {
            for (const std::string& msg : report.drop_messages)
                log << sym << ": dropped " << msg << "\n";

            const Index n = static_cast<Index>(report.series.size());
            if (n < config.window + 1)
                throw DataError("series of length " + std::to_string(n) +
                                " is too short for window length " +
                                std::to_string(config.window) + " plus a target day");
            // normalization must only see rows the training split touches
            const std::vector<Index> anchors = anchor_rows(n, config.window, config.stride);
            const std::size_t n_train = static_cast<std::size_t>(std::floor(
                static_cast<double>(anchors.size()) * config.split + 1e-9));
            if (n_train == 0 || n_train == anchors.size())
                throw DataError("temporal split leaves an empty side (" +
                                std::to_string(anchors.size()) + " samples)");
            const std::size_t fit_rows =
                static_cast<std::size_t>(anchors[n_train - 1]) + 2;

            auto [series, params] = normalize(report.series, scheme, fit_rows);
            std::vector<WindowedSample> samples = window(series, config.window, config.stride);
            SplitSamples split = split_temporal(samples, config.split);

            TrainConfig tc;
            tc.epochs = config.epochs;
            tc.batch_size = config.batch;
            tc.lr = config.lr;
            tc.beta1 = config.beta1;
            tc.beta2 = config.beta2;
            tc.eps_adam = config.eps;
            tc.weight_decay = config.weight_decay;
            tc.mu = config.mu;
            tc.lambda = config.lambda;
            tc.seed = stock_seed(config.seed, sym);
            tc.train_prelu_slope = !config.freeze_slope;

            TrainResult result = train(dims, activation, tc, split.train);
            result.model.has_norm = true;
            result.model.norm = params;
            result.model.split_fraction = config.split;
            result.model.window_stride = config.stride;
            result.model.symbol = sym;

            const std::string dir = config.out + "/" + sym;
            fs::create_directories(dir);
            save_model(result.model, dir + "/model.bin");
            write_loss_trace(result.loss_trace, dir + "/loss_trace.txt");

            log << sym << ": trained on " << split.train.size() << " samples";
            if (!result.loss_trace.empty())
                log << ", loss " << fmt(result.loss_trace.front()) << " -> "
                    << fmt(result.loss_trace.back());
            log << "\n";
        });
    }
    log << "trained " << files.size() << " stock(s) into " << config.out << "\n";
}

void cmd_forecast(const RunConfig& config, std::ostream& log) {
    const std::vector<std::string> files = list_stock_files(config.data);
    fs::create_directories(config.out);
    write_resolved_config(config, "forecast", config.out + "/resolved_forecast.conf");

    std::vector<Vector> per_stock_mae;
    for (const std::string& path : files) {
        LoadReport report = load_stock_csv(path);
        const std::string sym = report.series.symbol;
        with_context(sym, [&] {
            EvalData d = prepare_eval(config, report.series);
            Matrix z_train = feature_matrix(d.model, d.split.train);
            Matrix y_train = target_matrix(d.split.train);
            RidgeModel ridge = ridge_fit(z_train, y_train, config.ridge_alpha);

            Matrix z_test = feature_matrix(d.model, d.split.test);
            Matrix y_test = target_matrix(d.split.test);
            Matrix predicted = ridge_predict(ridge, z_test);

            Vector mae;
            if (config.denormalized_mae && d.model.has_norm)
                mae = mean_absolute_error(denorm_matrix(predicted, d.model.norm),
                                          denorm_matrix(y_test, d.model.norm));
            else
                mae = mean_absolute_error(predicted, y_test);

            // plot data: predicted vs actual per date, in price units
            Matrix pred_out = d.model.has_norm ? denorm_matrix(predicted, d.model.norm) : predicted;
            Matrix actual_out = d.model.has_norm ? denorm_matrix(y_test, d.model.norm) : y_test;
            const std::string dir = config.out + "/" + sym;
            fs::create_directories(dir);
            std::FILE* f = std::fopen((dir + "/predictions.csv").c_str(), "w");
            if (!f) throw DataError("cannot write " + dir + "/predictions.csv");
            std::fprintf(f, "date");
            for (int c = 0; c < kNumChannels; ++c)
                std::fprintf(f, ",pred_%s", std::string(kChannelNames[c]).c_str());
            for (int c = 0; c < kNumChannels; ++c)
                std::fprintf(f, ",actual_%s", std::string(kChannelNames[c]).c_str());
            std::fprintf(f, "\n");
            for (std::size_t i = 0; i < d.split.test.size(); ++i) {
                std::fprintf(f, "%s", d.split.test[i].target_date.c_str());
                for (Index j = 0; j < kNumChannels; ++j)
                    std::fprintf(f, ",%.17g", pred_out(static_cast<Index>(i), j));
                for (Index j = 0; j < kNumChannels; ++j)
                    std::fprintf(f, ",%.17g", actual_out(static_cast<Index>(i), j));
                std::fprintf(f, "\n");
            }
            if (std::fclose(f) != 0) throw DataError("write failed for predictions.csv");

            EvalReport rpt;
            rpt.mae = mae;
            const std::vector<std::pair<std::string, std::string>> extras = {
                {"symbol", sym},
                {"test_samples", std::to_string(d.split.test.size())},
                {"mae_scale", config.denormalized_mae ? "denormalized" : "normalized"}};
            write_report_txt(rpt, dir + "/forecast_report.txt", extras);
            write_report_json(rpt, dir + "/forecast_report.json", extras);
            per_stock_mae.push_back(mae);
            log << sym << ": close mae " << fmt(mae[static_cast<int>(Channel::Close)]) << " over "
                << d.split.test.size() << " test samples\n";
        });
    }

    EvalReport summary;
    summary.mae = mean_of(per_stock_mae);
    const std::vector<std::pair<std::string, std::string>> extras = {
        {"stocks", std::to_string(files.size())},
        {"mae_scale", config.denormalized_mae ? "denormalized" : "normalized"}};
    write_report_txt(summary, config.out + "/forecast_summary.txt", extras);
    write_report_json(summary, config.out + "/forecast_summary.json", extras);
    log << "forecast summary: mean close mae " << fmt(summary.mae[static_cast<int>(Channel::Close)])
        << " over " << files.size() << " stock(s)\n";
}

void cmd_trade(const RunConfig& config, std::ostream& log) {
    const std::vector<std::string> files = list_stock_files(config.data);
    fs::create_directories(config.out);
    write_resolved_config(config, "trade", config.out + "/resolved_trade.conf");

    std::vector<EvalReport> reports;
    for (const std::string& path : files) {
        LoadReport report = load_stock_csv(path);
        const std::string sym = report.series.symbol;
        with_context(sym, [&] {
            EvalData d = prepare_eval(config, report.series);
            if (d.model.window_stride != 1)
                throw ConfigError("trading evaluation needs window stride 1, model has " +
                                  std::to_string(d.model.window_stride));

            Matrix z_train = feature_matrix(d.model, d.split.train);
            std::vector<int> labels_train;
            labels_train.reserve(d.split.train.size());
            for (const auto& s : d.split.train)
                labels_train.push_back(static_cast<int>(s.label));

            ForestConfig fc;
            fc.num_trees = config.trees;
            fc.max_depth = config.depth;
            fc.min_leaf = config.min_leaf;
            fc.features_per_split = config.mtry;
            fc.seed = stock_seed(config.seed, sym);
            ForestModel forest = forest_fit(z_train, labels_train, fc);

            Matrix z_test = feature_matrix(d.model, d.split.test);
            std::vector<int> labels_test;
            labels_test.reserve(d.split.test.size());
            for (const auto& s : d.split.test)
                labels_test.push_back(static_cast<int>(s.label));
            Vector probs = forest_predict_proba(forest, z_test);
            ClassificationMetrics metrics =
                classification_metrics(probs, labels_test, config.threshold);

            std::vector<int> decided(d.split.test.size());
            for (std::size_t i = 0; i < decided.size(); ++i)
                decided[i] = probs[static_cast<Index>(i)] >= config.threshold ? 1 : 0;

            // consecutive anchors, so test closes chain into one series
            const int close = static_cast<int>(Channel::Close);
            std::vector<double> closes;
            closes.reserve(d.split.test.size() + 1);
            for (const auto& s : d.split.test) {
                double v = s.anchor_close;
                if (d.model.has_norm) v = d.model.norm.denormalize_value(close, v);
                closes.push_back(v);
            }
            double last = d.split.test.back().target_close;
            if (d.model.has_norm) last = d.model.norm.denormalize_value(close, last);
            closes.push_back(last);

            EvalReport rpt;
            rpt.has_trading = true;
            rpt.precision = metrics.precision;
            rpt.recall = metrics.recall;
            rpt.f1 = metrics.f1;
            rpt.auc = metrics.auc;
            rpt.ar_predicted = annualized_return(closes, decided);
            rpt.ar_actual = annualized_return(closes, labels_test);
            rpt.ar_relative_diff = (rpt.ar_predicted - rpt.ar_actual) /
                                   std::max(1e-12, std::abs(rpt.ar_actual));

            const std::string dir = config.out + "/" + sym;
            fs::create_directories(dir);
            std::FILE* f = std::fopen((dir + "/decisions.txt").c_str(), "w");
            if (!f) throw DataError("cannot write " + dir + "/decisions.txt");
            for (std::size_t i = 0; i < decided.size(); ++i)
                std::fprintf(f, "%s %s\n", d.split.test[i].anchor_date.c_str(),
                             decided[i] == 1 ? "BUY" : "SELL");
            if (std::fclose(f) != 0) throw DataError("write failed for decisions.txt");

            const std::vector<std::pair<std::string, std::string>> extras = {
                {"symbol", sym}, {"test_samples", std::to_string(d.split.test.size())}};
            write_report_txt(rpt, dir + "/trade_report.txt", extras);
            write_report_json(rpt, dir + "/trade_report.json", extras);
            reports.push_back(rpt);
            log << sym << ": f1 " << fmt(rpt.f1)
                << (rpt.auc ? " auc " + fmt(*rpt.auc) : std::string(" auc nan")) << " ar_pred "
                << fmt(rpt.ar_predicted) << " ar_actual " << fmt(rpt.ar_actual) << "\n";
        });
    }

    EvalReport summary;
    summary.has_trading = true;
    int with_auc = 0;
    double auc_sum = 0.0;
    for (const EvalReport& r : reports) {
        summary.precision += r.precision;
        summary.recall += r.recall;
        summary.f1 += r.f1;
        summary.ar_predicted += r.ar_predicted;
        summary.ar_actual += r.ar_actual;
        summary.ar_relative_diff += r.ar_relative_diff;
        if (r.auc) {
            auc_sum += *r.auc;
            ++with_auc;
        }
    }
    const double n = static_cast<double>(reports.size());
    summary.precision /= n;
    summary.recall /= n;
    summary.f1 /= n;
    summary.ar_predicted /= n;
    summary.ar_actual /= n;
    summary.ar_relative_diff /= n;
    if (with_auc > 0) summary.auc = auc_sum / with_auc;
    const std::vector<std::pair<std::string, std::string>> extras = {
        {"stocks", std::to_string(files.size())}};
    write_report_txt(summary, config.out + "/trade_summary.txt", extras);
    write_report_json(summary, config.out + "/trade_summary.json", extras);
    log << "trade summary: mean f1 " << fmt(summary.f1) << " over " << files.size()
        << " stock(s)\n";
}

void cmd_features(const RunConfig& config, std::ostream& log) {
    const std::vector<std::string> files = list_stock_files(config.data);
    fs::create_directories(config.out);
    write_resolved_config(config, "features", config.out + "/resolved_features.conf");

    for (const std::string& path : files) {
        LoadReport report = load_stock_csv(path);
        const std::string sym = report.series.symbol;
        with_context(sym, [&] {
            EvalData d = prepare_eval(config, report.series);
            const std::string dir = config.out + "/" + sym;
            fs::create_directories(dir);
            std::FILE* f = std::fopen((dir + "/features.csv").c_str(), "w");
            if (!f) throw DataError("cannot write " + dir + "/features.csv");
            std::fprintf(f, "date,split");
            for (Index j = 0; j < d.model.dims.fusion_dim; ++j)
                std::fprintf(f, ",f%lld", static_cast<long long>(j));
            std::fprintf(f, "\n");
            auto emit = [&](const std::vector<WindowedSample>& part, const char* tag) {
                for (const WindowedSample& s : part) {
                    Vector z = extract_features(d.model, s);
                    std::fprintf(f, "%s,%s", s.anchor_date.c_str(), tag);
                    for (Index j = 0; j < z.size(); ++j) std::fprintf(f, ",%.17g", z[j]);
                    std::fprintf(f, "\n");
                }
            };
            emit(d.split.train, "train");
            emit(d.split.test, "test");
            if (std::fclose(f) != 0) throw DataError("write failed for features.csv");
            log << sym << ": wrote " << d.split.train.size() + d.split.test.size()
                << " feature rows\n";
        });
    }
}

}  // namespace confuse
