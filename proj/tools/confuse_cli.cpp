// Command line front end. Subcommands mirror the pipeline stages: train fits
// one model per stock csv, forecast/trade evaluate a trained workspace,
// features dumps the learned representation, selfcheck runs the built-in
// numerical test battery.
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "confuse/errors.hpp"
#include "confuse/pipeline.hpp"
#include "confuse/selfcheck.hpp"

int main(int argc, char** argv) {
    CLI::App app{"convolutional transform learning for multi-channel stock series"};
    app.require_subcommand(1);
    // one config option on the root: config files carry a [subcommand] section
    // and may be passed either before or after the subcommand name
    app.set_config("--config", "",
                   "read options from a key=value file with a [subcommand] section");

    confuse::RunConfig cfg;
    confuse::SelfCheckOptions sc;

    auto add_common = [&](CLI::App* sub) {
        sub->fallthrough();  // lets --config after the subcommand reach the root app
        sub->add_option("--data", cfg.data, "stock csv file or directory of csv files")
            ->required();
        sub->add_option("--out", cfg.out, "workspace directory for models and reports")
            ->envname("CONFUSE_OUT_DIR")
            ->capture_default_str();
    };

    CLI::App* tr = app.add_subcommand("train", "fit one model per stock");
    add_common(tr);
    tr->add_option("--activation", cfg.activation,
                   "selu, relu, prelu, leakyrelu, tanh or sigmoid")
        ->capture_default_str();
    tr->add_option("--slope", cfg.slope,
                   "slope for prelu/leakyrelu in (0,1); negative keeps the default")
        ->capture_default_str();
    tr->add_option("--norm", cfg.norm, "per-channel scaling: minmax or zscore")
        ->capture_default_str();
    tr->add_option("--split", cfg.split, "fraction of windows used for training")
        ->capture_default_str();
    tr->add_option("--window", cfg.window, "days per input window")->capture_default_str();
    tr->add_option("--stride", cfg.stride, "days between window anchors")->capture_default_str();
    tr->add_option("--filters", cfg.filters, "filters per channel")->capture_default_str();
    tr->add_option("--taps", cfg.taps, "taps per filter")->capture_default_str();
    tr->add_option("--fusion-dim", cfg.fusion_dim, "fused representation size")
        ->capture_default_str();
    tr->add_option("--epochs", cfg.epochs, "optimizer epochs")->capture_default_str();
    tr->add_option("--batch", cfg.batch, "minibatch size")->capture_default_str();
    tr->add_option("--lr", cfg.lr, "learning rate")->capture_default_str();
    tr->add_option("--beta1", cfg.beta1, "first moment decay")->capture_default_str();
    tr->add_option("--beta2", cfg.beta2, "second moment decay")->capture_default_str();
    tr->add_option("--eps", cfg.eps, "adam denominator floor")->capture_default_str();
    tr->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay on transforms")
        ->capture_default_str();
    tr->add_option("--mu", cfg.mu, "frobenius penalty weight")->capture_default_str();
    tr->add_option("--lambda", cfg.lambda, "log-determinant penalty weight")
        ->capture_default_str();
    tr->add_option("--seed", cfg.seed, "master seed; per-stock seeds derive from it")
        ->capture_default_str();
    tr->add_flag("--freeze-slope", cfg.freeze_slope, "keep the prelu slope at its initial value");

    CLI::App* fc = app.add_subcommand("forecast", "ridge regression on learned features");
    add_common(fc);
    fc->add_option("--ridge-alpha", cfg.ridge_alpha, "ridge penalty, must be positive")
        ->capture_default_str();
    fc->add_flag("--denormalized-mae", cfg.denormalized_mae,
                 "report errors in raw price units instead of normalized ones");

    CLI::App* td = app.add_subcommand("trade", "random forest buy/sell evaluation");
    add_common(td);
    td->add_option("--seed", cfg.seed, "master seed for the forests")->capture_default_str();
    td->add_option("--trees", cfg.trees, "trees per forest")->capture_default_str();
    td->add_option("--depth", cfg.depth, "maximum tree depth")->capture_default_str();
    td->add_option("--min-leaf", cfg.min_leaf, "minimum samples per leaf")->capture_default_str();
    td->add_option("--mtry", cfg.mtry, "features tried per split; 0 means sqrt of total")
        ->capture_default_str();
    td->add_option("--threshold", cfg.threshold, "buy probability cutoff")->capture_default_str();

    CLI::App* ft = app.add_subcommand("features", "dump fused features per window");
    add_common(ft);

    CLI::App* sf = app.add_subcommand("selfcheck", "run the built-in numerical checks");
    sf->fallthrough();
    sf->add_option("--seed", sc.seed, "seed for the randomized checks")->capture_default_str();
    sf->add_option("--corrupt-gradient", sc.gradient_corruption,
                   "testing hook: perturb one analytic gradient entry by this amount")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (tr->parsed()) {
            confuse::cmd_train(cfg, std::cout);
        } else if (fc->parsed()) {
            confuse::cmd_forecast(cfg, std::cout);
        } else if (td->parsed()) {
            confuse::cmd_trade(cfg, std::cout);
        } else if (ft->parsed()) {
            confuse::cmd_features(cfg, std::cout);
        } else if (sf->parsed()) {
            if (!confuse::run_selfcheck(sc, std::cout)) return 4;
        }
    } catch (const confuse::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const confuse::DimensionError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const confuse::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const confuse::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
