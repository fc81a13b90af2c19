#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace confuse {

// One flat bag of settings for every subcommand; field names mirror the CLI
// long option names so a resolved-config file reads back through --config.
struct RunConfig {
    std::string data;
    std::string out = "out";
    std::string activation = "relu";
    double slope = -1.0;  // negative selects the activation's default
    std::string norm = "minmax";
    double split = 0.8;
    int window = 20;
    int stride = 1;
    int filters = 4;
    int taps = 5;
    int fusion_dim = 64;
    int epochs = 100;
    int batch = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-5;
    double mu = 1e-4;
    double lambda = 1e-2;
    std::uint64_t seed = 0;
    bool freeze_slope = false;
    double ridge_alpha = 1.0;
    bool denormalized_mae = false;
    int trees = 100;
    int depth = 12;
    int min_leaf = 2;
    int mtry = 0;
    double threshold = 0.5;
};

// Stock CSVs under the data path: the file itself, or every *.csv directly
// inside the directory, sorted by name.
std::vector<std::string> list_stock_files(const std::string& data_path);

// Each command processes every stock in config.data, writes its artifacts
// under config.out/<SYMBOL>/, persists the resolved config, and logs one
// summary line per stock. Errors carry the symbol they occurred on.
void cmd_train(const RunConfig& config, std::ostream& log);
void cmd_forecast(const RunConfig& config, std::ostream& log);
void cmd_trade(const RunConfig& config, std::ostream& log);
void cmd_features(const RunConfig& config, std::ostream& log);

// The resolved key=value file the commands persist; exposed for tests.
void write_resolved_config(const RunConfig& config, const std::string& command,
                           const std::string& path);

}  // namespace confuse
