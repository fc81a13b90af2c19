#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "confuse/data.hpp"
#include "confuse/downstream.hpp"
#include "confuse/errors.hpp"
#include "confuse/model.hpp"
#include "confuse/pipeline.hpp"
#include "confuse/selfcheck.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

using namespace confuse;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(static_cast<bool>(in));
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::path("tmp_pipeline_tests") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Periodic series: every channel follows the same period-10 pattern, so a
// window of 20 determines the next value exactly and ridge can fit it.
testsup::SynthStock periodic_stock(const std::string& symbol, int n) {
    testsup::SynthStock s;
    s.symbol = symbol;
    for (int i = 0; i < n; ++i) {
        s.dates.push_back(testsup::synth_date(i));
        const double base = 10.0 + std::sin(2.0 * 3.14159265358979 * (i % 10) / 10.0);
        s.channels[0].push_back(base + 0.1);
        s.channels[1].push_back(base);
        s.channels[2].push_back(base + 0.5);
        s.channels[3].push_back(base - 0.5);
        s.channels[4].push_back(0.5 * base + 3.0);
    }
    return s;
}

RunConfig small_train_config(const fs::path& data, const fs::path& out) {
    RunConfig cfg;
    cfg.data = data.string();
    cfg.out = out.string();
    cfg.window = 20;
    cfg.filters = 2;
    cfg.taps = 3;
    cfg.fusion_dim = 8;
    cfg.epochs = 5;
    cfg.batch = 16;
    cfg.seed = 31;
    return cfg;
}

}  // namespace

TEST_CASE("stock file listing accepts a file or a directory of csvs") {
    fs::path dir = fresh_dir("listing");
    std::ofstream(dir / "b.csv") << "x\n";
    std::ofstream(dir / "a.CSV") << "x\n";
    std::ofstream(dir / "notes.txt") << "x\n";
    std::vector<std::string> files = list_stock_files(dir.string());
    REQUIRE(files.size() == 2);
    CHECK(fs::path(files[0]).filename() == "a.CSV");
    CHECK(fs::path(files[1]).filename() == "b.csv");

    std::vector<std::string> single = list_stock_files((dir / "b.csv").string());
    REQUIRE(single.size() == 1);
    CHECK(fs::path(single[0]).filename() == "b.csv");

    CHECK_THROWS_AS(list_stock_files((dir / "missing").string()), DataError);
    fs::path empty = fresh_dir("listing_empty");
    CHECK_THROWS_AS(list_stock_files(empty.string()), DataError);
}

TEST_CASE("resolved configs round-trip the settings that matter") {
    fs::path dir = fresh_dir("resolved");
    RunConfig cfg;
    cfg.data = "some dir/stocks";
    cfg.out = dir.string();
    cfg.activation = "prelu";
    cfg.slope = 0.3;
    cfg.epochs = 7;
    cfg.seed = 123456789;
    write_resolved_config(cfg, "train", (dir / "resolved_train.conf").string());
    const std::string text = slurp(dir / "resolved_train.conf");
    CHECK(text.rfind("[train]\n", 0) == 0);
    CHECK(text.find("data=\"some dir/stocks\"") != std::string::npos);
    CHECK(text.find("activation=\"prelu\"") != std::string::npos);
    CHECK(text.find("epochs=7") != std::string::npos);
    CHECK(text.find("seed=123456789") != std::string::npos);
    CHECK(text.find("freeze-slope=false") != std::string::npos);
    // forecast configs carry their own keys, not the training ones
    write_resolved_config(cfg, "forecast", (dir / "resolved_forecast.conf").string());
    const std::string ftext = slurp(dir / "resolved_forecast.conf");
    CHECK(ftext.rfind("[forecast]\n", 0) == 0);
    CHECK(ftext.find("ridge-alpha") != std::string::npos);
    CHECK(ftext.find("epochs") == std::string::npos);
}

TEST_CASE("training writes a model, a trace and a summary line per stock") {
    fs::path data = fresh_dir("train_data");
    testsup::write_stock_csv((data / "alpha.csv").string(),
                             testsup::make_ar1_stock("ALPHA", 80, 5));
    fs::path out = fs::path("tmp_pipeline_tests") / "train_out";
    fs::remove_all(out);

    RunConfig cfg = small_train_config(data, out);
    std::ostringstream log;
    cmd_train(cfg, log);

    CHECK(fs::exists(out / "ALPHA" / "model.bin"));
    CHECK(fs::exists(out / "ALPHA" / "loss_trace.txt"));
    CHECK(fs::exists(out / "resolved_train.conf"));
    CHECK(log.str().find("ALPHA") != std::string::npos);

    std::vector<std::string> trace = lines_of(slurp(out / "ALPHA" / "loss_trace.txt"));
    REQUIRE(trace.size() == 5);
    double first = 0.0, last = 0.0;
    int epoch = 0;
    std::sscanf(trace.front().c_str(), "%d %lg", &epoch, &first);
    CHECK(epoch == 1);
    std::sscanf(trace.back().c_str(), "%d %lg", &epoch, &last);
    CHECK(epoch == 5);
    CHECK(last < first);

    ConFuseModel model = load_model((out / "ALPHA" / "model.bin").string());
    CHECK(model.symbol == "ALPHA");
    CHECK(model.has_norm);
    CHECK(model.dims.fusion_dim == 8);
}

TEST_CASE("zero epochs still persists a usable warm-start model") {
    fs::path data = fresh_dir("warm_data");
    testsup::write_stock_csv((data / "warm.csv").string(),
                             testsup::make_ar1_stock("WARM", 60, 9));
    fs::path out = fs::path("tmp_pipeline_tests") / "warm_out";
    fs::remove_all(out);
    RunConfig cfg = small_train_config(data, out);
    cfg.epochs = 0;
    std::ostringstream log;
    cmd_train(cfg, log);
    CHECK(fs::exists(out / "WARM" / "model.bin"));
    CHECK(slurp(out / "WARM" / "loss_trace.txt").empty());
    ConFuseModel model = load_model((out / "WARM" / "model.bin").string());
    CHECK(model.z_train.rows() > 0);
}

TEST_CASE("identical train invocations produce identical bytes") {
    fs::path data = fresh_dir("repro_data");
    testsup::write_stock_csv((data / "rep.csv").string(),
                             testsup::make_ar1_stock("REP", 70, 21));
    fs::path out1 = fs::path("tmp_pipeline_tests") / "repro_out1";
    fs::path out2 = fs::path("tmp_pipeline_tests") / "repro_out2";
    fs::remove_all(out1);
    fs::remove_all(out2);

    RunConfig cfg = small_train_config(data, out1);
    std::ostringstream log1, log2;
    cmd_train(cfg, log1);
    cfg.out = out2.string();
    cmd_train(cfg, log2);

    CHECK(slurp(out1 / "REP" / "model.bin") == slurp(out2 / "REP" / "model.bin"));
    CHECK(slurp(out1 / "REP" / "loss_trace.txt") == slurp(out2 / "REP" / "loss_trace.txt"));
}

TEST_CASE("forecasting a perfectly periodic series is near exact") {
    fs::path data = fresh_dir("periodic_data");
    testsup::write_stock_csv((data / "per.csv").string(), periodic_stock("PER", 120));
    fs::path out = fs::path("tmp_pipeline_tests") / "periodic_out";
    fs::remove_all(out);

    RunConfig cfg = small_train_config(data, out);
    cfg.epochs = 20;
    cfg.fusion_dim = 24;
    cfg.filters = 3;
    std::ostringstream log;
    cmd_train(cfg, log);

    cfg.ridge_alpha = 1e-8;
    cmd_forecast(cfg, log);

    CHECK(fs::exists(out / "PER" / "predictions.csv"));
    CHECK(fs::exists(out / "PER" / "forecast_report.txt"));
    CHECK(fs::exists(out / "PER" / "forecast_report.json"));
    CHECK(fs::exists(out / "forecast_summary.txt"));
    CHECK(fs::exists(out / "forecast_summary.json"));

    std::ifstream js(out / "PER" / "forecast_report.json");
    nlohmann::json j = nlohmann::json::parse(js);
    // the window determines the phase, so next-day close is a linear readout
    CHECK(j["mae_close"].get<double>() <= 1e-3);

    std::vector<std::string> rows = lines_of(slurp(out / "PER" / "predictions.csv"));
    REQUIRE(rows.size() >= 2);
    CHECK(rows[0] ==
          "date,pred_open,pred_close,pred_high,pred_low,pred_nav,"
          "actual_open,actual_close,actual_high,actual_low,actual_nav");
    // every data row has 11 comma-separated fields
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const long commas = std::count(rows[i].begin(), rows[i].end(), ',');
        CHECK(commas == 10);
    }
}

TEST_CASE("the forecast summary is the mean of the per-stock reports") {
    fs::path data = fresh_dir("summary_data");
    testsup::write_stock_csv((data / "s1.csv").string(),
                             testsup::make_ar1_stock("S1", 80, 31));
    testsup::write_stock_csv((data / "s2.csv").string(),
                             testsup::make_ar1_stock("S2", 90, 37));
    fs::path out = fs::path("tmp_pipeline_tests") / "summary_out";
    fs::remove_all(out);

    RunConfig cfg = small_train_config(data, out);
    std::ostringstream log;
    cmd_train(cfg, log);
    cmd_forecast(cfg, log);

    nlohmann::json s1, s2, sum;
    std::ifstream(out / "S1" / "forecast_report.json") >> s1;
    std::ifstream(out / "S2" / "forecast_report.json") >> s2;
    std::ifstream(out / "forecast_summary.json") >> sum;
    for (const char* key : {"mae_open", "mae_close", "mae_high", "mae_low", "mae_nav"}) {
        const double want = (s1[key].get<double>() + s2[key].get<double>()) / 2.0;
        CHECK(testsup::rel_err(sum[key].get<double>(), want) <= 1e-12);
    }
    CHECK(sum["stocks"].get<std::string>() == "2");
}

TEST_CASE("trading emits decisions and internally consistent metrics") {
    fs::path data = fresh_dir("trade_data");
    testsup::write_stock_csv((data / "tr.csv").string(),
                             testsup::make_ar1_stock("TR", 140, 41));
    fs::path out = fs::path("tmp_pipeline_tests") / "trade_out";
    fs::remove_all(out);

    RunConfig cfg = small_train_config(data, out);
    std::ostringstream log;
    cmd_train(cfg, log);
    cfg.trees = 30;
    cfg.seed = 77;
    cmd_trade(cfg, log);

    CHECK(fs::exists(out / "TR" / "decisions.txt"));
    CHECK(fs::exists(out / "TR" / "trade_report.txt"));
    CHECK(fs::exists(out / "TR" / "trade_report.json"));
    CHECK(fs::exists(out / "trade_summary.txt"));
    CHECK(fs::exists(out / "trade_summary.json"));

    nlohmann::json j;
    std::ifstream(out / "TR" / "trade_report.json") >> j;
    const double p = j["precision"].get<double>();
    const double r = j["recall"].get<double>();
    const double f1 = j["f1"].get<double>();
    if (p + r > 0.0)
        CHECK(testsup::rel_err(f1, 2.0 * p * r / (p + r)) <= 1e-9);
    else
        CHECK(f1 == 0.0);

    // decision lines pair an anchor date with BUY or SELL
    std::vector<std::string> dec = lines_of(slurp(out / "TR" / "decisions.txt"));
    CHECK(!dec.empty());
    for (const std::string& line : dec) {
        const bool buy = line.find(" BUY") != std::string::npos;
        const bool sell = line.find(" SELL") != std::string::npos;
        CHECK((buy || sell));
        CHECK(line.substr(0, 2) == "20");  // ISO date up front
    }

    // the decision count ties the reported annualized returns to the data
    CHECK(j["ar_actual"].is_number());
    CHECK(j["ar_predicted"].is_number());
}

TEST_CASE("a strided model refuses to trade") {
    fs::path data = fresh_dir("stride_data");
    testsup::write_stock_csv((data / "st.csv").string(),
                             testsup::make_ar1_stock("ST", 120, 43));
    fs::path out = fs::path("tmp_pipeline_tests") / "stride_out";
    fs::remove_all(out);

    RunConfig cfg = small_train_config(data, out);
    cfg.stride = 2;
    std::ostringstream log;
    cmd_train(cfg, log);
    CHECK_THROWS_AS(cmd_trade(cfg, log), ConfigError);
}

TEST_CASE("a monotone ramp has single-class labels and cannot trade") {
    fs::path data = fresh_dir("ramp_data");
    testsup::SynthStock ramp;
    ramp.symbol = "RAMP";
    for (int i = 0; i < 120; ++i) {
        ramp.dates.push_back(testsup::synth_date(i));
        const double base = 10.0 + 0.5 * i;
        for (auto& ch : ramp.channels) ch.push_back(base);
        ramp.channels[4].back() = 5.0 + 0.25 * i;
    }
    testsup::write_stock_csv((data / "ramp.csv").string(), ramp);
    fs::path out = fs::path("tmp_pipeline_tests") / "ramp_out";
    fs::remove_all(out);

    RunConfig cfg = small_train_config(data, out);
    std::ostringstream log;
    cmd_train(cfg, log);
    CHECK_THROWS_AS(cmd_trade(cfg, log), DataError);
}

TEST_CASE("feature dumps carry one row per sample tagged by split") {
    fs::path data = fresh_dir("feat_data");
    testsup::write_stock_csv((data / "ft.csv").string(),
                             testsup::make_ar1_stock("FT", 60, 47));
    fs::path out = fs::path("tmp_pipeline_tests") / "feat_out";
    fs::remove_all(out);

    RunConfig cfg = small_train_config(data, out);
    std::ostringstream log;
    cmd_train(cfg, log);
    cmd_features(cfg, log);

    std::vector<std::string> rows = lines_of(slurp(out / "FT" / "features.csv"));
    REQUIRE(rows.size() >= 3);
    CHECK(rows[0].substr(0, 11) == "date,split,");
    const long commas = std::count(rows[0].begin(), rows[0].end(), ',');
    CHECK(commas == 1 + 8);  // date, split, then one column per fused feature

    int train_rows = 0, test_rows = 0;
    bool seen_test = false;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].find(",train,") != std::string::npos) {
            ++train_rows;
            CHECK(!seen_test);  // train block comes first, in order
        } else if (rows[i].find(",test,") != std::string::npos) {
            ++test_rows;
            seen_test = true;
        }
    }
    // 60 rows, window 20: anchors 19..58 give 40 samples, split 0.8 -> 32/8
    CHECK(train_rows == 32);
    CHECK(test_rows == 8);
}

TEST_CASE("forecast refuses to run without a trained model") {
    fs::path data = fresh_dir("nomodel_data");
    testsup::write_stock_csv((data / "nm.csv").string(),
                             testsup::make_ar1_stock("NM", 60, 53));
    fs::path out = fs::path("tmp_pipeline_tests") / "nomodel_out";
    fs::remove_all(out);
    RunConfig cfg = small_train_config(data, out);
    std::ostringstream log;
    CHECK_THROWS_AS(cmd_forecast(cfg, log), DataError);
}

TEST_CASE("too-short series fail with the symbol in the message") {
    fs::path data = fresh_dir("short_data");
    testsup::write_stock_csv((data / "tiny.csv").string(),
                             testsup::make_ar1_stock("TINY", 12, 59));
    fs::path out = fs::path("tmp_pipeline_tests") / "short_out";
    fs::remove_all(out);
    RunConfig cfg = small_train_config(data, out);
    std::ostringstream log;
    CHECK_THROWS_WITH_AS(cmd_train(cfg, log), doctest::Contains("TINY"), DataError);
}

TEST_CASE("the self check passes clean and fails when a gradient is corrupted") {
    SelfCheckOptions opt;
    opt.seed = 0;
    std::ostringstream out;
    CHECK(run_selfcheck(opt, out));
    const std::string text = out.str();
    CHECK(text.find("gradient-fd") != std::string::npos);
    CHECK(text.find("7/7") != std::string::npos);

    SelfCheckOptions bad = opt;
    bad.gradient_corruption = 1e-3;
    std::ostringstream out2;
    CHECK(!run_selfcheck(bad, out2));
    CHECK(out2.str().find("FAIL") != std::string::npos);
}
