#include "confuse/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "confuse/errors.hpp"

namespace confuse {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n\xEF\xBB\xBF");
    if (b == std::string_view::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) fields.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

LoadReport load_stock_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");

    // Locate the six required columns by name; anything else is ignored.
    std::vector<std::string> header = split_csv_line(line);
    int date_col = -1;
    std::array<int, kNumChannels> chan_col;
    chan_col.fill(-1);
    for (std::size_t j = 0; j < header.size(); ++j) {
        std::string name = to_lower(header[j]);
        if (name == "date" && date_col < 0) date_col = static_cast<int>(j);
        for (int c = 0; c < kNumChannels; ++c)
            if (name == kChannelNames[c] && chan_col[c] < 0) chan_col[c] = static_cast<int>(j);
    }
    if (date_col < 0) throw DataError(path + ": missing column date");
    for (int c = 0; c < kNumChannels; ++c)
        if (chan_col[c] < 0)
            throw DataError(path + ": missing column " + std::string(kChannelNames[c]));

    struct Row {
        std::string date;
        std::array<double, kNumChannels> values;
    };
    std::vector<Row> rows;
    LoadReport report;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        auto drop = [&](const std::string& why) {
            ++report.dropped_rows;
            report.drop_messages.push_back("line " + std::to_string(line_no) + ": " + why);
        };
        std::size_t needed = static_cast<std::size_t>(date_col);
        for (int c = 0; c < kNumChannels; ++c)
            needed = std::max(needed, static_cast<std::size_t>(chan_col[c]));
        if (fields.size() <= needed) {
            drop("too few fields");
            continue;
        }
        Row row;
        row.date = fields[static_cast<std::size_t>(date_col)];
        if (row.date.empty()) {
            drop("empty date");
            continue;
        }
        bool ok = true;
        for (int c = 0; c < kNumChannels && ok; ++c) {
            const std::string& f = fields[static_cast<std::size_t>(chan_col[c])];
            if (!parse_double(f, row.values[static_cast<std::size_t>(c)])) {
                drop("bad " + std::string(kChannelNames[c]) + " value '" + f + "'");
                ok = false;
            }
        }
        if (ok) rows.push_back(std::move(row));
    }

    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.date < b.date; });
    std::vector<Row> unique;
    unique.reserve(rows.size());
    for (auto& r : rows) {
        if (!unique.empty() && unique.back().date == r.date) {
            ++report.dropped_rows;
            report.drop_messages.push_back("duplicate date " + r.date);
            continue;
        }
        unique.push_back(std::move(r));
    }

    if (unique.size() < 2)
        throw DataError(path + ": fewer than two usable rows");

    MultiChannelSeries& series = report.series;
    series.symbol = to_lower(std::filesystem::path(path).stem().string());
    std::transform(series.symbol.begin(), series.symbol.end(), series.symbol.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    series.dates.reserve(unique.size());
    for (int c = 0; c < kNumChannels; ++c) series.channels[c].reserve(unique.size());
    for (const Row& r : unique) {
        series.dates.push_back(r.date);
        for (int c = 0; c < kNumChannels; ++c)
            series.channels[c].push_back(r.values[static_cast<std::size_t>(c)]);
    }
    return report;
}

NormScheme parse_scheme(std::string_view name) {
    if (name == "minmax") return NormScheme::MinMax;
    if (name == "zscore") return NormScheme::ZScore;
    throw ConfigError("unknown normalization scheme '" + std::string(name) + "'");
}

std::string_view scheme_name(NormScheme scheme) {
    return scheme == NormScheme::MinMax ? "minmax" : "zscore";
}

std::pair<MultiChannelSeries, NormParams> normalize(const MultiChannelSeries& series,
                                                    NormScheme scheme, std::size_t fit_rows) {
    const std::size_t n = series.size();
    if (fit_rows < 2 || fit_rows > n)
        throw DataError("normalization fit segment must cover 2.." + std::to_string(n) +
                        " rows, got " + std::to_string(fit_rows));

    NormParams params;
    params.scheme = scheme;
    for (int c = 0; c < kNumChannels; ++c) {
        const std::vector<double>& col = series.channels[c];
        if (scheme == NormScheme::MinMax) {
            auto [mn, mx] = std::minmax_element(col.begin(), col.begin() + fit_rows);
            params.shift[c] = *mn;
            params.scale[c] = *mx - *mn;
        } else {
            double mean = std::accumulate(col.begin(), col.begin() + fit_rows, 0.0) /
                          static_cast<double>(fit_rows);
            double ss = 0.0;
            for (std::size_t i = 0; i < fit_rows; ++i) {
                double d = col[i] - mean;
                ss += d * d;
            }
            params.shift[c] = mean;
            params.scale[c] = std::sqrt(ss / static_cast<double>(fit_rows));
        }
        if (!(params.scale[c] > 1e-12 * std::max(1.0, std::abs(params.shift[c]))))
            throw DataError("channel " + std::string(kChannelNames[c]) +
                            " is degenerate on the normalization segment");
    }

    MultiChannelSeries out;
    out.symbol = series.symbol;
    out.dates = series.dates;
    for (int c = 0; c < kNumChannels; ++c) {
        out.channels[c].resize(n);
        for (std::size_t i = 0; i < n; ++i)
            out.channels[c][i] = params.normalize_value(c, series.channels[c][i]);
    }
    return {std::move(out), params};
}

std::vector<WindowedSample> window(const MultiChannelSeries& series, Index window_len,
                                   Index stride) {
    if (window_len < 1) throw ConfigError("window length must be positive");
    if (stride < 1) throw ConfigError("window stride must be positive");

    const Index n = static_cast<Index>(series.size());
    if (n < window_len + 1)
        throw DataError("series of length " + std::to_string(n) +
                        " is too short for window length " + std::to_string(window_len) +
                        " plus a target day");
    std::vector<WindowedSample> samples;
    const int close = static_cast<int>(Channel::Close);
    for (Index t = window_len - 1; t <= n - 2; t += stride) {
        WindowedSample s;
        s.windows.reserve(kNumChannels);
        for (int c = 0; c < kNumChannels; ++c) {
            Vector w(window_len);
            for (Index i = 0; i < window_len; ++i)
                w[i] = series.channels[c][static_cast<std::size_t>(t - window_len + 1 + i)];
            s.windows.push_back(std::move(w));
        }
        s.target = Vector(kNumChannels);
        for (int c = 0; c < kNumChannels; ++c)
            s.target[c] = series.channels[c][static_cast<std::size_t>(t + 1)];
        s.anchor_close = series.channels[close][static_cast<std::size_t>(t)];
        s.target_close = series.channels[close][static_cast<std::size_t>(t + 1)];
        s.label = s.target_close > s.anchor_close ? Label::Buy : Label::Sell;
        s.anchor_date = series.dates[static_cast<std::size_t>(t)];
        s.target_date = series.dates[static_cast<std::size_t>(t + 1)];
        samples.push_back(std::move(s));
    }
    return samples;
}

SplitSamples split_temporal(const std::vector<WindowedSample>& samples, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train fraction must lie in (0, 1)");
    const std::size_t n = samples.size();
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9));
    if (n_train == 0 || n_train == n)
        throw DataError("temporal split leaves an empty side (" + std::to_string(n) +
                        " samples, fraction " + std::to_string(train_fraction) + ")");
    SplitSamples out;
    out.train.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(samples.begin() + static_cast<std::ptrdiff_t>(n_train), samples.end());
    return out;
}

}  // namespace confuse
