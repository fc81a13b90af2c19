#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "confuse/linalg.hpp"

namespace confuse {

inline constexpr int kNumChannels = 5;

// Channel order matches the CSV header: date,open,close,high,low,nav.
enum class Channel { Open = 0, Close = 1, High = 2, Low = 3, Nav = 4 };

inline constexpr std::array<std::string_view, kNumChannels> kChannelNames = {
    "open", "close", "high", "low", "nav"};

struct MultiChannelSeries {
    std::string symbol;
    std::vector<std::string> dates;  // ISO-8601, strictly increasing
    std::array<std::vector<double>, kNumChannels> channels;

    std::size_t size() const { return dates.size(); }
    const std::vector<double>& channel(Channel c) const {
        return channels[static_cast<int>(c)];
    }
};

struct LoadReport {
    MultiChannelSeries series;
    std::size_t dropped_rows = 0;
    std::vector<std::string> drop_messages;  // "line N: reason"
};

// Parse a per-stock CSV. Header must name date plus the five channel columns
// (case-insensitive, extra columns ignored); rows that fail to parse or have
// gaps are dropped and reported. Throws DataError on a missing column or
// fewer than two usable rows.
LoadReport load_stock_csv(const std::string& path);

enum class NormScheme { MinMax, ZScore };

NormScheme parse_scheme(std::string_view name);
std::string_view scheme_name(NormScheme scheme);

// Per-channel affine normalization x -> (x - shift) / scale.
// minmax: shift = min, scale = max - min (maps the fit segment to [0, 1]);
// zscore: shift = mean, scale = population std.
struct NormParams {
    NormScheme scheme = NormScheme::MinMax;
    std::array<double, kNumChannels> shift{};
    std::array<double, kNumChannels> scale{};

    double normalize_value(int channel, double v) const {
        return (v - shift[channel]) / scale[channel];
    }
    double denormalize_value(int channel, double v) const {
        return v * scale[channel] + shift[channel];
    }
};

// Fit the scheme on the first fit_rows rows only, then apply it to the whole
// series. Throws DataError when a channel is degenerate on the fit segment.
std::pair<MultiChannelSeries, NormParams> normalize(const MultiChannelSeries& series,
                                                    NormScheme scheme, std::size_t fit_rows);

enum class Label : int { Sell = 0, Buy = 1 };

// One training instance: per-channel windows ending at the anchor day, the
// next day's values as regression targets, and the BUY/SELL movement label.
struct WindowedSample {
    std::vector<Vector> windows;  // one per channel, each of the window length
    Vector target;                // next-day value per channel
    Label label = Label::Sell;    // BUY iff next close > anchor close
    std::string anchor_date;
    std::string target_date;
    double anchor_close = 0.0;  // close at the anchor day, series scale
    double target_close = 0.0;  // close at the target day, series scale
};

// Sliding windows with anchors t = L-1, L-1+stride, ... <= n-2. Each sample's
// windows cover rows [t-L+1, t] and its target is row t+1.
std::vector<WindowedSample> window(const MultiChannelSeries& series, Index window_len,
                                   Index stride = 1);

struct SplitSamples {
    std::vector<WindowedSample> train;
    std::vector<WindowedSample> test;
};

// Anchor-ordered split, never shuffled: the first floor(n * train_fraction)
// samples train, the rest test.
SplitSamples split_temporal(const std::vector<WindowedSample>& samples, double train_fraction);

}  // namespace confuse
