#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfdense/codec.hpp"
#include "rfdense/error.hpp"

namespace rfdense {

using Mask = std::span<const std::uint8_t>;

/// Raised when the least-squares system is singular (constant prediction).
class SingularAlignment : public Error {
public:
    explicit SingularAlignment(const std::string& what) : Error("singular_alignment", what) {}
};

/// Least-squares affine fit a = scale * pred + shift over the mask.
struct AlignedDepth {
    double scale = 1.0;
    double shift = 0.0;
    std::vector<double> values;  // aligned prediction for every pixel
};

AlignedDepth align(std::span<const double> pred, std::span<const double> gt, Mask mask);

/// Mean |a - d| / d over masked pixels.
double absrel(std::span<const double> aligned, std::span<const double> gt, Mask mask);
/// Fraction of masked pixels with max(a/d, d/a) < 1.25; non-positive a fails.
double delta1(std::span<const double> aligned, std::span<const double> gt, Mask mask);

struct AngularStats {
    double mean_degrees = 0.0;
    double fraction_below_11_25 = 0.0;
};

/// Per-pixel angle between normal fields (3 values per pixel). Predictions
/// are renormalised; zero-length predictions count as 90 degrees.
AngularStats angular_error(std::span<const double> pred, std::span<const double> gt, Mask mask);

enum class Direction { lower_better, higher_better };

/// Rank of each method per column (1 = best, ties share the mean rank),
/// averaged over columns. `table[m][c]` is method m on column c.
std::vector<double> avg_rank(const std::vector<std::vector<double>>& table, const std::vector<Direction>& directions);

struct SpectrumBin {
    int radius = 0;
    std::size_t count = 0;
    double mean_power = 0.0;
    double log_power = 0.0;  // log10(mean_power + 1e-12)
};

/// Radially averaged |DFT|^2 of a square single-channel map, binned by
/// floor(sqrt(u^2 + v^2)) over centred frequencies.
std::vector<SpectrumBin> radial_power_spectrum(const LatentMap& map);
inline constexpr double kLogPowerFloor = 1e-12;

/// Mean |difference| between horizontally/vertically adjacent pixels that
/// straddle a 2x2 patch border minus the same mean for neighbours inside a
/// patch, on the channel-averaged map. Positive values indicate grid artifacts.
double patch_boundary_discontinuity(const LatentMap& map);

struct SampleMetrics {
    std::string id;
    bool ok = true;
    std::string status = "ok";
    double absrel = 0.0;
    double delta1 = 0.0;
    double mean_angle = 0.0;
    double below_11_25 = 0.0;
};

struct MetricsReport {
    std::string method;
    std::string dataset;
    std::string task;  // "depth" or "normal"
    std::vector<SampleMetrics> samples;
    std::size_t flagged = 0;
    std::optional<SampleMetrics> aggregate;  // mean over ok rows

    /// Recomputes `aggregate` and `flagged` from `samples`.
    void finalize();
    std::string to_csv() const;
    std::string to_json() const;
};

}  // namespace rfdense
