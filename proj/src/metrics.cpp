#include "rfdense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <fftw3.h>
#include <nlohmann/json.hpp>

namespace rfdense {

namespace {

std::size_t check_inputs(std::span<const double> a, std::span<const double> b, Mask mask, std::size_t stride,
                         const char* what) {
    if (a.size() != b.size() || a.size() != mask.size() * stride) {
        throw ShapeError(std::string(what) + ": prediction, ground truth and mask sizes disagree");
    }
    const auto m = static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t v) { return v != 0; }));
    if (m == 0) throw DataError(std::string(what) + ": empty mask");
    return m;
}

}  // namespace

AlignedDepth align(std::span<const double> pred, std::span<const double> gt, Mask mask) {
    const std::size_t m = check_inputs(pred, gt, mask, 1, "align");
    if (m < 2) throw SingularAlignment("alignment needs at least two masked pixels");
    double mp = 0.0, md = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        mp += pred[i];
        md += gt[i];
    }
    mp /= static_cast<double>(m);
    md /= static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0, spp = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!mask[i]) continue;
        const double dp = pred[i] - mp;
        sxx += dp * dp;
        sxy += dp * (gt[i] - md);
        spp += pred[i] * pred[i];
    }
    if (!(sxx > 1e-20 * std::max(spp, 1e-300))) {
        throw SingularAlignment("constant prediction: least-squares alignment is singular");
    }
    AlignedDepth out;
    out.scale = sxy / sxx;
    out.shift = md - out.scale * mp;
    out.values.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) out.values[i] = out.scale * pred[i] + out.shift;
    return out;
}

double absrel(std::span<const double> aligned, std::span<const double> gt, Mask mask) {
    const std::size_t m = check_inputs(aligned, gt, mask, 1, "absrel");
    double sum = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (mask[i]) sum += std::abs(aligned[i] - gt[i]) / gt[i];
    return sum / static_cast<double>(m);
}

double delta1(std::span<const double> aligned, std::span<const double> gt, Mask mask) {
    const std::size_t m = check_inputs(aligned, gt, mask, 1, "delta1");
    std::size_t pass = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (!mask[i] || !(aligned[i] > 0.0)) continue;
        if (std::max(aligned[i] / gt[i], gt[i] / aligned[i]) < 1.25) ++pass;
    }
    return static_cast<double>(pass) / static_cast<double>(m);
}

AngularStats angular_error(std::span<const double> pred, std::span<const double> gt, Mask mask) {
    const std::size_t m = check_inputs(pred, gt, mask, 3, "angular_error");
    double sum = 0.0;
    std::size_t below = 0;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        const double* a = pred.data() + 3 * p;
        const double* b = gt.data() + 3 * p;
        const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
        const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
        double degrees = 90.0;
        if (na > 0.0 && nb > 0.0) {
            const double cosine = std::clamp((a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb), -1.0, 1.0);
            degrees = std::acos(cosine) * 180.0 / std::numbers::pi;
        }
        sum += degrees;
        if (degrees < 11.25) ++below;
    }
    return {sum / static_cast<double>(m), static_cast<double>(below) / static_cast<double>(m)};
}

std::vector<double> avg_rank(const std::vector<std::vector<double>>& table, const std::vector<Direction>& directions) {
    if (table.empty()) throw DataError("avg_rank: empty table");
    const std::size_t columns = directions.size();
    for (const auto& row : table) {
        if (row.size() != columns) throw DataError("avg_rank: incomplete table row");
        for (double v : row)
            if (!std::isfinite(v)) throw DataError("avg_rank: missing or non-finite entry");
    }
    const std::size_t n = table.size();
    std::vector<double> total(n, 0.0);
    std::vector<std::size_t> order(n);
    for (std::size_t c = 0; c < columns; ++c) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        const bool lower = directions[c] == Direction::lower_better;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return lower ? table[a][c] < table[b][c] : table[a][c] > table[b][c];
        });
        for (std::size_t start = 0; start < n;) {
            std::size_t end = start + 1;
            while (end < n && table[order[end]][c] == table[order[start]][c]) ++end;
            const double shared = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
            for (std::size_t k = start; k < end; ++k) total[order[k]] += shared;
            start = end;
        }
    }
    for (double& t : total) t /= static_cast<double>(columns);
    return total;
}

std::vector<SpectrumBin> radial_power_spectrum(const LatentMap& map) {
    if (map.channels != 1) throw ShapeError("radial_power_spectrum expects a single-channel map");
    if (map.height != map.width) throw ShapeError("radial_power_spectrum expects a square map");
    const int n = map.height;
    // FFTW handles non-power-of-two sizes with its own general algorithms.
    auto* buffer = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * static_cast<std::size_t>(n) * n));
    fftw_plan plan = fftw_plan_dft_2d(n, n, buffer, buffer, FFTW_FORWARD, FFTW_ESTIMATE);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * n; ++i) {
        buffer[i][0] = map.values[i];
        buffer[i][1] = 0.0;
    }
    fftw_execute(plan);

    const int bins = static_cast<int>(std::floor(std::sqrt(2.0) * (n / 2))) + 1;
    std::vector<SpectrumBin> out(static_cast<std::size_t>(bins));
    std::vector<double> sums(static_cast<std::size_t>(bins), 0.0);
    for (int ky = 0; ky < n; ++ky) {
        const int v = ky < (n + 1) / 2 ? ky : ky - n;
        for (int kx = 0; kx < n; ++kx) {
            const int u = kx < (n + 1) / 2 ? kx : kx - n;
            const auto r = static_cast<int>(std::floor(std::sqrt(static_cast<double>(u * u + v * v))));
            const fftw_complex& f = buffer[static_cast<std::size_t>(ky) * n + kx];
            sums[static_cast<std::size_t>(r)] += f[0] * f[0] + f[1] * f[1];
            out[static_cast<std::size_t>(r)].count += 1;
        }
    }
    fftw_destroy_plan(plan);
    fftw_free(buffer);
    for (int r = 0; r < bins; ++r) {
        SpectrumBin& b = out[static_cast<std::size_t>(r)];
        b.radius = r;
        b.mean_power = b.count ? sums[static_cast<std::size_t>(r)] / static_cast<double>(b.count) : 0.0;
        b.log_power = std::log10(b.mean_power + kLogPowerFloor);
    }
    return out;
}

double patch_boundary_discontinuity(const LatentMap& map) {
    const LatentMap m = map.channels == 1 ? map : channel_mean(map);
    double across = 0.0, within = 0.0;
    std::size_t n_across = 0, n_within = 0;
    auto visit = [&](double a, double b, bool crosses) {
        if (crosses) {
            across += std::abs(a - b);
            ++n_across;
        } else {
            within += std::abs(a - b);
            ++n_within;
        }
    };
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (x + 1 < m.width) visit(m.at(y, x, 0), m.at(y, x + 1, 0), x % 2 == 1);
            if (y + 1 < m.height) visit(m.at(y, x, 0), m.at(y + 1, x, 0), y % 2 == 1);
        }
    }
    if (n_across == 0 || n_within == 0) throw ShapeError("patch_boundary_discontinuity needs at least a 3x3 map");
    return across / static_cast<double>(n_across) - within / static_cast<double>(n_within);
}

void MetricsReport::finalize() {
    flagged = 0;
    SampleMetrics mean;
    mean.id = "mean";
    std::size_t ok = 0;
    for (const auto& s : samples) {
        if (!s.ok) {
            ++flagged;
            continue;
        }
        ++ok;
        mean.absrel += s.absrel;
        mean.delta1 += s.delta1;
        mean.mean_angle += s.mean_angle;
        mean.below_11_25 += s.below_11_25;
    }
    if (ok == 0) {
        aggregate.reset();
        return;
    }
    const double n = static_cast<double>(ok);
    mean.absrel /= n;
    mean.delta1 /= n;
    mean.mean_angle /= n;
    mean.below_11_25 /= n;
    aggregate = mean;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    const bool depth = task == "depth";
    os << (depth ? "id,status,absrel,delta1\n" : "id,status,mean_angle_deg,below_11_25\n");
    auto row = [&](const SampleMetrics& s) {
        os << s.id << ',' << s.status << ',';
        if (s.ok) {
            os << (depth ? fmt(s.absrel) : fmt(s.mean_angle)) << ',' << (depth ? fmt(s.delta1) : fmt(s.below_11_25));
        } else {
            os << ',';
        }
        os << '\n';
    };
    for (const auto& s : samples) row(s);
    if (aggregate) row(*aggregate);
    return os.str();
}

std::string MetricsReport::to_json() const {
    using nlohmann::json;
    const bool depth = task == "depth";
    auto obj = [&](const SampleMetrics& s) {
        json j{{"id", s.id}, {"status", s.status}};
        if (s.ok) {
            if (depth) {
                j["absrel"] = s.absrel;
                j["delta1"] = s.delta1;
            } else {
                j["mean_angle_deg"] = s.mean_angle;
                j["below_11_25"] = s.below_11_25;
            }
        }
        return j;
    };
    json j{{"method", method}, {"dataset", dataset}, {"task", task}, {"flagged", flagged}};
    j["samples"] = json::array();
    for (const auto& s : samples) j["samples"].push_back(obj(s));
    j["aggregate"] = aggregate ? obj(*aggregate) : json(nullptr);
    return j.dump(2) + "\n";
}

}  // namespace rfdense
