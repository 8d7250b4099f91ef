#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "covec/common.hpp"
#include "covec/image.hpp"

namespace covec {

// (bpp, metric) samples of one codec across its levels, sorted by rate.
struct RateMetricCurve {
    std::string label;
    std::vector<std::pair<double, double>> points;  // ascending bpp, no duplicates

    void validate() const {
        if (points.size() < 3)
            throw ConfigError("rate-metric curve '" + label + "' needs at least 3 points");
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!(points[i].first > 0)) throw ConfigError("rate-metric curve: bpp must be positive");
            if (!is_finite_value(points[i].first) || !is_finite_value(points[i].second))
                throw NumericError("rate-metric curve: non-finite point");
            if (i && !(points[i].first > points[i - 1].first))
                throw ConfigError("rate-metric curve: bpp values must be strictly increasing");
        }
    }
};

// Sorts records by bpp and averages exact duplicate rates; each merge adds a
// note to `warnings` when given.
inline RateMetricCurve build_curve(std::vector<std::pair<double, double>> records, std::string label,
                                   std::vector<std::string>* warnings = nullptr) {
    if (records.size() < 3)
        throw ConfigError("build_curve: need at least 3 records, got " + std::to_string(records.size()));
    std::sort(records.begin(), records.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    RateMetricCurve curve;
    curve.label = std::move(label);
    std::size_t i = 0;
    while (i < records.size()) {
        std::size_t j = i;
        double sum = 0;
        while (j < records.size() && records[j].first == records[i].first) sum += records[j++].second;
        if (j - i > 1 && warnings) {
            std::ostringstream os;
            os << "duplicate bpp " << records[i].first << " in curve '" << curve.label << "': averaged "
               << (j - i) << " metric values";
            warnings->push_back(os.str());
        }
        curve.points.emplace_back(records[i].first, sum / static_cast<double>(j - i));
        i = j;
    }
    curve.validate();
    return curve;
}

// Three-way decomposition of the score drop between clean and compressed
// inputs. The total is formed as the sum of its two parts, so the identity
// holds to the last bit; a negative generalization gap is reported as-is.
struct GapReport {
    double uncompressed = 0;  // score on clean inputs, original weights
    double compressed = 0;    // score on compressed inputs, original weights
    double finetuned = 0;     // score on compressed inputs, adapted weights
    double performance_gap = 0;
    double information_gap = 0;
    double generalization_gap = 0;
};

inline GapReport gap_decompose(double uncompressed, double compressed, double finetuned) {
    for (double v : {uncompressed, compressed, finetuned})
        if (!is_finite_value(v)) throw NumericError("gap_decompose: non-finite input");
    GapReport r;
    r.uncompressed = uncompressed;
    r.compressed = compressed;
    r.finetuned = finetuned;
    r.information_gap = uncompressed - finetuned;
    r.generalization_gap = finetuned - compressed;
    r.performance_gap = r.information_gap + r.generalization_gap;
    return r;
}

// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
class PchipInterpolant {
public:
    PchipInterpolant(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        if (n < 3 || y_.size() != n) throw ConfigError("pchip: need at least 3 matched samples");
        for (std::size_t i = 1; i < n; ++i)
            if (!(x_[i] > x_[i - 1])) throw ConfigError("pchip: abscissae must be strictly increasing");
        std::vector<double> h(n - 1), delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h[i] = x_[i + 1] - x_[i];
            delta[i] = (y_[i + 1] - y_[i]) / h[i];
        }
        m_.assign(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (delta[i - 1] * delta[i] <= 0) {
                m_[i] = 0.0;
            } else {
                const double w1 = 2 * h[i] + h[i - 1];
                const double w2 = h[i] + 2 * h[i - 1];
                m_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        m_[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
        m_[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }

    double x_min() const { return x_.front(); }
    double x_max() const { return x_.back(); }

    double operator()(double t) const {
        if (t < x_.front() - 1e-12 || t > x_.back() + 1e-12)
            throw ConfigError("pchip: evaluation outside the data range");
        t = std::clamp(t, x_.front(), x_.back());
        std::size_t k = static_cast<std::size_t>(
            std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
        k = std::clamp<std::size_t>(k, 1, x_.size() - 1) - 1;
        const double hseg = x_[k + 1] - x_[k];
        const double u = (t - x_[k]) / hseg;
        const double u2 = u * u, u3 = u2 * u;
        const double h00 = 2 * u3 - 3 * u2 + 1;
        const double h10 = u3 - 2 * u2 + u;
        const double h01 = -2 * u3 + 3 * u2;
        const double h11 = u3 - u2;
        return h00 * y_[k] + h10 * hseg * m_[k] + h01 * y_[k + 1] + h11 * hseg * m_[k + 1];
    }

private:
    // One-sided three-point slope with the usual monotonicity clamps.
    static double edge_slope(double h0, double h1, double d0, double d1) {
        double m = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (m * d0 <= 0) m = 0.0;
        else if (d0 * d1 < 0 && std::abs(m) > 3 * std::abs(d0)) m = 3 * d0;
        return m;
    }

    std::vector<double> x_, y_, m_;
};

namespace detail {

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <typename F>
double integrate(const F& f, double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace detail

// Average vertical difference (test - anchor) between the two interpolated
// curves over their overlapping log10-rate interval. Positive means the test
// curve outperforms the anchor at equal rate.
inline double bd_metric(const RateMetricCurve& anchor, const RateMetricCurve& test) {
    anchor.validate();
    test.validate();
    auto to_log = [](const RateMetricCurve& c) {
        std::vector<double> x, y;
        for (const auto& [bpp, metric] : c.points) {
            x.push_back(std::log10(bpp));
            y.push_back(metric);
        }
        return PchipInterpolant(std::move(x), std::move(y));
    };
    const PchipInterpolant fa = to_log(anchor);
    const PchipInterpolant ft = to_log(test);
    const double lo = std::max(fa.x_min(), ft.x_min());
    const double hi = std::min(fa.x_max(), ft.x_max());
    if (!(hi > lo))
        throw ConfigError("bd_metric: curves '" + anchor.label + "' and '" + test.label +
                          "' have no overlapping rate range");
    const double integral =
        detail::integrate([&](double x) { return ft(x) - fa(x); }, lo, hi, 1e-9);
    return integral / (hi - lo);
}

// 10*log10(255^2 / MSE) over all samples; identical images map to the
// infinity marker, never NaN.
inline double psnr(const RawImage& a, const RawImage& b) {
    if (!a.same_dims(b)) throw ShapeError("psnr: image dimensions differ");
    double sse = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        sse += d * d;
    }
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sse / static_cast<double>(a.pixels.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline double pearson_corr(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("pearson_corr: series lengths differ");
    const std::size_t n = x.size();
    if (n < 3) throw ConfigError("pearson_corr: need at least 3 samples");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw ConfigError("pearson_corr: undefined correlation, a series has zero variance");
    return sxy / std::sqrt(sxx * syy);
}

// ---- curve CSV ("bpp,metric" with header) ----------------------------------

inline void save_curve_csv(const RateMetricCurve& curve, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("curve csv: cannot open for writing: " + path);
    f << "bpp,metric\n";
    f.precision(10);
    for (const auto& [bpp, metric] : curve.points) f << bpp << ',' << metric << '\n';
    if (!f) throw IoError("curve csv: write failed: " + path);
}

inline RateMetricCurve load_curve_csv(const std::string& path, const std::string& label) {
    std::ifstream f(path);
    if (!f) throw IoError("curve csv: cannot open: " + path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("bpp,metric", 0) != 0)
        throw IoError("curve csv: missing 'bpp,metric' header in " + path);
    std::vector<std::pair<double, double>> records;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError("curve csv: malformed row in " + path);
        records.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    }
    return build_curve(std::move(records), label);
}

}  // namespace covec
