#include "trafhom/util.hpp"

#include <cmath>

namespace trafhom {

MeanCi mean_ci(const std::vector<double>& xs) {
    MeanCi out;
    out.n = static_cast<int>(xs.size());
    if (xs.empty()) return out;
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    out.ci_halfwidth = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
    return out;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LineFit fit;
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw std::invalid_argument("fit_line: need >= 2 points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0) throw std::invalid_argument("fit_line: degenerate abscissae");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (n > 2) {
        double rss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            rss += r * r;
        }
        fit.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

}  // namespace trafhom
