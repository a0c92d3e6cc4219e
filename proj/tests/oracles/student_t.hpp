#pragma once

#include <cmath>
#include <cstddef>

namespace oracle {

inline double student_t_log_norm(double df) {
    return std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) - 0.5 * std::log(df * M_PI);
}

inline double student_t_density(double x, double df, double log_norm) {
    return std::exp(log_norm - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

inline double student_t_density(double x, double df) { return student_t_density(x, df, student_t_log_norm(df)); }

// P(|T| >= |t|) as 1 - 2 * integral of the density over [0, |t|], trapezoid rule.
inline double two_sided_p(double t, double df, std::size_t panels = 1000000) {
    const double a = std::fabs(t);
    if (a == 0.0) return 1.0;
    const double h = a / static_cast<double>(panels);
    const double c = student_t_log_norm(df);
    double sum = 0.5 * (student_t_density(0.0, df, c) + student_t_density(a, df, c));
    for (std::size_t i = 1; i < panels; ++i) sum += student_t_density(h * static_cast<double>(i), df, c);
    return 1.0 - 2.0 * h * sum;
}

} // namespace oracle
