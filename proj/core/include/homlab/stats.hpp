#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace homlab {

/// Compensated (Neumaier) summation.
class NeumaierSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
        else comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Sample mean with standard error sd / sqrt(count).
struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
    double sd = 0.0;
    std::size_t count = 0;
};

/// Two-pass mean / standard error in the given order (deterministic).
inline McEstimate summarize(std::span<const double> samples) {
    McEstimate e;
    e.count = samples.size();
    if (samples.empty()) return e;
    NeumaierSum s;
    for (double x : samples) s.add(x);
    e.mean = s.value() / static_cast<double>(samples.size());
    if (samples.size() < 2) return e;
    NeumaierSum q;
    for (double x : samples) q.add((x - e.mean) * (x - e.mean));
    e.sd = std::sqrt(q.value() / static_cast<double>(samples.size() - 1));
    e.se = e.sd / std::sqrt(static_cast<double>(samples.size()));
    return e;
}

}  // namespace homlab
