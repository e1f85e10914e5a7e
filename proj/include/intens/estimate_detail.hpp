#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "intens/kernel.hpp"
#include "intens/simulate.hpp"

namespace intens::detail {

/// Flat view of a superposed sample in replicate-major, point-minor
/// order. accumulate() sums f(y) over all points that can contribute
/// within the given radius of x0, always in flat-index order; small
/// unions use a brute-force scan (zero terms are exact no-ops), large
/// unions a grid-bucketed candidate search over the same index order.
class UnionView {
  public:
    static constexpr std::size_t kBruteForceLimit = 10000;

    UnionView(const SuperposedSample& sample, int d) : sample_(&sample), d_(d) {}

    template <typename F>
    double accumulate(std::span<const double> x0, double radius, F&& f) const {
        std::size_t total = sample_->total_points();
        if (total <= kBruteForceLimit) {
            double sum = 0.0, comp = 0.0;
            for (const auto& rep : sample_->replicates)
                for (std::size_t j = 0; j < rep.size(); ++j) {
                    double v = f(rep.point(j));
                    if (v != 0.0) add(sum, comp, v);  // skip so both paths match bit-for-bit
                }
            return sum;
        }
        ensure_index(radius);
        std::vector<std::size_t> candidates;
        gather(x0, radius, candidates);
        std::sort(candidates.begin(), candidates.end());
        double sum = 0.0, comp = 0.0;
        for (std::size_t idx : candidates) {
            const auto& p = flat_[idx];
            double v = f(std::span<const double>(p.data(), d_));
            if (v != 0.0) add(sum, comp, v);
        }
        return sum;
    }

  private:
    static void add(double& sum, double& comp, double x) {
        double y = x - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }

    void ensure_index(double radius) const {
        if (!flat_.empty() && cell_ <= radius) return;
        flat_.clear();
        for (const auto& rep : sample_->replicates)
            for (const auto& p : rep.points) flat_.push_back(p);
        // bounding box of the data
        for (int i = 0; i < d_; ++i) {
            lo_[i] = std::numeric_limits<double>::infinity();
            hi_[i] = -lo_[i];
        }
        for (const auto& p : flat_)
            for (int i = 0; i < d_; ++i) {
                lo_[i] = std::min(lo_[i], p[i]);
                hi_[i] = std::max(hi_[i], p[i]);
            }
        cell_ = radius;
        std::size_t ncells = 1;
        for (int i = 0; i < d_; ++i) {
            dims_[i] = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::floor((hi_[i] - lo_[i]) / cell_)) + 1);
            dims_[i] = std::min<std::size_t>(dims_[i], 4096);
            ncells *= dims_[i];
        }
        buckets_.assign(ncells, {});
        for (std::size_t idx = 0; idx < flat_.size(); ++idx)
            buckets_[cell_of(flat_[idx])].push_back(idx);
    }

    std::size_t cell_of(const std::array<double, kMaxDim>& p) const {
        std::size_t flat = 0;
        for (int i = 0; i < d_; ++i) {
            double span = hi_[i] - lo_[i];
            std::size_t c =
                span > 0.0 ? std::min<std::size_t>(
                                 dims_[i] - 1,
                                 static_cast<std::size_t>((p[i] - lo_[i]) / span *
                                                          static_cast<double>(dims_[i])))
                           : 0;
            flat = flat * dims_[i] + c;
        }
        return flat;
    }

    void gather(std::span<const double> x0, double radius,
                std::vector<std::size_t>& out) const {
        std::array<std::size_t, kMaxDim> clo{}, chi{};
        for (int i = 0; i < d_; ++i) {
            double span = hi_[i] - lo_[i];
            double cl = span > 0.0 ? (x0[i] - radius - lo_[i]) / span *
                                         static_cast<double>(dims_[i])
                                   : 0.0;
            double ch = span > 0.0 ? (x0[i] + radius - lo_[i]) / span *
                                         static_cast<double>(dims_[i])
                                   : 0.0;
            clo[i] = static_cast<std::size_t>(std::clamp(
                std::floor(cl), 0.0, static_cast<double>(dims_[i] - 1)));
            chi[i] = static_cast<std::size_t>(std::clamp(
                std::floor(ch), 0.0, static_cast<double>(dims_[i] - 1)));
        }
        std::array<std::size_t, kMaxDim> c = clo;
        while (true) {
            std::size_t flat = 0;
            for (int i = 0; i < d_; ++i) flat = flat * dims_[i] + c[i];
            const auto& b = buckets_[flat];
            out.insert(out.end(), b.begin(), b.end());
            int i = d_ - 1;
            while (i >= 0) {
                if (c[i] < chi[i]) {
                    ++c[i];
                    break;
                }
                c[i] = clo[i];
                --i;
            }
            if (i < 0) break;
        }
    }

    const SuperposedSample* sample_;
    int d_;
    mutable std::vector<std::array<double, kMaxDim>> flat_;
    mutable std::vector<std::vector<std::size_t>> buckets_;
    mutable std::array<double, kMaxDim> lo_{}, hi_{};
    mutable std::array<std::size_t, kMaxDim> dims_{};
    mutable double cell_ = 0.0;
};

}  // namespace intens::detail
