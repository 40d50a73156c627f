#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gmap {

/// A sequence of fixed-dimension frames stored row-major. Algorithms over
/// gestures (DTW, DBA, k-means) work on this type so they are usable for
/// 1-D test signals and 60-D flattened poses alike.
class Series {
public:
    Series() = default;
    Series(std::size_t dim, std::vector<double> data);
    /// One frame per inner vector; all inner vectors must share a length.
    static Series from_frames(const std::vector<std::vector<double>>& frames);
    /// Convenience for 1-D signals.
    static Series scalar(const std::vector<double>& values);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t length() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const double> frame(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }
    std::span<double> frame(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<std::vector<double>> frames() const;

    bool operator==(const Series&) const = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

}  // namespace gmap
