#include "gesturemap/series.hpp"

#include "gesturemap/error.hpp"

#include <string>

namespace gmap {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::parse: return "parse_error";
        case ErrorCode::schema: return "schema_error";
        case ErrorCode::domain: return "domain_error";
        case ErrorCode::degenerate: return "degenerate_skeleton";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::validation: return "validation_error";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::internal: return "internal_error";
    }
    return "internal_error";
}

Series::Series(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
    if (dim_ == 0 && !data_.empty())
        throw Error(ErrorCode::domain, "series with zero frame dimension");
    if (dim_ != 0 && data_.size() % dim_ != 0)
        throw Error(ErrorCode::domain, "series data size " + std::to_string(data_.size()) +
                                           " is not a multiple of dimension " + std::to_string(dim_));
}

Series Series::from_frames(const std::vector<std::vector<double>>& frames) {
    if (frames.empty()) return {};
    const std::size_t dim = frames.front().size();
    std::vector<double> data;
    data.reserve(dim * frames.size());
    for (const auto& f : frames) {
        if (f.size() != dim) throw Error(ErrorCode::domain, "ragged frames in series");
        data.insert(data.end(), f.begin(), f.end());
    }
    return Series(dim, std::move(data));
}

Series Series::scalar(const std::vector<double>& values) {
    return values.empty() ? Series{} : Series(1, values);
}

std::vector<std::vector<double>> Series::frames() const {
    std::vector<std::vector<double>> out;
    out.reserve(length());
    for (std::size_t i = 0; i < length(); ++i) {
        auto f = frame(i);
        out.emplace_back(f.begin(), f.end());
    }
    return out;
}

}  // namespace gmap
