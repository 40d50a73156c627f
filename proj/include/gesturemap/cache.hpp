#pragma once

#include "gesturemap/json_io.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

namespace gmap {

/// Memo of expensive results keyed by a digest of (corpus content hash,
/// operation, canonical parameters). With a directory each entry is one
/// file written to a temporary name and renamed into place; without one
/// entries live in memory.
class ResultCache {
public:
    ResultCache() = default;
    explicit ResultCache(std::filesystem::path dir);

    static std::string key(std::string_view corpus_hash, std::string_view operation, const Json& params);

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& value);
    bool persistent() const noexcept { return !dir_.empty(); }
    std::size_t size() const;

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, std::string> memory_;
};

}  // namespace gmap
