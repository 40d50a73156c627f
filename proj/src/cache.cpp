#include "gesturemap/cache.hpp"

#include "gesturemap/digest.hpp"
#include "gesturemap/error.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

namespace gmap {

namespace fs = std::filesystem;

ResultCache::ResultCache(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::internal, "cache: cannot create " + dir_.string() + ": " + ec.message());
}

std::string ResultCache::key(std::string_view corpus_hash, std::string_view operation, const Json& params) {
    std::string material(corpus_hash);
    material += '|';
    material += operation;
    material += '|';
    material += params.dump();  // object keys are sorted, so this is canonical
    return sha256_hex(material);
}

std::optional<std::string> ResultCache::get(const std::string& key) const {
    std::lock_guard lock(mutex_);
    if (!persistent()) {
        auto it = memory_.find(key);
        if (it == memory_.end()) return std::nullopt;
        return it->second;
    }
    std::ifstream in(dir_ / key, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void ResultCache::put(const std::string& key, const std::string& value) {
    std::lock_guard lock(mutex_);
    if (!persistent()) {
        memory_[key] = value;
        return;
    }
    static std::atomic<unsigned long> counter{0};
    std::ostringstream tmp_name;
    tmp_name << '.' << key << '.' << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << counter++;
    const fs::path tmp = dir_ / tmp_name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << value;
        if (!out.flush()) throw Error(ErrorCode::internal, "cache: cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, dir_ / key, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::internal, "cache: cannot publish entry " + key);
    }
}

std::size_t ResultCache::size() const {
    std::lock_guard lock(mutex_);
    if (!persistent()) return memory_.size();
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir_))
        if (e.is_regular_file() && e.path().filename().string().front() != '.') ++n;
    return n;
}

}  // namespace gmap
