#pragma once

// Shared plumbing: error types, dense grids, deterministic RNG helpers,
// a small worker pool, and little-endian byte I/O.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mots {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedRle : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct EmptyMask : Error { using Error::Error; };
struct ClassOutOfRange : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct CorruptFile : Error { using Error::Error; };
struct InsufficientTracks : Error { using Error::Error; };
struct SingleIdentityBatch : Error { using Error::Error; };
struct NonMonotonicFrame : Error { using Error::Error; };
struct OverlappingMasks : Error { using Error::Error; };
struct EmptyGroundTruth : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

/// Dense row-major raster. (x, y) = (column, row).
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, T fill = T{})
        : width_(width), height_(height),
          cells_(static_cast<size_t>(width) * height, fill) {
        if (width <= 0 || height <= 0)
            throw DimensionMismatch("grid dimensions must be positive");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    size_t size() const { return cells_.size(); }

    T& at(int x, int y) { return cells_[static_cast<size_t>(y) * width_ + x]; }
    const T& at(int x, int y) const { return cells_[static_cast<size_t>(y) * width_ + x]; }

    T* data() { return cells_.data(); }
    const T* data() const { return cells_.data(); }

    bool operator==(const Grid&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> cells_;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer, used to derive independent stream seeds.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    return mix64(mix64(mix64(seed ^ mix64(a)) ^ mix64(b)) ^ mix64(c));
}

/// Unbiased integer in [0, n). Lemire's multiply-shift rejection; the
/// stdlib distribution is implementation-defined, which would break
/// byte-identical reproducibility across toolchains.
inline uint64_t uniform_index(Rng& rng, uint64_t n) {
    if (n == 0) throw Error("uniform_index: empty range");
    while (true) {
        uint64_t x = rng();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        uint64_t lo = static_cast<uint64_t>(m);
        if (lo >= n || lo >= (-n) % n) return static_cast<uint64_t>(m >> 64);
    }
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(rng);
}

/// Median of a sample; the even case averages the middle pair.
inline double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, so
/// any writes keyed by i land in disjoint slots and the result does not
/// depend on the thread count.
template <typename Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    size_t workers = std::min<size_t>(threads, n);
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::atomic<size_t> next{0};
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Little-endian scalar I/O. The in-memory representation on every target
// we build for is already little endian; memcpy keeps it alias-safe.

template <typename T>
void write_le(std::ostream& out, T value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.write(bytes, sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    char bytes[sizeof(T)];
    in.read(bytes, sizeof(T));
    if (!in) throw CorruptFile("unexpected end of file");
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

inline std::string format_double(double value) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, end);  // shortest form that round-trips
}

inline std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_input(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw IoError("cannot open for reading: " + path);
    return in;
}

}  // namespace mots
