#pragma once

// Shared plumbing: error types, seeded randomness, hashing, the work pool and
// atomic file output. Everything stochastic in the library draws from `Rng`
// so results depend only on the seed, never on the platform's <random>
// distribution implementations or on the number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <fstream>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace apkbench {

enum class ErrorKind { usage = 1, validation = 2, runtime = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind)
    {
    }
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what)
        : Error(ErrorKind::usage, what)
    {
    }
};

/// Input does not satisfy a documented invariant or format.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what)
        : Error(ErrorKind::validation, what)
    {
    }
};

/// Malformed binary or text input (ZIP, AXML, DEX, corpus lines).
class ParseError : public ValidationError {
public:
    explicit ParseError(const std::string& what) : ValidationError(what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what)
        : Error(ErrorKind::runtime, what)
    {
    }
};

class RuntimeError : public Error {
public:
    explicit RuntimeError(const std::string& what)
        : Error(ErrorKind::runtime, what)
    {
    }
};

// ---------------------------------------------------------------------------
// Hashing

constexpr std::uint64_t fnv_offset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t fnv_prime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = fnv_offset) noexcept
{
    for (unsigned char c : s) {
        h ^= c;
        h *= fnv_prime;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent sub-seed from a parent seed and a stream tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept
{
    return splitmix64(seed ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept
{
    return derive_seed(seed, fnv1a64(tag));
}

// ---------------------------------------------------------------------------
// Randomness

/// Seeded generator with hand-rolled distributions. The engine is the
/// standard 64-bit Mersenne Twister; the mappings to uniform/normal/integer
/// draws are fixed here so output bytes are identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (one draw per call, no caching).
    double normal()
    {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Index drawn from non-negative weights (at least one positive).
    std::size_t categorical(std::span<const double> weights)
    {
        double total = 0.0;
        for (double w : weights) {
            total += w;
        }
        double r = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (r < weights[i]) {
                return i;
            }
            r -= weights[i];
        }
        for (std::size_t i = weights.size(); i-- > 0;) {
            if (weights[i] > 0.0) {
                return i;
            }
        }
        return 0;
    }

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Work pool

namespace detail {
inline std::atomic<unsigned>& jobs_setting()
{
    static std::atomic<unsigned> jobs{0};
    return jobs;
}
inline thread_local bool in_worker = false;
} // namespace detail

/// Number of worker threads for parallel stages (0 = hardware concurrency).
inline void set_default_jobs(unsigned jobs) { detail::jobs_setting() = jobs; }

inline unsigned default_jobs()
{
    unsigned j = detail::jobs_setting();
    if (j == 0) {
        j = std::max(1u, std::thread::hardware_concurrency());
    }
    return j;
}

/// Runs f(i) for i in [0, n). Every index writes only its own output slot,
/// so results never depend on the thread count. Nested calls run inline.
/// If several indices throw, the exception of the lowest index is rethrown.
template <typename F>
void parallel_for(std::size_t n, F&& f, unsigned jobs = 0)
{
    if (jobs == 0) {
        jobs = default_jobs();
    }
    if (n == 0) {
        return;
    }
    if (jobs <= 1 || n == 1 || detail::in_worker) {
        for (std::size_t i = 0; i < n; ++i) {
            f(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::size_t err_index = n;
    std::exception_ptr err;
    auto worker = [&] {
        detail::in_worker = true;
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                break;
            }
            try {
                f(i);
            }
            catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (i < err_index) {
                    err_index = i;
                    err = std::current_exception();
                }
            }
        }
        detail::in_worker = false;
    };
    const unsigned count = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
    std::vector<std::thread> threads;
    threads.reserve(count);
    for (unsigned t = 0; t < count; ++t) {
        threads.emplace_back(worker);
    }
    for (auto& t : threads) {
        t.join();
    }
    if (err) {
        std::rethrow_exception(err);
    }
}

// ---------------------------------------------------------------------------
// Warnings

/// Non-fatal conditions (clamped parameters and the like). Goes to stderr
/// unless a sink is installed; stderr sees each distinct message once.
inline std::function<void(const std::string&)>& warning_sink()
{
    static std::function<void(const std::string&)> sink;
    return sink;
}

inline void warn(const std::string& msg)
{
    static std::mutex m;
    std::lock_guard<std::mutex> lock(m);
    if (warning_sink()) {
        warning_sink()(msg);
    }
    else {
        static std::set<std::string> seen;
        if (seen.insert(msg).second) {
            std::cerr << "warning: " << msg << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Files

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view content)
{
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open for writing: " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into place: " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    const std::string s = read_file(path);
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

/// Fixed-precision decimal formatting used in every report and model file.
inline std::string format_double(double v, int precision = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

} // namespace apkbench
