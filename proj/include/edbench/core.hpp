#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace edbench {

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto process exit codes (usage 2, data 3,
// divergence 4), so new error types should derive from one of the family
// roots below.
// ---------------------------------------------------------------------------

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A table header does not match the documented schema.
struct SchemaError : DataError {
    using DataError::DataError;
};

/// A binary artifact (waveform file, checkpoint) is malformed.
struct FormatError : DataError {
    using DataError::DataError;
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Timestamps. Stored as integer seconds relative to 1970-01-01 00:00:00
// (timezone-naive civil time); source format is ISO-8601. Integer seconds
// keep horizon arithmetic exact.
// ---------------------------------------------------------------------------

using Timestamp = std::int64_t;

inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerMinute = 60;

/// Parses "YYYY-MM-DD HH:MM:SS" (also accepts a 'T' separator or a bare
/// "YYYY-MM-DD", which reads as midnight). Throws DataError on bad input.
Timestamp parse_timestamp(const std::string& text);

/// nullopt on failure instead of throwing.
std::optional<Timestamp> try_parse_timestamp(const std::string& text);

std::string format_timestamp(Timestamp ts);
std::string format_date(Timestamp ts);

/// Civil day index (floor division, so pre-epoch values stay consistent).
inline std::int64_t day_index(Timestamp ts) {
    std::int64_t d = ts / kSecondsPerDay;
    if (ts % kSecondsPerDay < 0) --d;
    return d;
}

// ---------------------------------------------------------------------------
// Missing values. Tabular code uses quiet NaN; records use std::optional.
// ---------------------------------------------------------------------------

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 gives a portable bit stream; the
// distributions are implemented here because the standard library's are not
// reproducible across implementations.
// ---------------------------------------------------------------------------

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform01() { return (next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Lemire's multiply-shift rejection method.
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform01() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent stream for a named subcomponent.
    Rng fork(std::uint64_t salt) {
        return Rng(next() ^ (salt * 0x9e3779b97f4a7c15ULL));
    }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Logging: plain stderr lines. Artifact files must stay byte-deterministic,
// so diagnostics never go into outputs.
// ---------------------------------------------------------------------------

void log_info(const std::string& msg);
void log_warn(const std::string& msg);

// ---------------------------------------------------------------------------
// Small string/number helpers shared by the CSV and config layers.
// ---------------------------------------------------------------------------

std::string to_lower(std::string s);
std::string trim(const std::string& s);
bool starts_with(const std::string& s, const std::string& prefix);

/// Shortest decimal form that round-trips a double; integral values print
/// without an exponent or trailing zeros. Used for deterministic CSV output.
std::string fmt_double(double v);

/// Strict double parse; nullopt on any trailing garbage.
std::optional<double> try_parse_double(const std::string& s);
std::optional<std::int64_t> try_parse_int(const std::string& s);

// ---------------------------------------------------------------------------
// Content hashing for build manifests and checkpoint compatibility checks.
// ---------------------------------------------------------------------------

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& data);
std::string sha256_file_hex(const std::string& path);

}  // namespace edbench
