#pragma once

// Small shared utilities: deterministic RNG streams, checksums, CSV and
// number formatting, a bounded thread pool for independent work items.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace railmpc {

// Raised when passenger/flow arithmetic produces an inconsistent result
// (negative counts, mismatched chain), i.e. the inputs violate the model.
struct ModelError : std::runtime_error {
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a serialized artifact (scenario, dataset, model) cannot be
// parsed: truncation, bad magic, version or checksum mismatch.
struct FileFormatError : std::runtime_error {
  explicit FileFormatError(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent, reproducible RNG stream for (seed, stream-id) pairs.
// Episodes, training runs and scenario generation each get their own stream
// so concurrency cannot change any drawn value.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream_a = 0,
                                std::uint64_t stream_b = 0) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ (0x517cc1b727220a95ULL + stream_a));
  s = splitmix64(s ^ (0x2545f4914f6cdd1dULL + stream_b));
  return std::mt19937_64(s);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Shortest round-trip decimal form, stable across runs. Used everywhere a
// double lands in a text artifact (CSV, reports).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = std::strtod(buf, nullptr);
  if (back == v) {
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[40];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      if (std::strtod(shorter, nullptr) == v) return shorter;
    }
  }
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

struct SummaryStats {
  double mean = 0.0;
  double max = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

// Population standard deviation; a single sample reports 0.
inline SummaryStats summarize(const std::vector<double>& xs) {
  SummaryStats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  s.max = xs.front();
  for (double x : xs) {
    sum += x;
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work items must be
// independent; results should be written to pre-sized slots so the output
// order does not depend on scheduling.
template <typename Fn>
void run_parallel(int jobs, std::size_t n, Fn&& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::mutex err_mutex;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!failed.exchange(true)) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed.load()) std::rethrow_exception(first_error);
}

}  // namespace railmpc
