#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "srotlab/kantorovich.hpp"

namespace srotlab::lab {

/// Streaming FNV-1a (64-bit) over canonical byte encodings; used to key the
/// distance cache. The key changes whenever the frame, the point set, or any
/// solver option changes.
class ContentHash {
 public:
  ContentHash& add_bytes(const void* data, std::size_t size);
  ContentHash& add(const std::string& s);
  ContentHash& add(double v);
  ContentHash& add(std::int64_t v);
  ContentHash& add(const Mat& m);
  ContentHash& add(const Vec& v);
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 1469598103934665603ull;
};

std::uint64_t cost_matrix_key(const std::string& frame_name, const Mat& X,
                              const Mat& Y, const CostMatrixOptions& opts);

/// File-backed cache of cost matrices (matrix, per-entry covectors, flags).
/// Payload round-trips bit-identically; corrupted files are recomputed with a
/// warning flag. Concurrent readers are safe; writes go through a temp file
/// plus atomic rename under a best-effort advisory lock per key.
class DistanceCache {
 public:
  /// dir empty: SROTLAB_CACHE_DIR env var, else "srotlab_cache" in cwd.
  explicit DistanceCache(std::string dir = "");

  const std::string& dir() const { return dir_; }

  struct Outcome {
    CostMatrixResult result;
    bool hit = false;
    bool corrupt_recomputed = false;
  };

  Outcome get_or_compute(std::uint64_t key,
                         const std::function<CostMatrixResult()>& compute);

 private:
  std::string path_for(std::uint64_t key) const;
  bool try_load(std::uint64_t key, CostMatrixResult& out, bool& existed) const;
  void store(std::uint64_t key, const CostMatrixResult& payload) const;

  std::string dir_;
};

}  // namespace srotlab::lab
