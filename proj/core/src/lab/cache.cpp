#include "srotlab/lab/cache.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "srotlab/errors.hpp"

namespace srotlab::lab {

namespace fs = std::filesystem;

ContentHash& ContentHash::add_bytes(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    state_ ^= p[i];
    state_ *= 1099511628211ull;
  }
  return *this;
}

ContentHash& ContentHash::add(const std::string& s) {
  add(static_cast<std::int64_t>(s.size()));
  return add_bytes(s.data(), s.size());
}

ContentHash& ContentHash::add(double v) { return add_bytes(&v, sizeof(v)); }

ContentHash& ContentHash::add(std::int64_t v) { return add_bytes(&v, sizeof(v)); }

ContentHash& ContentHash::add(const Mat& m) {
  add(static_cast<std::int64_t>(m.rows()));
  add(static_cast<std::int64_t>(m.cols()));
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) add(m(r, c));
  }
  return *this;
}

ContentHash& ContentHash::add(const Vec& v) {
  add(static_cast<std::int64_t>(v.size()));
  for (int i = 0; i < v.size(); ++i) add(v(i));
  return *this;
}

std::string ContentHash::hex() const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(state_));
  return buf;
}

std::uint64_t cost_matrix_key(const std::string& frame_name, const Mat& X,
                              const Mat& Y, const CostMatrixOptions& opts) {
  const DistanceOptions& solver = opts.solver;
  ContentHash h;
  h.add(std::string("srotlab-costmatrix-v1"));
  h.add(frame_name);
  h.add(X);
  h.add(Y);
  h.add(static_cast<std::int64_t>(solver.shoot_steps));
  h.add(static_cast<std::int64_t>(solver.verify_steps));
  h.add(solver.endpoint_tol);
  h.add(static_cast<std::int64_t>(solver.max_iters));
  for (double s : solver.radial_scales) h.add(s);
  h.add(solver.radius_floor);
  h.add(solver.sep_tol);
  h.add(solver.multiplicity_rel_tol);
  h.add(static_cast<std::int64_t>(solver.lazy_sweep ? 1 : 0));
  h.add(static_cast<std::int64_t>(solver.allow_direct_fallback ? 1 : 0));
  h.add(static_cast<std::int64_t>(solver.direct_segments));
  h.add(static_cast<std::int64_t>(solver.direct_steps_per_segment));
  h.add(solver.rho_start);
  h.add(solver.rho_end);
  h.add(static_cast<std::int64_t>(solver.direct_max_iters));
  h.add(static_cast<std::int64_t>(opts.symmetric ? 1 : 0));
  h.add(static_cast<std::int64_t>(opts.straight_refresh));
  h.add(static_cast<std::int64_t>(opts.straight_stride));
  return h.value();
}

DistanceCache::DistanceCache(std::string dir) : dir_(std::move(dir)) {
  if (dir_.empty()) {
    if (const char* env = std::getenv("SROTLAB_CACHE_DIR"); env != nullptr) {
      dir_ = env;
    } else {
      dir_ = "srotlab_cache";
    }
  }
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create cache directory: " + dir_);
}

std::string DistanceCache::path_for(std::uint64_t key) const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(key));
  return dir_ + "/" + buf + ".srotcb";
}

namespace {
constexpr char kMagic[8] = {'S', 'R', 'O', 'T', 'C', 'B', '0', '1'};
}

bool DistanceCache::try_load(std::uint64_t key, CostMatrixResult& out,
                             bool& existed) const {
  const std::string path = path_for(key);
  existed = fs::exists(path);
  if (!existed) return false;
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;

  char magic[8];
  std::uint64_t file_key = 0;
  std::int32_t ns = 0, nt = 0, n = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&file_key), sizeof(file_key));
  in.read(reinterpret_cast<char*>(&ns), sizeof(ns));
  in.read(reinterpret_cast<char*>(&nt), sizeof(nt));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0 || file_key != key ||
      ns <= 0 || nt <= 0 || n <= 0) {
    return false;
  }

  out.n_source = ns;
  out.n_target = nt;
  out.C.resize(ns, nt);
  // matrix stored row-major
  std::vector<double> buf(static_cast<std::size_t>(ns) * nt);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (!in) return false;
  for (int a = 0; a < ns; ++a) {
    for (int b = 0; b < nt; ++b) {
      out.C(a, b) = buf[static_cast<std::size_t>(a) * nt + b];
    }
  }
  std::vector<double> cov(static_cast<std::size_t>(ns) * nt * n);
  in.read(reinterpret_cast<char*>(cov.data()),
          static_cast<std::streamsize>(cov.size() * sizeof(double)));
  if (!in) return false;
  out.covectors.assign(static_cast<std::size_t>(ns) * nt, Vec());
  for (std::size_t e = 0; e < out.covectors.size(); ++e) {
    Vec p(n);
    for (int k = 0; k < n; ++k) p(k) = cov[e * n + k];
    out.covectors[e] = std::move(p);
  }
  out.flags.resize(static_cast<std::size_t>(ns) * nt);
  in.read(reinterpret_cast<char*>(out.flags.data()),
          static_cast<std::streamsize>(out.flags.size()));
  if (!in) return false;
  // trailing checksum of the payload sizes
  std::uint64_t tail = 0;
  in.read(reinterpret_cast<char*>(&tail), sizeof(tail));
  if (!in || tail != key) return false;
  return true;
}

void DistanceCache::store(std::uint64_t key, const CostMatrixResult& payload) const {
  const std::string path = path_for(key);
  const std::string lock = path + ".lock";
  // best-effort advisory lock: one writer per key; losers skip persisting
  std::FILE* lf = std::fopen(lock.c_str(), "wx");
  if (lf == nullptr) return;
  std::fclose(lf);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (out) {
      const std::int32_t ns = payload.n_source;
      const std::int32_t nt = payload.n_target;
      const std::int32_t n =
          payload.covectors.empty() ? 0 : static_cast<std::int32_t>(payload.covectors[0].size());
      out.write(kMagic, sizeof(kMagic));
      out.write(reinterpret_cast<const char*>(&key), sizeof(key));
      out.write(reinterpret_cast<const char*>(&ns), sizeof(ns));
      out.write(reinterpret_cast<const char*>(&nt), sizeof(nt));
      out.write(reinterpret_cast<const char*>(&n), sizeof(n));
      std::vector<double> buf(static_cast<std::size_t>(ns) * nt);
      for (int a = 0; a < ns; ++a) {
        for (int b = 0; b < nt; ++b) {
          buf[static_cast<std::size_t>(a) * nt + b] = payload.C(a, b);
        }
      }
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(double)));
      std::vector<double> cov(static_cast<std::size_t>(ns) * nt * n, 0.0);
      for (std::size_t e = 0; e < payload.covectors.size(); ++e) {
        const Vec& p = payload.covectors[e];
        for (int k = 0; k < n && k < p.size(); ++k) cov[e * n + k] = p(k);
      }
      out.write(reinterpret_cast<const char*>(cov.data()),
                static_cast<std::streamsize>(cov.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(payload.flags.data()),
                static_cast<std::streamsize>(payload.flags.size()));
      out.write(reinterpret_cast<const char*>(&key), sizeof(key));
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  fs::remove(lock, ec);
}

DistanceCache::Outcome DistanceCache::get_or_compute(
    std::uint64_t key, const std::function<CostMatrixResult()>& compute) {
  Outcome out;
  bool existed = false;
  if (try_load(key, out.result, existed)) {
    out.hit = true;
    return out;
  }
  out.corrupt_recomputed = existed;
  out.result = compute();
  store(key, out.result);
  return out;
}

}  // namespace srotlab::lab
