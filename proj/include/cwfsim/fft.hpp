#pragma once

#include <fftw3.h>

#include <Eigen/Core>
#include <map>
#include <mutex>
#include <tuple>

namespace cwfsim::fft {

namespace detail {

// FFTW planning is not thread-safe; execution through the new-array interface
// is. Plans are created once per (shape, alignment) and leaked intentionally
// at exit. FFTW_ESTIMATE keeps plan choice independent of timing, so results
// are reproducible across processes. SIMD plans need the data to share the
// planning buffer's alignment; anything else goes through an unaligned plan.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int n0, int n1, int sign, bool aligned) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(n0, n1, sign, aligned);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const std::size_t n = static_cast<std::size_t>(n0) * static_cast<std::size_t>(n1 > 0 ? n1 : 1);
    fftw_complex* buf = fftw_alloc_complex(n);
    const unsigned flags = FFTW_ESTIMATE | (aligned ? 0U : FFTW_UNALIGNED);
    fftw_plan plan = n1 > 0 ? fftw_plan_dft_2d(n0, n1, buf, buf, sign, flags)
                            : fftw_plan_dft_1d(n0, buf, buf, sign, flags);
    fftw_free(buf);
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int, bool>, fftw_plan> plans_;
};

inline void execute(Eigen::ArrayXcd& data, int n0, int n1, int sign) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan = PlanCache::instance().get(n0, n1, sign, fftw_alignment_of(reinterpret_cast<double*>(buf)) == 0);
  fftw_execute_dft(plan, buf, buf);
}

}  // namespace detail

/// In-place unnormalized forward transform (exp(-ikx) kernel).
inline void forward(Eigen::ArrayXcd& data) {
  detail::execute(data, static_cast<int>(data.size()), 0, FFTW_FORWARD);
}

/// In-place inverse transform, normalized so that inverse(forward(a)) == a.
inline void inverse(Eigen::ArrayXcd& data) {
  detail::execute(data, static_cast<int>(data.size()), 0, FFTW_BACKWARD);
  data /= static_cast<double>(data.size());
}

/// In-place inverse transform without the 1/n factor.
inline void backward_unnormalized(Eigen::ArrayXcd& data) {
  detail::execute(data, static_cast<int>(data.size()), 0, FFTW_BACKWARD);
}

inline void forward_2d(Eigen::ArrayXcd& data, int nx, int ny) {
  detail::execute(data, nx, ny, FFTW_FORWARD);
}

inline void inverse_2d(Eigen::ArrayXcd& data, int nx, int ny) {
  detail::execute(data, nx, ny, FFTW_BACKWARD);
  data /= static_cast<double>(data.size());
}

}  // namespace cwfsim::fft
