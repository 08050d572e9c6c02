#pragma once

// Thin FFTW3 wrapper. Plans are created once per (size, kind) under a global
// lock and executed with the new-array interface, which is thread-safe.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

namespace cltms::fft {

namespace detail {

enum class Kind { r2c, c2r, c2c_forward, c2c_backward };

inline fftw_plan plan_for(std::size_t n, Kind kind) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, Kind>, fftw_plan> cache;
  std::lock_guard lock(mutex);
  auto key = std::make_pair(n, kind);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  const int len = static_cast<int>(n);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  std::vector<double> real(n + 2);
  std::vector<std::complex<double>> cplx(n + 1);
  auto* c = reinterpret_cast<fftw_complex*>(cplx.data());
  fftw_plan plan = nullptr;
  switch (kind) {
    case Kind::r2c: plan = fftw_plan_dft_r2c_1d(len, real.data(), c, flags); break;
    case Kind::c2r: plan = fftw_plan_dft_c2r_1d(len, c, real.data(), flags); break;
    case Kind::c2c_forward: plan = fftw_plan_dft_1d(len, c, c, FFTW_FORWARD, flags); break;
    case Kind::c2c_backward: plan = fftw_plan_dft_1d(len, c, c, FFTW_BACKWARD, flags); break;
  }
  cache.emplace(key, plan);
  return plan;
}

}  // namespace detail

// Forward real transform, returns n/2+1 bins (unnormalized).
inline std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_execute_dft_r2c(detail::plan_for(n, detail::Kind::r2c), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

// Inverse real transform of n/2+1 bins; normalized by 1/n.
inline std::vector<double> irfft(std::span<const std::complex<double>> spectrum, std::size_t n) {
  std::vector<std::complex<double>> in(spectrum.begin(), spectrum.end());
  in.resize(n / 2 + 1);
  std::vector<double> out(n);
  fftw_execute_dft_c2r(detail::plan_for(n, detail::Kind::c2r),
                       reinterpret_cast<fftw_complex*>(in.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= scale;
  return out;
}

// In-place complex transform; inverse is normalized by 1/n.
inline void transform(std::vector<std::complex<double>>& x, bool inverse = false) {
  const std::size_t n = x.size();
  auto* p = reinterpret_cast<fftw_complex*>(x.data());
  fftw_execute_dft(
      detail::plan_for(n, inverse ? detail::Kind::c2c_backward : detail::Kind::c2c_forward), p, p);
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= scale;
  }
}

}  // namespace cltms::fft
