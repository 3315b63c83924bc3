#include "qkd/signal/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <unordered_map>

#include "qkd/errors.hpp"

namespace qkd {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanCache {
  std::unordered_map<std::size_t, fftw_plan> forward, backward;
  ~PlanCache() {
    std::lock_guard lock(planner_mutex());
    for (auto& [n, p] : forward) fftw_destroy_plan(p);
    for (auto& [n, p] : backward) fftw_destroy_plan(p);
  }
};

fftw_plan plan_for(std::size_t n, bool inverse) {
  thread_local PlanCache cache;
  auto& table = inverse ? cache.backward : cache.forward;
  auto it = table.find(n);
  if (it != table.end()) return it->second;
  std::vector<Complex> scratch(n);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  std::lock_guard lock(planner_mutex());
  fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), buf, buf,
                                 inverse ? FFTW_BACKWARD : FFTW_FORWARD,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  table.emplace(n, p);
  return p;
}

}  // namespace

void fft(std::span<Complex> data, bool inverse) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n)) {
    throw ConfigError("fft size " + std::to_string(n) + " is not a power of two");
  }
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan_for(n, inverse), buf, buf);
}

std::vector<Complex> rfft(std::span<const double> x, std::size_t n) {
  std::vector<Complex> buf(n);
  for (std::size_t i = 0; i < std::min(n, x.size()); ++i) buf[i] = x[i];
  fft(buf);
  buf.resize(n / 2 + 1);
  return buf;
}

std::vector<double> irfft(std::span<const Complex> bins, std::size_t n) {
  if (bins.size() != n / 2 + 1) {
    throw ShapeError("irfft: expected " + std::to_string(n / 2 + 1) +
                     " bins, got " + std::to_string(bins.size()));
  }
  std::vector<Complex> buf(n);
  buf[0] = bins[0].real();
  buf[n / 2] = bins[n / 2].real();
  for (std::size_t k = 1; k < n / 2; ++k) {
    buf[k] = bins[k];
    buf[n - k] = std::conj(bins[k]);
  }
  fft(buf, true);
  std::vector<double> out(n);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real() * inv;
  return out;
}

std::vector<double> convolve(std::span<const double> a,
                             std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_power_of_two(out_len);
  std::vector<Complex> fa(n), fb(n);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
  fft(fa);
  fft(fb);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  fft(fa, true);
  std::vector<double> out(out_len);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real() * inv;
  return out;
}

}  // namespace qkd
