#include "qkd/signal/stft.hpp"

#include <cmath>
#include <memory>
#include <numbers>

#include "qkd/errors.hpp"
#include "qkd/signal/fft.hpp"

namespace qkd {

namespace {

constexpr double kCoverageFloor = 1e-2;

// sum_k w^2 at every output position.
std::vector<double> window_energy(const StftConfig& config,
                                  std::span<const double> window,
                                  std::size_t frames, std::size_t length) {
  std::vector<double> den(length, 0.0);
  for (std::size_t k = 0; k < frames; ++k) {
    const std::ptrdiff_t start = config.frame_start(k);
    for (std::size_t j = 0; j < config.window_length; ++j) {
      const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
      if (pos >= 0 && static_cast<std::size_t>(pos) < length) {
        den[static_cast<std::size_t>(pos)] += window[j] * window[j];
      }
    }
  }
  return den;
}

std::vector<Complex> analyse_frame(std::span<const double> samples,
                                   const StftConfig& config,
                                   std::span<const double> window,
                                   std::size_t k) {
  std::vector<Complex> buf(config.fft_size);
  const std::ptrdiff_t start = config.frame_start(k);
  for (std::size_t j = 0; j < config.window_length; ++j) {
    const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
    if (pos >= 0 && static_cast<std::size_t>(pos) < samples.size()) {
      buf[j] = samples[static_cast<std::size_t>(pos)] * window[j];
    }
  }
  fft(buf);
  return buf;
}

}  // namespace

void StftConfig::validate() const {
  if (!is_power_of_two(fft_size)) {
    throw ConfigError("stft: fft_size " + std::to_string(fft_size) +
                      " is not a power of two");
  }
  if (window_length == 0 || window_length > fft_size) {
    throw ConfigError("stft: window_length must be in [1, fft_size]");
  }
  if (hop == 0) throw ConfigError("stft: hop must be >= 1");
  if (hop > window_length) {
    throw ConfigError("stft: hop " + std::to_string(hop) +
                      " exceeds window_length " + std::to_string(window_length));
  }
}

std::size_t StftConfig::frame_count(std::size_t length) const {
  const std::size_t padded = length + (center ? 2 * (window_length / 2) : 0);
  if (padded < window_length) return 0;
  return (padded - window_length) / hop + 1;
}

std::ptrdiff_t StftConfig::frame_start(std::size_t frame) const {
  return static_cast<std::ptrdiff_t>(frame * hop) -
         static_cast<std::ptrdiff_t>(center ? window_length / 2 : 0);
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(length));
  }
  return w;
}

StftFrame stft(std::span<const double> samples, const StftConfig& config) {
  config.validate();
  const std::size_t frames = config.frame_count(samples.size());
  if (frames == 0) {
    throw ShapeError("stft: signal of " + std::to_string(samples.size()) +
                     " samples shorter than window " +
                     std::to_string(config.window_length));
  }
  const auto window = hann_window(config.window_length);
  StftFrame out;
  out.config = config;
  out.bins = config.bins();
  out.frames = frames;
  out.magnitude.assign(out.bins * frames, 0.0);
  out.phase.assign(out.bins * frames, 0.0);
  for (std::size_t k = 0; k < frames; ++k) {
    const auto spec = analyse_frame(samples, config, window, k);
    for (std::size_t f = 0; f < out.bins; ++f) {
      out.magnitude[f * frames + k] = std::abs(spec[f]);
      out.phase[f * frames + k] = std::arg(spec[f]);
    }
  }
  return out;
}

std::vector<double> istft(const StftFrame& frame, std::size_t length) {
  const auto& config = frame.config;
  config.validate();
  const auto window = hann_window(config.window_length);
  std::vector<double> out(length, 0.0);
  std::vector<Complex> bins(frame.bins);
  for (std::size_t k = 0; k < frame.frames; ++k) {
    for (std::size_t f = 0; f < frame.bins; ++f) {
      bins[f] = std::polar(frame.magnitude[f * frame.frames + k],
                           frame.phase[f * frame.frames + k]);
    }
    const auto time = irfft(bins, config.fft_size);
    const std::ptrdiff_t start = config.frame_start(k);
    for (std::size_t j = 0; j < config.window_length; ++j) {
      const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
      if (pos >= 0 && static_cast<std::size_t>(pos) < length) {
        out[static_cast<std::size_t>(pos)] += window[j] * time[j];
      }
    }
  }
  const auto den = window_energy(config, window, frame.frames, length);
  for (std::size_t i = 0; i < length; ++i) {
    out[i] = den[i] > kCoverageFloor ? out[i] / den[i] : 0.0;
  }
  return out;
}

namespace ops {

Tensor stft_magnitude(const Tensor& signal, const StftConfig& config) {
  config.validate();
  if (signal.rank() != 1) {
    throw ShapeError("stft_magnitude expects a rank-1 signal, got " +
                     to_string(signal.shape()));
  }
  const std::size_t length = signal.numel();
  const std::size_t frames = config.frame_count(length);
  if (frames == 0) {
    throw ShapeError("stft_magnitude: signal shorter than the window");
  }
  const std::size_t bins = config.bins();
  auto window = std::make_shared<std::vector<double>>(hann_window(config.window_length));
  // Unit phasors X / |X| saved for the backward pass.
  auto phasors = std::make_shared<std::vector<Complex>>(bins * frames);
  std::vector<double> mag(bins * frames);
  for (std::size_t k = 0; k < frames; ++k) {
    const auto spec = analyse_frame(signal.values(), config, *window, k);
    for (std::size_t f = 0; f < bins; ++f) {
      const double m = std::abs(spec[f]);
      mag[f * frames + k] = m;
      (*phasors)[f * frames + k] = m > 0.0 ? spec[f] / m : Complex(0.0, 0.0);
    }
  }
  const bool rec = autograd::should_record({&signal});
  Tensor result = Tensor::from_op({bins, frames}, std::move(mag), rec);
  if (rec) {
    auto ps = signal.shared();
    Graph::current()->record(
        "stft_magnitude", {signal}, result,
        [ps, phasors, window, config, bins, frames,
         length](std::span<const double> g) {
          auto gx = autograd::grad_of(*ps);
          std::vector<Complex> buf(config.fft_size);
          for (std::size_t k = 0; k < frames; ++k) {
            std::fill(buf.begin(), buf.end(), Complex(0.0, 0.0));
            for (std::size_t f = 0; f < bins; ++f) {
              buf[f] = g[f * frames + k] * (*phasors)[f * frames + k];
            }
            fft(buf, true);
            const std::ptrdiff_t start = config.frame_start(k);
            for (std::size_t j = 0; j < config.window_length; ++j) {
              const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
              if (pos >= 0 && static_cast<std::size_t>(pos) < length) {
                gx[static_cast<std::size_t>(pos)] += (*window)[j] * buf[j].real();
              }
            }
          }
        });
  }
  return result;
}

Tensor istft_from_magnitude(const Tensor& magnitude,
                            std::span<const double> phase,
                            const StftConfig& config, std::size_t length) {
  config.validate();
  if (magnitude.rank() != 2 || magnitude.dim(0) != config.bins()) {
    throw ShapeError("istft_from_magnitude: magnitude " +
                     to_string(magnitude.shape()) + " must be [" +
                     std::to_string(config.bins()) + " x frames]");
  }
  if (phase.size() != magnitude.numel()) {
    throw ShapeError("istft_from_magnitude: phase size mismatch");
  }
  const std::size_t bins = config.bins();
  const std::size_t frames = magnitude.dim(1);
  auto window = std::make_shared<std::vector<double>>(hann_window(config.window_length));
  auto den = std::make_shared<std::vector<double>>(
      window_energy(config, *window, frames, length));
  auto phase_copy = std::make_shared<std::vector<double>>(phase.begin(), phase.end());

  StftFrame frame;
  frame.config = config;
  frame.bins = bins;
  frame.frames = frames;
  frame.magnitude.assign(magnitude.values().begin(), magnitude.values().end());
  frame.phase = *phase_copy;
  std::vector<double> out = istft(frame, length);

  const bool rec = autograd::should_record({&magnitude});
  Tensor result = Tensor::from_op({length}, std::move(out), rec);
  if (rec) {
    auto pm = magnitude.shared();
    Graph::current()->record(
        "istft_from_magnitude", {magnitude}, result,
        [pm, phase_copy, window, den, config, bins, frames,
         length](std::span<const double> g) {
          auto gm = autograd::grad_of(*pm);
          const double inv_n = 1.0 / static_cast<double>(config.fft_size);
          std::vector<Complex> buf(config.fft_size);
          for (std::size_t k = 0; k < frames; ++k) {
            std::fill(buf.begin(), buf.end(), Complex(0.0, 0.0));
            const std::ptrdiff_t start = config.frame_start(k);
            for (std::size_t j = 0; j < config.window_length; ++j) {
              const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
              if (pos >= 0 && static_cast<std::size_t>(pos) < length &&
                  (*den)[static_cast<std::size_t>(pos)] > kCoverageFloor) {
                const auto p = static_cast<std::size_t>(pos);
                buf[j] = (*window)[j] * g[p] / (*den)[p];
              }
            }
            fft(buf);
            for (std::size_t f = 0; f < bins; ++f) {
              const double c = (f == 0 || f == bins - 1) ? 1.0 : 2.0;
              const Complex rot = std::polar(1.0, (*phase_copy)[f * frames + k]);
              gm[f * frames + k] += c * inv_n * (rot * std::conj(buf[f])).real();
            }
          }
        });
  }
  return result;
}

}  // namespace ops

}  // namespace qkd
