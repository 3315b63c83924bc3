#pragma once

#include <span>
#include <vector>

#include "qkd/signal/stft.hpp"
#include "qkd/tensor/tensor.hpp"

namespace qkd {

inline constexpr double kSiSdrCapDb = 100.0;

/// Scale-invariant SDR in dB, capped to [-100, 100]; an exact match gives
/// +100. Both signals are mean-removed first unless `zero_mean` is false.
/// Throws ShapeError on a length mismatch, MetricError on a zero reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference,
              bool zero_mean = true);

/// FFT {512, 1024, 2048}, hop {50, 120, 240}, window {240, 600, 1200}, centred.
std::vector<StftConfig> mr_stft_resolutions();

inline constexpr double kMagnitudeFloor = 1e-7;

/// Sum over resolutions of spectral convergence plus mean log-magnitude L1.
/// Differentiable in both arguments (rank-1 tensors of equal length).
Tensor mr_stft_loss(const Tensor& estimate, const Tensor& reference);
Tensor mr_stft_loss(const Tensor& estimate, const Tensor& reference,
                    std::span<const StftConfig> resolutions);
double mr_stft_loss(std::span<const double> estimate, std::span<const double> reference);

namespace ops {
/// sqrt(sum x^2) with a zero gradient at the origin.
Tensor frobenius_norm(const Tensor& x);
}  // namespace ops

}  // namespace qkd
