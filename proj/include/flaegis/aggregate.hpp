#pragma once

#include "flaegis/core.hpp"

#include <span>
#include <vector>

namespace flaegis {

struct FftAggConfig {
  int grid_bins = 512;       // power of two
  double padding_bandwidths = 3.0;

  void validate() const;
};

/// Unweighted coordinate-wise mean.
WeightVector fedavg(std::span<const WeightVector> updates);
/// Mean weighted by `weights` (e.g. local sample counts).
WeightVector fedavg(std::span<const WeightVector> updates, std::span<const double> weights);

/// Silverman's rule, h = 1.06 * sd * n^(-1/5), with the n-1 standard deviation.
double silverman_bandwidth(std::span<const double> samples);

/// Uniform grid [min - pad*h, max + pad*h] with `bins` points.
struct KdeGrid {
  double lo = 0.0;
  double step = 0.0;
  int bins = 0;
  double bandwidth = 0.0;

  double at(int i) const { return lo + step * i; }
};
KdeGrid kde_grid(std::span<const double> samples, const FftAggConfig& cfg);

/// Gaussian KDE on the grid: linear binning of the samples convolved with the
/// sampled kernel through a zero-padded FFT. Unnormalized.
std::vector<double> kde_grid_density(std::span<const double> samples, const KdeGrid& grid);

/// Grid point of maximum density; ties go to the smallest value. Returns the
/// common value directly when every sample is equal.
double kde_mode(std::span<const double> samples, const FftAggConfig& cfg = {});

/// Coordinate-wise kde_mode over the clients' values.
WeightVector fft_aggregate(std::span<const WeightVector> updates,
                           const FftAggConfig& cfg = {});

} // namespace flaegis
