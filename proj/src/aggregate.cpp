#include "flaegis/aggregate.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

namespace flaegis {

namespace {

void check_updates(std::span<const WeightVector> updates, const char* what)
{
  if (updates.empty())
    throw std::invalid_argument(std::string(what) + ": no updates to aggregate");
  for (const auto& u : updates) {
    if (u.size() != updates.front().size())
      throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  }
}

bool is_power_of_two(int x)
{
  return x > 0 && (x & (x - 1)) == 0;
}

} // namespace

void FftAggConfig::validate() const
{
  if (grid_bins < 8 || !is_power_of_two(grid_bins))
    throw std::invalid_argument("aggregate.grid_bins must be a power of two >= 8");
  if (!(padding_bandwidths >= 0.0))
    throw std::invalid_argument("aggregate.padding_bandwidths must be non-negative");
}

WeightVector fedavg(std::span<const WeightVector> updates)
{
  check_updates(updates, "fedavg");
  std::vector<double> w(updates.size(), 1.0);
  return fedavg(updates, w);
}

WeightVector fedavg(std::span<const WeightVector> updates, std::span<const double> weights)
{
  check_updates(updates, "fedavg");
  if (weights.size() != updates.size())
    throw std::invalid_argument("fedavg: one weight per update required");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0))
    throw std::invalid_argument("fedavg: weights must sum to a positive value");
  std::vector<double> out(updates.front().size(), 0.0);
  for (std::size_t k = 0; k < updates.size(); ++k)
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += weights[k] * updates[k][i];
  for (auto& x : out)
    x /= total;
  return WeightVector(std::move(out));
}

double silverman_bandwidth(std::span<const double> samples)
{
  const auto n = static_cast<double>(samples.size());
  if (samples.size() < 2)
    return 0.0;
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples)
    ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return 1.06 * sd * std::pow(n, -0.2);
}

KdeGrid kde_grid(std::span<const double> samples, const FftAggConfig& cfg)
{
  cfg.validate();
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  KdeGrid g;
  g.bandwidth = silverman_bandwidth(samples);
  g.bins = cfg.grid_bins;
  g.lo = *mn - cfg.padding_bandwidths * g.bandwidth;
  const double hi = *mx + cfg.padding_bandwidths * g.bandwidth;
  g.step = (hi - g.lo) / static_cast<double>(g.bins - 1);
  return g;
}

std::vector<double> kde_grid_density(std::span<const double> samples, const KdeGrid& grid)
{
  const auto bins = static_cast<std::size_t>(grid.bins);
  const std::size_t n_fft = 2 * bins;

  std::vector<double> counts(n_fft, 0.0);
  for (double x : samples) {
    const double pos = (x - grid.lo) / grid.step;
    auto j = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0,
                                                 static_cast<double>(bins - 1)));
    const double frac = std::clamp(pos - static_cast<double>(j), 0.0, 1.0);
    counts[j] += 1.0 - frac;
    if (j + 1 < bins)
      counts[j + 1] += frac;
  }

  std::vector<double> kernel(n_fft, 0.0);
  for (std::size_t m = 0; m < bins; ++m) {
    const double u = static_cast<double>(m) * grid.step / grid.bandwidth;
    const double k = std::exp(-0.5 * u * u);
    kernel[m] = k;
    if (m > 0)
      kernel[n_fft - m] = k;
  }

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> fc;
  std::vector<std::complex<double>> fk;
  fft.fwd(fc, counts);
  fft.fwd(fk, kernel);
  for (std::size_t i = 0; i < fc.size(); ++i)
    fc[i] *= fk[i];
  std::vector<double> conv;
  fft.inv(conv, fc);
  conv.resize(bins);
  return conv;
}

double kde_mode(std::span<const double> samples, const FftAggConfig& cfg)
{
  if (samples.empty())
    throw std::invalid_argument("kde_mode: need at least one sample");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i]))
      throw NonFiniteError("kde_mode", i);
  }
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  if (*mn == *mx)
    return *mn;

  const auto grid = kde_grid(samples, cfg);
  const auto density = kde_grid_density(samples, grid);
  const double peak = *std::max_element(density.begin(), density.end());
  // Values within round-off of the peak count as tied; the first wins.
  const double tol = 1e-9 * std::abs(peak);
  int best = 0;
  for (int i = 0; i < grid.bins; ++i) {
    if (density[static_cast<std::size_t>(i)] >= peak - tol) {
      best = i;
      break;
    }
  }
  return grid.at(best);
}

WeightVector fft_aggregate(std::span<const WeightVector> updates, const FftAggConfig& cfg)
{
  check_updates(updates, "fft_aggregate");
  cfg.validate();
  const std::size_t p = updates.front().size();
  std::vector<double> out(p);
  std::vector<double> column(updates.size());
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < updates.size(); ++k)
      column[k] = updates[k][i];
    out[i] = kde_mode(column, cfg);
  }
  return WeightVector(std::move(out));
}

} // namespace flaegis
