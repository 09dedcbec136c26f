#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "bscaling/inference.hpp"
#include "bscaling/numerics.hpp"

namespace bscaling {

enum class Latent { Uniform01, StdNormal };
enum class TransformFamily { LogitOnly, Mixed };

std::string_view to_string(Latent latent);
std::string_view to_string(TransformFamily family);
Latent parse_latent(std::string_view s);
TransformFamily parse_family(std::string_view s);

struct SimConfig {
  Index n = 1000;
  Index k = 10;
  Latent latent = Latent::Uniform01;
  double noise_variance = 0.1;
  double nu = 2.0;
  int h = 5;
  TransformFamily family = TransformFamily::LogitOnly;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Independent random streams derived from one seed. Each stream is a
/// mt19937_64 seeded with splitmix64(seed, stream, index), so any stream
/// can be regenerated in isolation.
enum class Stream : std::uint64_t {
  Latent = 1,
  World = 2,
  Noise = 3,
  Replication = 4,
  Reference = 5,
  Response = 6,
};

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0);
std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

/// g(x) = 1 / (1 + exp(20 (x - 0.5))).
double logit_link(double x);
/// g_t(x) = log|t / x| with |x| < 1e-12 moved to sign(x) 1e-12 (0 as +).
double log_ratio_link(int t, double x);
/// delta_t = (-1)^(t+1) t^(-nu/2), t = 1..h.
Vector delta_weights(double nu, int h);

/// Measurement-specific constants: scale s_k ~ U(-10,10) and
/// Z_kt ~ U(-sqrt3, sqrt3).
struct SimWorld {
  Vector scale;
  Matrix z;
  Vector delta;
};

SimWorld draw_world(const SimConfig& cfg);

Vector gen_latent(const SimConfig& cfg);

/// w_ik = sum_t s_k Z_kt delta_t g(y_i + e_ik) (or g_t for the second half
/// of the columns under the Mixed family); e_ik ~ N(0, noise_variance)
/// drawn once per (i,k). The world comes from cfg.seed.
Matrix gen_measurements(const Vector& y, const SimConfig& cfg);
Matrix gen_measurements(const Vector& y, const SimConfig& cfg, const SimWorld& world);

/// Noise-free measurement vector of one latent value.
Vector measure_noiseless(double y, const SimConfig& cfg, const SimWorld& world);

/// Worker count from BSCALING_THREADS, defaulting to the hardware count.
unsigned thread_count_from_env();

struct TidyRow {
  Index n = 0;
  Index k = 0;
  Latent latent = Latent::Uniform01;
  TransformFamily family = TransformFamily::LogitOnly;
  double noise_variance = 0.0;
  std::string method;
  int rep = 0;
  double abs_corr = 0.0;
};

struct SummaryRow {
  Index n = 0;
  Index k = 0;
  Latent latent = Latent::Uniform01;
  TransformFamily family = TransformFamily::LogitOnly;
  double noise_variance = 0.0;
  std::string method;
  int count = 0;
  double mean = 0.0;
  double sd = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

struct BenchReport {
  std::vector<TidyRow> rows;
  std::vector<SummaryRow> summary;
  int reps = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;
  double mean_fit_seconds = 0.0;  // wall-clock, not part of determinism

  /// Mean |corr| of one method in one setting (NaN when absent).
  double mean_of(const std::string& method, Index n, Index k) const;
};

struct BenchOptions {
  int order = 4;
  unsigned threads = 0;  // 0: thread_count_from_env()
  /// Fixed k0 instead of selection over the grid when > 0.
  int fixed_k0 = 0;
};

/// Methods recorded per replication: bmean, pc_max, mds, rho_max, rho_bar0.
/// Replication r of setting s uses seed derive_seed(s.seed, Replication, r).
/// Throws when 5% or more of the replications fail.
BenchReport run_benchmark(const std::vector<SimConfig>& settings, int reps,
                          const std::vector<int>& k0_grid, const BenchOptions& opts = {});

void write_tidy_csv(std::ostream& os, const BenchReport& report);
void write_summary_csv(std::ostream& os, const BenchReport& report, bool with_meta);

struct CoverageOptions {
  Index reference_n = 1'000'000;
  int k0 = 3;
  int order = 4;
  unsigned threads = 0;
  Index max_dim = kDefaultMaxInferenceDim;
};

struct CoverageReport {
  double coverage = 0.0;
  double mean_width = 0.0;
  double mean_sigma = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double mu_reference = 0.0;
  int reps = 0;
  int failures = 0;
  Vector w_new;
  std::vector<double> standardized_errors;
};

/// Monte Carlo check of the prediction interval. The measurement world,
/// the rescaling and the knots are fixed by one fit on reference_n rows;
/// its B-mean at w_new is the reference value. Each replication fits
/// cfg.n fresh rows, aligns its sign with the reference and records
/// whether the interval covers. An empty w_new means the noiseless
/// measurement of the latent median.
CoverageReport mc_coverage(const SimConfig& cfg, const Vector& w_new, int reps, double level,
                           const CoverageOptions& opts = {});

}  // namespace bscaling
