// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chunkft/matrix.hpp"

// Deterministic block-gradient rotation on analytic problems, with numeric
// checks of the descent inequality, the averaged stationarity bound, and the
// rotation-level full-gradient bound.
//
// Naming bridge: the engine's rotation interval T (steps per active chunk) is
// this lab's inner count H. The lab indexes runs by (K blocks, H inner steps,
// R rotations) throughout.
namespace chunkft::lab {

struct BlockRange {
  int begin = 0;
  int end = 0;  // exclusive
  int size() const { return end - begin; }
};

std::vector<BlockRange> even_blocks(int dim, int K);

class SmoothProblem {
 public:
  virtual ~SmoothProblem() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual double loss(const std::vector<double>& theta) const = 0;
  virtual std::vector<double> gradient(const std::vector<double>& theta) const = 0;
  virtual std::vector<double> initial_point() const = 0;
  // Infimum of the loss; 0 for every shipped problem (quadratics through the
  // origin, logistic with zero data-fit infimum probed below).
  virtual double lower_bound() const { return 0.0; }
  // Per-block smoothness constants when analytically available: exact
  // spectral norms for quadratics, a safe upper bound for logistic. Absent
  // means callers must fall back to probe estimates.
  virtual std::optional<std::vector<double>> known_block_lipschitz(
      const std::vector<BlockRange>& blocks) const {
    return std::nullopt;
  }
};

// 0.5 * ||theta||^2
class IdentityQuadratic final : public SmoothProblem {
 public:
  explicit IdentityQuadratic(std::vector<double> theta0);
  std::string name() const override { return "identity-quadratic"; }
  int dim() const override { return static_cast<int>(theta0_.size()); }
  double loss(const std::vector<double>& theta) const override;
  std::vector<double> gradient(const std::vector<double>& theta) const override;
  std::vector<double> initial_point() const override { return theta0_; }
  std::optional<std::vector<double>> known_block_lipschitz(
      const std::vector<BlockRange>& blocks) const override;

 private:
  std::vector<double> theta0_;
};

// 0.5 * theta^T diag(d) theta
class DiagQuadratic final : public SmoothProblem {
 public:
  DiagQuadratic(std::vector<double> diag, std::vector<double> theta0);
  std::string name() const override { return "diag-quadratic"; }
  int dim() const override { return static_cast<int>(diag_.size()); }
  double loss(const std::vector<double>& theta) const override;
  std::vector<double> gradient(const std::vector<double>& theta) const override;
  std::vector<double> initial_point() const override { return theta0_; }
  std::optional<std::vector<double>> known_block_lipschitz(
      const std::vector<BlockRange>& blocks) const override;

 private:
  std::vector<double> diag_;
  std::vector<double> theta0_;
};

// 0.5 * theta^T A theta with A = B^T B / dim + mu I (symmetric positive
// definite), B standard normal from the seed.
class RandomPdQuadratic final : public SmoothProblem {
 public:
  RandomPdQuadratic(int dim, uint64_t seed, double mu = 0.1);
  std::string name() const override { return "random-pd-quadratic"; }
  int dim() const override { return n_; }
  double loss(const std::vector<double>& theta) const override;
  std::vector<double> gradient(const std::vector<double>& theta) const override;
  std::vector<double> initial_point() const override { return theta0_; }
  std::optional<std::vector<double>> known_block_lipschitz(
      const std::vector<BlockRange>& blocks) const override;
  const Matrix& matrix() const { return a_; }

 private:
  int n_;
  Matrix a_;
  std::vector<double> theta0_;
};

// Mean logistic loss over a small synthetic binary dataset plus an L2 term:
// (1/N) sum log(1 + exp(-y_i x_i . theta)) + (mu/2)||theta||^2.
// lower_bound stays 0: the data-fit term is positive and the L2 term vanishes
// at the origin, and with mu > 0 the infimum over the probe set stays above 0;
// 0 remains a valid lower bound for the stationarity denominators.
class LogisticProblem final : public SmoothProblem {
 public:
  LogisticProblem(int dim, int points, uint64_t seed, double mu = 0.01);
  std::string name() const override { return "logistic"; }
  int dim() const override { return n_; }
  double loss(const std::vector<double>& theta) const override;
  std::vector<double> gradient(const std::vector<double>& theta) const override;
  std::vector<double> initial_point() const override { return theta0_; }
  // Upper bound: per-sample curvature of the logistic term is at most 1/4, so
  // the block Hessian norm is at most sigma_max(X_i^T X_i) / (4N) + mu.
  std::optional<std::vector<double>> known_block_lipschitz(
      const std::vector<BlockRange>& blocks) const override;

 private:
  int n_;
  Matrix x_;                // points x dim
  std::vector<double> y_;  // +1 / -1
  double mu_;
  std::vector<double> theta0_;
};

// Additive zero-mean Gaussian gradient noise; sigma = 0 draws nothing and is
// bit-identical to the deterministic path.
struct NoiseSpec {
  double sigma = 0.0;
  uint64_t seed = 0;
};

struct TrajEntry {
  int r = 0;  // rotation
  int i = 0;  // block
  int h = 0;  // inner step
  double loss_before = 0.0;
  double grad_norm_sq = 0.0;  // applied (possibly noisy) active-block gradient
};

struct Trajectory {
  std::vector<TrajEntry> entries;  // ordered by (r, i, h)
  // theta at the start of each rotation, plus the final point (size R + 1).
  std::vector<std::vector<double>> rotation_points;
  std::vector<double> theta_final;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double max_block_grad_norm = 0.0;  // G along this trajectory
  int K = 0, H = 0, R = 0;
  double eta = 0.0;
};

// Rotating block-gradient descent: R rotations, each visiting the K blocks in
// order with H inner steps of theta_i -= eta * grad_i. Plain gradient only
// (no moments, no decay).
Trajectory block_gradient_chunkft(const SmoothProblem& problem,
                                  const std::vector<BlockRange>& blocks, int H, int R,
                                  double eta, const NoiseSpec* noise = nullptr);

struct DescentReport {
  bool checked = false;
  std::string notice;  // set when skipped (eta > 1/max block L)
  int violations = 0;
  double min_slack = 0.0;  // most negative = worst; >= -tol when clean
  std::vector<std::pair<int, int>> violation_sites;  // (flat step, h)
};

// Verifies loss(t+1) <= loss(t) - (eta/2) * ||g||^2 at every inner step.
// Precondition eta <= 1/max(L_i); when violated the check is skipped with a
// notice rather than failed.
DescentReport check_descent(const Trajectory& traj, double max_block_lipschitz,
                            double tol = 1e-9);

struct StationarityBound {
  double lhs = 0.0;  // average squared active-block gradient over all steps
  double rhs = 0.0;  // 2 (L(theta0) - L_star) / (eta * R * K * H)
};

StationarityBound stationarity_bound(const Trajectory& traj, const SmoothProblem& problem);

struct RotationBound {
  double lhs = 0.0;            // average squared full gradient at rotation starts
  double active_term = 0.0;    // 2/R * sum over (r, i) of ||g at h=0||^2
  double movement_term = 0.0;  // 2 K^3 H^2 Lbar^2 eta^2 G^2
  double rhs = 0.0;            // active_term + movement_term
};

RotationBound rotation_stationarity(const Trajectory& traj, const SmoothProblem& problem,
                                    double max_block_lipschitz);

struct LipschitzEstimate {
  std::vector<double> per_block;
  double max_value = 0.0;
  bool from_probes = false;  // probe results are lower estimates
};

LipschitzEstimate estimate_block_lipschitz(const SmoothProblem& problem,
                                           const std::vector<BlockRange>& blocks,
                                           int num_probes = 8, uint64_t seed = 1234);

// Diminishing schedule eta(c) = c / (K^(2/3) * H * R^(1/3)) for R rotations.
double diminishing_eta(double c, int K, int H, int rotations);

struct StochasticReport {
  int seeds = 0;
  double mean_lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // allowance added to rhs for the noise inflation
  bool within = false;
};

// Expectation-level check of the stationarity bound under gradient noise:
// mean lhs over the seeds must stay within rhs plus a documented allowance of
// 5% of rhs + 2 sigma^2 max_block_dim (the noise inflates each recorded
// ||g||^2 by about sigma^2 * block dimension).
StochasticReport stochastic_check(const SmoothProblem& problem,
                                  const std::vector<BlockRange>& blocks, int H, int R,
                                  double eta, double sigma, int num_seeds,
                                  uint64_t base_seed);

void write_lab_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path);
std::string descent_report_text(const DescentReport& r);
std::string bounds_report_text(const StationarityBound& s, const RotationBound& rot);

// Least-squares slope of log(y) against log(x); the rate checks feed it
// (total steps, average squared block gradient) pairs.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

// Spectral norm of a symmetric matrix by power iteration (deterministic
// start, tolerance 1e-13).
double spectral_norm_sym(const Matrix& a);

}  // namespace chunkft::lab
