// SPDX-License-Identifier: Apache-2.0
#include "chunkft/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "chunkft/csvio.hpp"

namespace chunkft::lab {

namespace {

void check_blocks(const std::vector<BlockRange>& blocks, int dim) {
  if (blocks.empty()) throw Error("lab: block list is empty");
  int cursor = 0;
  for (const auto& b : blocks) {
    if (b.begin != cursor || b.end <= b.begin)
      throw Error("lab: blocks must be a contiguous cover of the coordinates");
    cursor = b.end;
  }
  if (cursor != dim) throw Error("lab: blocks do not cover the full dimension");
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<BlockRange> even_blocks(int dim, int K) {
  if (K < 1) throw Error("lab: K must be at least 1");
  if (K > dim) throw Error("lab: more blocks than coordinates");
  std::vector<BlockRange> out;
  out.reserve(static_cast<size_t>(K));
  const int base = dim / K;
  const int extra = dim % K;
  int cursor = 0;
  for (int k = 0; k < K; ++k) {
    const int len = base + (k < extra ? 1 : 0);
    out.push_back({cursor, cursor + len});
    cursor += len;
  }
  return out;
}

IdentityQuadratic::IdentityQuadratic(std::vector<double> theta0) : theta0_(std::move(theta0)) {
  if (theta0_.empty()) throw Error("identity-quadratic: empty start point");
}

double IdentityQuadratic::loss(const std::vector<double>& theta) const {
  return 0.5 * dot(theta, theta);
}

std::vector<double> IdentityQuadratic::gradient(const std::vector<double>& theta) const {
  return theta;
}

std::optional<std::vector<double>> IdentityQuadratic::known_block_lipschitz(
    const std::vector<BlockRange>& blocks) const {
  return std::vector<double>(blocks.size(), 1.0);
}

DiagQuadratic::DiagQuadratic(std::vector<double> diag, std::vector<double> theta0)
    : diag_(std::move(diag)), theta0_(std::move(theta0)) {
  if (diag_.empty() || diag_.size() != theta0_.size())
    throw Error("diag-quadratic: diagonal and start point sizes differ");
  for (double d : diag_)
    if (d <= 0.0) throw Error("diag-quadratic: diagonal must be positive");
}

double DiagQuadratic::loss(const std::vector<double>& theta) const {
  double s = 0.0;
  for (size_t i = 0; i < diag_.size(); ++i) s += diag_[i] * theta[i] * theta[i];
  return 0.5 * s;
}

std::vector<double> DiagQuadratic::gradient(const std::vector<double>& theta) const {
  std::vector<double> g(theta.size());
  for (size_t i = 0; i < diag_.size(); ++i) g[i] = diag_[i] * theta[i];
  return g;
}

std::optional<std::vector<double>> DiagQuadratic::known_block_lipschitz(
    const std::vector<BlockRange>& blocks) const {
  std::vector<double> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) {
    double mx = 0.0;
    for (int i = b.begin; i < b.end; ++i) mx = std::max(mx, diag_[static_cast<size_t>(i)]);
    out.push_back(mx);
  }
  return out;
}

RandomPdQuadratic::RandomPdQuadratic(int dim, uint64_t seed, double mu)
    : n_(dim), a_(dim, dim) {
  if (dim < 1) throw Error("random-pd-quadratic: dim must be positive");
  if (mu <= 0.0) throw Error("random-pd-quadratic: mu must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix b(dim, dim);
  for (double& v : b.data) v = normal(rng);
  // A = B^T B / dim + mu I, symmetric by construction
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += b.at(k, i) * b.at(k, j);
      s /= static_cast<double>(dim);
      if (i == j) s += mu;
      a_.at(i, j) = s;
      a_.at(j, i) = s;
    }
  }
  theta0_.resize(static_cast<size_t>(dim));
  for (double& v : theta0_) v = normal(rng);
}

double RandomPdQuadratic::loss(const std::vector<double>& theta) const {
  double s = 0.0;
  for (int i = 0; i < n_; ++i) {
    double row = 0.0;
    for (int j = 0; j < n_; ++j) row += a_.at(i, j) * theta[static_cast<size_t>(j)];
    s += theta[static_cast<size_t>(i)] * row;
  }
  return 0.5 * s;
}

std::vector<double> RandomPdQuadratic::gradient(const std::vector<double>& theta) const {
  std::vector<double> g(static_cast<size_t>(n_), 0.0);
  for (int i = 0; i < n_; ++i) {
    double row = 0.0;
    for (int j = 0; j < n_; ++j) row += a_.at(i, j) * theta[static_cast<size_t>(j)];
    g[static_cast<size_t>(i)] = row;
  }
  return g;
}

std::optional<std::vector<double>> RandomPdQuadratic::known_block_lipschitz(
    const std::vector<BlockRange>& blocks) const {
  std::vector<double> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) {
    Matrix sub(b.size(), b.size());
    for (int i = 0; i < b.size(); ++i)
      for (int j = 0; j < b.size(); ++j) sub.at(i, j) = a_.at(b.begin + i, b.begin + j);
    out.push_back(spectral_norm_sym(sub));
  }
  return out;
}

LogisticProblem::LogisticProblem(int dim, int points, uint64_t seed, double mu)
    : n_(dim), x_(points, dim), mu_(mu) {
  if (dim < 1 || points < 1) throw Error("logistic: dim and points must be positive");
  if (mu <= 0.0) throw Error("logistic: mu must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : x_.data) v = normal(rng);
  std::vector<double> w(static_cast<size_t>(dim));
  for (double& v : w) v = normal(rng);
  y_.resize(static_cast<size_t>(points));
  for (int p = 0; p < points; ++p) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) s += x_.at(p, j) * w[static_cast<size_t>(j)];
    y_[static_cast<size_t>(p)] = (s + 0.1 * normal(rng)) >= 0.0 ? 1.0 : -1.0;
  }
  theta0_.resize(static_cast<size_t>(dim));
  for (double& v : theta0_) v = 0.5 * normal(rng);
}

double LogisticProblem::loss(const std::vector<double>& theta) const {
  const int npts = x_.rows;
  double s = 0.0;
  for (int p = 0; p < npts; ++p) {
    double z = 0.0;
    for (int j = 0; j < n_; ++j) z += x_.at(p, j) * theta[static_cast<size_t>(j)];
    const double margin = y_[static_cast<size_t>(p)] * z;
    // log(1 + exp(-margin)) without overflow
    s += margin >= 0.0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  }
  s /= static_cast<double>(npts);
  s += 0.5 * mu_ * dot(theta, theta);
  return s;
}

std::vector<double> LogisticProblem::gradient(const std::vector<double>& theta) const {
  const int npts = x_.rows;
  std::vector<double> g(static_cast<size_t>(n_), 0.0);
  for (int p = 0; p < npts; ++p) {
    double z = 0.0;
    for (int j = 0; j < n_; ++j) z += x_.at(p, j) * theta[static_cast<size_t>(j)];
    const double margin = y_[static_cast<size_t>(p)] * z;
    // d/dz log(1+exp(-y z)) = -y * sigmoid(-y z)
    const double sig = margin >= 0.0 ? std::exp(-margin) / (1.0 + std::exp(-margin))
                                     : 1.0 / (1.0 + std::exp(margin));
    const double coef = -y_[static_cast<size_t>(p)] * sig / static_cast<double>(npts);
    for (int j = 0; j < n_; ++j) g[static_cast<size_t>(j)] += coef * x_.at(p, j);
  }
  for (int j = 0; j < n_; ++j) g[static_cast<size_t>(j)] += mu_ * theta[static_cast<size_t>(j)];
  return g;
}

std::optional<std::vector<double>> LogisticProblem::known_block_lipschitz(
    const std::vector<BlockRange>& blocks) const {
  const int npts = x_.rows;
  std::vector<double> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) {
    Matrix gram(b.size(), b.size());
    for (int i = 0; i < b.size(); ++i) {
      for (int j = 0; j <= i; ++j) {
        double s = 0.0;
        for (int p = 0; p < npts; ++p) s += x_.at(p, b.begin + i) * x_.at(p, b.begin + j);
        gram.at(i, j) = s;
        gram.at(j, i) = s;
      }
    }
    out.push_back(spectral_norm_sym(gram) / (4.0 * static_cast<double>(npts)) + mu_);
  }
  return out;
}

Trajectory block_gradient_chunkft(const SmoothProblem& problem,
                                  const std::vector<BlockRange>& blocks, int H, int R,
                                  double eta, const NoiseSpec* noise) {
  check_blocks(blocks, problem.dim());
  if (H < 1) throw Error("lab: H must be at least 1");
  if (R < 1) throw Error("lab: R must be at least 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw Error("lab: eta must be positive and finite");

  const int K = static_cast<int>(blocks.size());
  const bool noisy = noise != nullptr && noise->sigma > 0.0;
  std::mt19937_64 rng(noisy ? noise->seed : 0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Trajectory traj;
  traj.K = K;
  traj.H = H;
  traj.R = R;
  traj.eta = eta;
  traj.entries.reserve(static_cast<size_t>(R) * static_cast<size_t>(K) * static_cast<size_t>(H));

  std::vector<double> theta = problem.initial_point();
  traj.initial_loss = problem.loss(theta);
  for (int r = 0; r < R; ++r) {
    traj.rotation_points.push_back(theta);
    for (int i = 0; i < K; ++i) {
      const BlockRange& blk = blocks[static_cast<size_t>(i)];
      for (int h = 0; h < H; ++h) {
        const double loss_before = problem.loss(theta);
        if (!std::isfinite(loss_before)) throw Error("lab: loss diverged (non-finite)");
        std::vector<double> full = problem.gradient(theta);
        double gsq = 0.0;
        // apply only the active block; noise perturbs the applied gradient
        std::vector<double> applied(static_cast<size_t>(blk.size()));
        for (int j = 0; j < blk.size(); ++j) {
          double g = full[static_cast<size_t>(blk.begin + j)];
          if (noisy) g += noise->sigma * normal(rng);
          applied[static_cast<size_t>(j)] = g;
          gsq += g * g;
        }
        traj.entries.push_back({r, i, h, loss_before, gsq});
        traj.max_block_grad_norm = std::max(traj.max_block_grad_norm, std::sqrt(gsq));
        for (int j = 0; j < blk.size(); ++j)
          theta[static_cast<size_t>(blk.begin + j)] -= eta * applied[static_cast<size_t>(j)];
      }
    }
  }
  traj.rotation_points.push_back(theta);
  traj.theta_final = std::move(theta);
  traj.final_loss = problem.loss(traj.theta_final);
  return traj;
}

DescentReport check_descent(const Trajectory& traj, double max_block_lipschitz, double tol) {
  DescentReport rep;
  if (max_block_lipschitz > 0.0 && traj.eta > 1.0 / max_block_lipschitz) {
    std::ostringstream os;
    os << "descent check skipped: eta " << traj.eta << " exceeds 1/L = "
       << 1.0 / max_block_lipschitz;
    rep.notice = os.str();
    return rep;
  }
  rep.checked = true;
  rep.min_slack = 0.0;
  for (size_t t = 0; t < traj.entries.size(); ++t) {
    const TrajEntry& e = traj.entries[t];
    const double next_loss =
        t + 1 < traj.entries.size() ? traj.entries[t + 1].loss_before : traj.final_loss;
    const double allowed = e.loss_before - 0.5 * traj.eta * e.grad_norm_sq;
    const double slack = allowed - next_loss;  // negative = violated
    rep.min_slack = std::min(rep.min_slack, slack);
    if (slack < -tol * std::max(1.0, std::abs(e.loss_before))) {
      rep.violations += 1;
      rep.violation_sites.emplace_back(static_cast<int>(t), e.h);
    }
  }
  return rep;
}

StationarityBound stationarity_bound(const Trajectory& traj, const SmoothProblem& problem) {
  StationarityBound out;
  if (traj.entries.empty()) throw Error("lab: empty trajectory");
  double s = 0.0;
  for (const TrajEntry& e : traj.entries) s += e.grad_norm_sq;
  out.lhs = s / static_cast<double>(traj.entries.size());
  const double gap = traj.initial_loss - problem.lower_bound();
  out.rhs = 2.0 * gap /
            (traj.eta * static_cast<double>(traj.R) * static_cast<double>(traj.K) *
             static_cast<double>(traj.H));
  return out;
}

RotationBound rotation_stationarity(const Trajectory& traj, const SmoothProblem& problem,
                                    double max_block_lipschitz) {
  RotationBound out;
  if (static_cast<int>(traj.rotation_points.size()) != traj.R + 1)
    throw Error("lab: trajectory is missing rotation snapshots");
  double full_sq = 0.0;
  for (int r = 0; r < traj.R; ++r) {
    const std::vector<double> g = problem.gradient(traj.rotation_points[static_cast<size_t>(r)]);
    full_sq += dot(g, g);
  }
  out.lhs = full_sq / static_cast<double>(traj.R);

  double active = 0.0;
  for (const TrajEntry& e : traj.entries)
    if (e.h == 0) active += e.grad_norm_sq;
  out.active_term = 2.0 * active / static_cast<double>(traj.R);

  const double K = traj.K, H = traj.H;
  const double G = traj.max_block_grad_norm;
  out.movement_term = 2.0 * K * K * K * H * H * max_block_lipschitz * max_block_lipschitz *
                      traj.eta * traj.eta * G * G;
  out.rhs = out.active_term + out.movement_term;
  return out;
}

LipschitzEstimate estimate_block_lipschitz(const SmoothProblem& problem,
                                           const std::vector<BlockRange>& blocks,
                                           int num_probes, uint64_t seed) {
  check_blocks(blocks, problem.dim());
  if (num_probes < 2) throw Error("lab: need at least 2 probes");

  LipschitzEstimate out;
  if (auto known = problem.known_block_lipschitz(blocks)) {
    out.per_block = std::move(*known);
    out.from_probes = false;
  } else {
    out.from_probes = true;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::vector<double> theta0 = problem.initial_point();
    out.per_block.assign(blocks.size(), 0.0);
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
      const BlockRange& blk = blocks[bi];
      for (int probe = 0; probe < num_probes; ++probe) {
        std::vector<double> x = theta0;
        for (double& v : x) v += 0.7 * normal(rng);
        std::vector<double> d(static_cast<size_t>(blk.size()));
        double dn = 0.0;
        do {
          dn = 0.0;
          for (double& v : d) {
            v = 0.5 * normal(rng);
            dn += v * v;
          }
        } while (dn < 1e-24);  // degenerate pair, draw again
        std::vector<double> y = x;
        for (int j = 0; j < blk.size(); ++j)
          y[static_cast<size_t>(blk.begin + j)] += d[static_cast<size_t>(j)];
        const std::vector<double> gx = problem.gradient(x);
        const std::vector<double> gy = problem.gradient(y);
        double diff_sq = 0.0;
        for (int j = 0; j < blk.size(); ++j) {
          const double dv = gx[static_cast<size_t>(blk.begin + j)] -
                            gy[static_cast<size_t>(blk.begin + j)];
          diff_sq += dv * dv;
        }
        out.per_block[bi] = std::max(out.per_block[bi], std::sqrt(diff_sq / dn));
      }
    }
  }
  for (double v : out.per_block) out.max_value = std::max(out.max_value, v);
  return out;
}

double diminishing_eta(double c, int K, int H, int rotations) {
  if (c <= 0.0 || K < 1 || H < 1 || rotations < 1)
    throw Error("lab: diminishing eta needs positive arguments");
  return c / (std::pow(static_cast<double>(K), 2.0 / 3.0) * static_cast<double>(H) *
              std::cbrt(static_cast<double>(rotations)));
}

StochasticReport stochastic_check(const SmoothProblem& problem,
                                  const std::vector<BlockRange>& blocks, int H, int R,
                                  double eta, double sigma, int num_seeds,
                                  uint64_t base_seed) {
  if (num_seeds < 20) throw Error("lab: stochastic check needs at least 20 seeds");
  StochasticReport rep;
  rep.seeds = num_seeds;
  double lhs_sum = 0.0;
  for (int s = 0; s < num_seeds; ++s) {
    NoiseSpec noise{sigma, base_seed + static_cast<uint64_t>(s)};
    const Trajectory traj = block_gradient_chunkft(problem, blocks, H, R, eta, &noise);
    double gsq = 0.0;
    for (const TrajEntry& e : traj.entries) gsq += e.grad_norm_sq;
    lhs_sum += gsq / static_cast<double>(traj.entries.size());
    if (s == 0) {
      const double gap = traj.initial_loss - problem.lower_bound();
      rep.rhs = 2.0 * gap / (eta * static_cast<double>(R) * static_cast<double>(blocks.size()) *
                             static_cast<double>(H));
    }
  }
  rep.mean_lhs = lhs_sum / static_cast<double>(num_seeds);
  int max_block = 0;
  for (const auto& b : blocks) max_block = std::max(max_block, b.size());
  rep.margin = 0.05 * rep.rhs + 2.0 * sigma * sigma * static_cast<double>(max_block);
  rep.within = rep.mean_lhs <= rep.rhs + rep.margin;
  return rep;
}

void write_lab_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "r,i,h,loss,grad_norm_sq\n";
  for (const TrajEntry& e : traj.entries) {
    os << e.r << ',' << e.i << ',' << e.h << ',' << format_double(e.loss_before) << ','
       << format_double(e.grad_norm_sq) << '\n';
  }
  write_text_file(path, os.str());
}

std::string descent_report_text(const DescentReport& r) {
  std::ostringstream os;
  if (!r.checked) {
    os << r.notice << '\n';
    return os.str();
  }
  os << "descent inequality: " << (r.violations == 0 ? "holds" : "VIOLATED") << " (violations "
     << r.violations << ", worst slack " << format_double(r.min_slack) << ")\n";
  return os.str();
}

std::string bounds_report_text(const StationarityBound& s, const RotationBound& rot) {
  std::ostringstream os;
  os << "avg squared block gradient " << format_double(s.lhs) << " <= " << format_double(s.rhs)
     << " (" << (s.lhs <= s.rhs ? "ok" : "VIOLATED") << ")\n";
  os << "avg squared full gradient at rotation starts " << format_double(rot.lhs)
     << " <= " << format_double(rot.rhs) << " = active " << format_double(rot.active_term)
     << " + movement " << format_double(rot.movement_term) << " ("
     << (rot.lhs <= rot.rhs ? "ok" : "VIOLATED") << ")\n";
  return os.str();
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("lab: slope needs matched pairs");
  const size_t n = x.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0) throw Error("lab: slope needs positive values");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = static_cast<double>(n) * sxx - sx * sx;
  if (std::abs(denom) < 1e-30) throw Error("lab: slope is degenerate (constant x)");
  return (static_cast<double>(n) * sxy - sx * sy) / denom;
}

double spectral_norm_sym(const Matrix& a) {
  if (a.rows != a.cols || a.rows < 1) throw Error("lab: spectral norm needs a square matrix");
  const int n = a.rows;
  std::vector<double> v(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = 1.0 / static_cast<double>(i + 1);
  double lambda = 0.0;
  for (int iter = 0; iter < 2000; ++iter) {
    std::vector<double> w(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += a.at(i, j) * v[static_cast<size_t>(j)];
      w[static_cast<size_t>(i)] = s;
    }
    double norm = std::sqrt(dot(w, w));
    if (norm == 0.0) return 0.0;  // v in the null space; PSD inputs here make this a true 0
    for (double& x : w) x /= norm;
    double next = 0.0;
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += a.at(i, j) * w[static_cast<size_t>(j)];
      next += w[static_cast<size_t>(i)] * s;
    }
    if (std::abs(next - lambda) <= 1e-13 * std::max(1.0, std::abs(next)) && iter > 4) {
      return std::abs(next);
    }
    lambda = next;
    v = std::move(w);
  }
  return std::abs(lambda);
}

}  // namespace chunkft::lab
