#include "gridloc/motion_model.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <tuple>

#include "gridloc/belief_grid.hpp"

namespace gridloc {

namespace {

double normal_cdf(double x, double sigma) {
  return 0.5 * (1.0 + std::erf(x / (sigma * std::numbers::sqrt2_v<double>)));
}

// Quadrature nodes for a zero-mean Gaussian error: node centers spaced finely
// enough to resolve both the Gaussian and the grid axis, weighted by the
// probability mass around each center, truncated at cutoff sigmas and
// renormalized.
std::vector<std::pair<double, double>> error_nodes(double sigma, double cutoff,
                                                   double axis_res) {
  if (sigma <= 0.0) return {{0.0, 1.0}};
  const double h = std::min(sigma / 2.0, axis_res / 2.0);
  const int k = static_cast<int>(std::ceil(cutoff * sigma / h));
  std::vector<std::pair<double, double>> nodes;
  nodes.reserve(2 * k + 1);
  double total = 0.0;
  for (int i = -k; i <= k; ++i) {
    const double c = i * h;
    const double w = normal_cdf(c + 0.5 * h, sigma) - normal_cdf(c - 0.5 * h, sigma);
    nodes.emplace_back(c, w);
    total += w;
  }
  for (auto& n : nodes) n.second /= total;
  return nodes;
}

// Continuous offsets are deposited onto the two nearest lattice steps per
// axis, weighted by proximity. Point-rounding instead would bias every node
// that lands between steps toward one side; splitting keeps the kernel mean
// exact and avoids resonance when node spacing divides the lattice step.
struct AxisSplit {
  int lo;
  double hi_weight;
};

AxisSplit axis_split(double units) {
  const double f = std::floor(units);
  return {static_cast<int>(f), units - f};
}

void deposit(std::map<std::tuple<int, int, int>, double>& cells, const AxisSplit& x,
             const AxisSplit& y, const AxisSplit& t, double w) {
  for (int bx = 0; bx <= 1; ++bx) {
    const double wx = w * (bx ? x.hi_weight : 1.0 - x.hi_weight);
    if (wx == 0.0) continue;
    for (int by = 0; by <= 1; ++by) {
      const double wy = wx * (by ? y.hi_weight : 1.0 - y.hi_weight);
      if (wy == 0.0) continue;
      for (int bt = 0; bt <= 1; ++bt) {
        const double wt = wy * (bt ? t.hi_weight : 1.0 - t.hi_weight);
        if (wt == 0.0) continue;
        cells[{x.lo + bx, y.lo + by, t.lo + bt}] += wt;
      }
    }
  }
}

MotionKernel finalize(const std::map<std::tuple<int, int, int>, double>& cells) {
  MotionKernel kernel;
  double total = 0.0;
  for (const auto& [key, w] : cells) total += w;
  if (!(total > 0.0)) throw std::runtime_error("motion kernel has no support");
  kernel.entries.reserve(cells.size());
  for (const auto& [key, w] : cells) {
    KernelEntry e;
    e.dx = std::get<0>(key);
    e.dy = std::get<1>(key);
    e.dtheta = std::get<2>(key);
    e.weight = w / total;
    kernel.entries.push_back(e);
  }
  return kernel;
}

}  // namespace

double MotionKernel::total_weight() const {
  double s = 0.0;
  for (const auto& e : entries) s += e.weight;
  return s;
}

std::vector<AtomicStep> decompose(const OdometryReading& reading, const MotionNoise& noise) {
  if (noise.max_atomic_trans <= 0.0 || noise.max_atomic_rot <= 0.0)
    throw std::invalid_argument("atomic step limits must be positive");
  const int n_trans =
      static_cast<int>(std::ceil(std::abs(reading.delta_trans) / noise.max_atomic_trans));
  const int n_rot =
      static_cast<int>(std::ceil(std::abs(reading.delta_rot) / noise.max_atomic_rot));
  const int n = std::max({1, n_trans, n_rot});
  std::vector<AtomicStep> steps(n, {reading.delta_rot / n, reading.delta_trans / n});
  return steps;
}

MotionKernel atomic_layer_kernel(const MotionNoise& noise, const AtomicStep& step,
                                 double heading, double cell_size, double theta_res) {
  const double sigma_t = noise.trans_sigma_per_meter * std::abs(step.trans);
  const double sigma_r = noise.rot_sigma_per_meter * std::abs(step.trans) +
                         noise.rot_sigma_per_radian * std::abs(step.rot);
  const auto rot_nodes = error_nodes(sigma_r, noise.cutoff, theta_res);
  const auto trans_nodes = error_nodes(sigma_t, noise.cutoff, cell_size);

  std::map<std::tuple<int, int, int>, double> cells;
  for (const auto& [er, wr] : rot_nodes) {
    const AxisSplit st = axis_split(er / theta_res);
    const double phi = heading + er;
    const double c = std::cos(phi), s = std::sin(phi);
    for (const auto& [et, wt] : trans_nodes) {
      const double rho = step.trans + et;
      deposit(cells, axis_split(rho * c / cell_size), axis_split(rho * s / cell_size), st,
              wr * wt);
    }
  }
  return finalize(cells);
}

MotionKernel motion_kernel(const MotionNoise& noise, const OdometryReading& reading,
                           double heading, double cell_size, double theta_res) {
  const auto steps = decompose(reading, noise);
  std::map<std::tuple<int, int, int>, double> states;
  states[{0, 0, 0}] = 1.0;
  double cum_rot = 0.0;
  for (const AtomicStep& step : steps) {
    cum_rot += step.rot;
    const double sigma_t = noise.trans_sigma_per_meter * std::abs(step.trans);
    const double sigma_r = noise.rot_sigma_per_meter * std::abs(step.trans) +
                           noise.rot_sigma_per_radian * std::abs(step.rot);
    const auto rot_nodes = error_nodes(sigma_r, noise.cutoff, theta_res);
    const auto trans_nodes = error_nodes(sigma_t, noise.cutoff, cell_size);

    std::map<std::tuple<int, int, int>, double> next;
    for (const auto& [key, w] : states) {
      const auto [dx, dy, dn] = key;
      for (const auto& [er, wr] : rot_nodes) {
        const double phi = heading + cum_rot + dn * theta_res + er;
        AxisSplit st = axis_split(er / theta_res);
        st.lo += dn;
        const double c = std::cos(phi), s = std::sin(phi);
        for (const auto& [et, wt] : trans_nodes) {
          const double rho = step.trans + et;
          AxisSplit sx = axis_split(rho * c / cell_size);
          sx.lo += dx;
          AxisSplit sy = axis_split(rho * s / cell_size);
          sy.lo += dy;
          deposit(next, sx, sy, st, w * wr * wt);
        }
      }
    }
    states = std::move(next);
  }
  return finalize(states);
}

PredictStats predict(BeliefGrid& b, const OdometryReading& reading, const MotionNoise& noise,
                     Boundary boundary) {
  PredictStats stats;
  const auto steps = decompose(reading, noise);
  stats.atomic_steps = static_cast<int>(steps.size());
  b.replay_noise_ = noise;

  const int nx = b.nx_, ny = b.ny_, ntheta = b.ntheta_;
  const std::size_t layer_cells = static_cast<std::size_t>(nx) * ny;
  double before = b.total_mass();
  double survived = 1.0;

  for (const AtomicStep& step : steps) {
    b.heading_offset_ += step.rot;
    b.ref_disp_.x += step.trans * std::cos(b.heading_offset_);
    b.ref_disp_.y += step.trans * std::sin(b.heading_offset_);
    b.path_len_ += std::abs(step.trans);

    b.scratch_.assign(b.values_.size(), 0.0);
    for (int it = 0; it < ntheta; ++it) {
      if (!b.partitions_[it].active) continue;
      const MotionKernel kernel =
          atomic_layer_kernel(noise, step, b.layer_heading(it), b.cell_, b.theta_res_);
      const std::size_t base = b.linear_index(0, 0, it);
      for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
          const double v = b.values_[base + static_cast<std::size_t>(iy) * nx + ix];
          if (v <= 0.0) continue;
          for (const KernelEntry& e : kernel.entries) {
            int tx = ix + e.dx;
            int ty = iy + e.dy;
            if (boundary == Boundary::kTorus) {
              tx = ((tx % nx) + nx) % nx;
              ty = ((ty % ny) + ny) % ny;
            }
            const double m = v * e.weight;
            if (tx < 0 || tx >= nx || ty < 0 || ty >= ny || !b.free_at(tx, ty)) continue;
            const int tt = (((it + e.dtheta) % ntheta) + ntheta) % ntheta;
            auto& tp = b.partitions_[tt];
            const std::size_t tidx =
                b.linear_index(0, 0, tt) + static_cast<std::size_t>(ty) * nx + tx;
            if (tp.active) {
              b.scratch_[tidx] += m;
            } else {
              // Rotational-noise inflow into a frozen layer: deposit in stored
              // units so the effective value (stored * beta) equals m, keeping
              // the per-partition caches consistent incrementally.
              if (tp.log_beta < BeliefGrid::kFlattenLogBeta) b.flatten_partition(tt);
              const double add = m * std::exp(-tp.log_beta);
              double& cell = b.values_[tidx];
              const double old = cell;
              cell = old + add;
              tp.stored_sum += add;
              tp.stored_vlogv +=
                  cell * std::log(cell) - (old > 0.0 ? old * std::log(old) : 0.0);
              if (cell > tp.p_max) {
                tp.p_max = cell;
                tp.p_max_index = tidx;
              }
            }
          }
        }
      }
    }

    double total = 0.0;
    for (int it = 0; it < ntheta; ++it) {
      const auto& p = b.partitions_[it];
      const std::size_t base = b.linear_index(0, 0, it);
      if (p.active) {
        for (std::size_t i = 0; i < layer_cells; ++i) {
          const double v = b.scratch_[base + i];
          b.values_[base + i] = v;
          total += v;
        }
      } else {
        total += p.stored_sum * std::exp(p.log_beta);
      }
    }
    if (!(total >= 1e-300))
      throw std::runtime_error("belief mass underflow during motion update");
    survived *= total / before;
    b.scale_all(1.0 / total);
    before = 1.0;
  }

  stats.mass_lost = std::max(0.0, 1.0 - survived);
  return stats;
}

}  // namespace gridloc
