#pragma once

#include <vector>

#include "gridloc/util.hpp"

namespace gridloc {

class BeliefGrid;

// Zero-centered Gaussian odometry error model. Error magnitudes scale with
// the motion: sigma_trans = trans_sigma_per_meter * |trans|, sigma_rot =
// rot_sigma_per_meter * |trans| + rot_sigma_per_radian * |rot|. Tails are cut
// at cutoff sigmas and the truncated mass renormalized. Readings larger than
// the atomic maxima are split into a sequence of rotate-then-translate steps.
struct MotionNoise {
  double trans_sigma_per_meter = 0.1;
  double rot_sigma_per_meter = 0.05;
  double rot_sigma_per_radian = 0.0;
  double cutoff = 3.0;
  double max_atomic_trans = 0.25;  // meters
  double max_atomic_rot = 0.2;     // radians
};

// Relative motion reported by odometry: signed translation along the heading
// after applying the signed rotation.
struct OdometryReading {
  double delta_trans = 0.0;  // meters
  double delta_rot = 0.0;    // radians
};

struct AtomicStep {
  double rot = 0.0;
  double trans = 0.0;
};

std::vector<AtomicStep> decompose(const OdometryReading& reading, const MotionNoise& noise);

struct KernelEntry {
  int dx = 0;
  int dy = 0;
  int dtheta = 0;
  double weight = 0.0;
};

// Finitely supported normalized kernel over grid offsets.
struct MotionKernel {
  std::vector<KernelEntry> entries;

  double total_weight() const;
};

// Kernel for a single atomic step as seen by one orientation layer whose
// absolute heading is `heading`. dtheta covers rotational noise only; the
// commanded rotation itself is tracked by the belief's heading offset.
// Throws std::runtime_error if pruning removes all support.
MotionKernel atomic_layer_kernel(const MotionNoise& noise, const AtomicStep& step,
                                 double heading, double cell_size, double theta_res);

// Kernel for a whole reading as seen by one orientation layer whose absolute
// heading starts at `heading`: atomic step kernels composed sequentially,
// with each intermediate translation steered by the exact commanded rotation
// so far plus the accumulated (bin-quantized) rotational noise. dtheta is the
// noise-bin offset only, matching how the grid convolution treats layers.
MotionKernel motion_kernel(const MotionNoise& noise, const OdometryReading& reading,
                           double heading, double cell_size, double theta_res);

enum class Boundary {
  kClip,   // mass pushed off-map or into occupied cells is dropped, then renormalized
  kTorus,  // x/y wrap around (test grids)
};

struct PredictStats {
  double mass_lost = 0.0;  // fraction dropped at boundaries/occupied cells
  int atomic_steps = 0;
};

// Convolves the belief with the motion kernel of each atomic step of the
// reading. Active orientation layers are updated in place; passive layers
// defer their own motion until reactivation, but still receive the
// rotational-noise inflow from active neighbors. theta always wraps.
PredictStats predict(BeliefGrid& belief, const OdometryReading& reading,
                     const MotionNoise& noise, Boundary boundary = Boundary::kClip);

}  // namespace gridloc
