#include "gridloc/filters.hpp"

#include <limits>
#include <stdexcept>

namespace gridloc {

const char* filter_kind_name(FilterKind kind) {
  switch (kind) {
    case FilterKind::kNone: return "none";
    case FilterKind::kEntropy: return "entropy";
    case FilterKind::kDistance: return "distance";
  }
  return "?";
}

FilterKind parse_filter_kind(const std::string& name) {
  if (name == "none") return FilterKind::kNone;
  if (name == "entropy") return FilterKind::kEntropy;
  if (name == "distance") return FilterKind::kDistance;
  throw std::invalid_argument("unknown filter kind: " + name);
}

double p_short_conditional(const BeliefGrid& belief, const SensorTable& table,
                           const Beam& beam, double measured) {
  const int mb = table.params().measured_bin(measured);
  const double eps = belief.epsilon();
  double num = 0.0, den = 0.0;
  for (int it = 0; it < belief.ntheta(); ++it) {
    if (!belief.layer_active(it)) continue;
    const int tbin = table.theta_bin(belief.layer_heading(it) + beam.bearing);
    for (int iy = 0; iy < belief.ny(); ++iy) {
      for (int ix = 0; ix < belief.nx(); ++ix) {
        const double v = belief.value_at(ix, iy, it);
        if (v <= eps) continue;
        int tix, tiy;
        if (!table.cell_of(belief.cell_pose(ix, iy, it), tix, tiy)) continue;
        num += v * table.p_beyond(table.expected_bin(tix, tiy, tbin), mb);
        den += v;
      }
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

FilterDecision evaluate_beam_filter(const FilterConfig& config, const BeliefGrid& belief,
                                    const SensorTable& table, const Beam& beam,
                                    double measured, double h_before) {
  FilterDecision d;
  switch (config.kind) {
    case FilterKind::kNone:
      break;
    case FilterKind::kEntropy: {
      const int mb = table.params().measured_bin(measured);
      const double p_avg = table.average_likelihood(mb);
      if (!(p_avg > 0.0)) {
        d.accept = false;
        d.delta_entropy = std::numeric_limits<double>::infinity();
        break;
      }
      auto fn = [&](int ix, int iy, int it) {
        const Pose p = belief.cell_pose(ix, iy, it);
        int tix, tiy;
        if (!table.cell_of(p, tix, tiy)) return p_avg;  // off-table: neutral
        return table.likelihood(table.expected_bin(tix, tiy, table.theta_bin(p.theta + beam.bearing)), mb);
      };
      double h_after = 0.0;
      if (!belief.trial_entropy(fn, p_avg, &h_after)) {
        d.accept = false;
        d.delta_entropy = std::numeric_limits<double>::infinity();
        break;
      }
      d.delta_entropy = h_after - h_before;
      d.accept = d.delta_entropy <= config.entropy_tolerance;
      break;
    }
    case FilterKind::kDistance: {
      d.p_short = p_short_conditional(belief, table, beam, measured);
      d.accept = d.p_short <= config.distance_gamma;
      break;
    }
  }
  return d;
}

}  // namespace gridloc
