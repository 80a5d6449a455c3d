#include "gridloc/localizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gridloc {

namespace {

double parse_number(const std::string& token, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError("expected a number, got '" + token + "'", line);
  }
  if (used != token.size()) throw ParseError("trailing junk in number '" + token + "'", line);
  return v;
}

int parse_int(const std::string& token, int line) {
  const double v = parse_number(token, line);
  const int i = static_cast<int>(std::llround(v));
  if (v != i) throw ParseError("expected an integer, got '" + token + "'", line);
  return i;
}

bool parse_bool(const std::string& token, int line) {
  if (token == "1" || token == "true") return true;
  if (token == "0" || token == "false") return false;
  throw ParseError("expected a boolean (0/1/true/false), got '" + token + "'", line);
}

}  // namespace

int LocalizerConfig::theta_bins() const {
  return std::max(1, static_cast<int>(std::llround(360.0 / theta_res_deg)));
}

MotionNoise LocalizerConfig::motion_noise() const {
  MotionNoise n;
  n.trans_sigma_per_meter = trans_sigma_per_meter;
  n.rot_sigma_per_meter = rot_sigma_per_meter;
  n.rot_sigma_per_radian = rot_sigma_per_radian;
  n.cutoff = noise_cutoff;
  n.max_atomic_trans = max_atomic_trans;
  n.max_atomic_rot = max_atomic_rot;
  return n;
}

BeamModelParams LocalizerConfig::beam_params() const {
  return BeamModelParams::create(sensor_sigma, sensor_c_r, sensor_c_d, sensor_n_bins,
                                 sensor_max_range);
}

FilterConfig LocalizerConfig::filter_config() const {
  FilterConfig f;
  f.kind = filter;
  f.entropy_tolerance = entropy_tolerance;
  f.distance_gamma = distance_gamma;
  return f;
}

void LocalizerConfig::validate() const {
  if (!(cell_size >= 0.01 && cell_size <= 2.0))
    throw std::invalid_argument("cell_size must be in [0.01, 2.0] meters");
  if (!(theta_res_deg > 0.0 && theta_res_deg <= 120.0))
    throw std::invalid_argument("theta_res_deg must be in (0, 120] degrees");
  if (trans_sigma_per_meter < 0.0 || rot_sigma_per_meter < 0.0 || rot_sigma_per_radian < 0.0)
    throw std::invalid_argument("noise sigmas must be non-negative");
  if (!(noise_cutoff > 0.0)) throw std::invalid_argument("noise_cutoff must be positive");
  if (!(max_atomic_trans > 0.0 && max_atomic_rot > 0.0))
    throw std::invalid_argument("atomic step limits must be positive");
  beam_params().validate();
  if (!(entropy_tolerance >= 0.0))
    throw std::invalid_argument("entropy_tolerance must be non-negative");
  if (!(distance_gamma >= 0.0 && distance_gamma <= 1.0))
    throw std::invalid_argument("distance_gamma must be in [0, 1]");
  if (!(epsilon_scale >= 0.0))
    throw std::invalid_argument("epsilon_scale must be non-negative");
  if (prior == PriorKind::kGaussian && !(prior_sigma_xy > 0.0 && prior_sigma_theta > 0.0))
    throw std::invalid_argument("gaussian prior sigmas must be positive");
  if (beam_stride < 1) throw std::invalid_argument("beam_stride must be at least 1");
}

LocalizerConfig parse_config(std::istream& is) {
  LocalizerConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string value;
    if (!(ls >> value)) throw ParseError("missing value for key '" + key + "'", line_no);
    std::string extra;
    if (ls >> extra) throw ParseError("unexpected token '" + extra + "'", line_no);

    if (key == "cell_size") c.cell_size = parse_number(value, line_no);
    else if (key == "theta_res_deg") c.theta_res_deg = parse_number(value, line_no);
    else if (key == "trans_sigma_per_meter") c.trans_sigma_per_meter = parse_number(value, line_no);
    else if (key == "rot_sigma_per_meter") c.rot_sigma_per_meter = parse_number(value, line_no);
    else if (key == "rot_sigma_per_radian") c.rot_sigma_per_radian = parse_number(value, line_no);
    else if (key == "noise_cutoff") c.noise_cutoff = parse_number(value, line_no);
    else if (key == "max_atomic_trans") c.max_atomic_trans = parse_number(value, line_no);
    else if (key == "max_atomic_rot") c.max_atomic_rot = parse_number(value, line_no);
    else if (key == "sensor_sigma") c.sensor_sigma = parse_number(value, line_no);
    else if (key == "sensor_c_r") c.sensor_c_r = parse_number(value, line_no);
    else if (key == "sensor_c_d") c.sensor_c_d = parse_number(value, line_no);
    else if (key == "sensor_n_bins") c.sensor_n_bins = parse_int(value, line_no);
    else if (key == "sensor_max_range") c.sensor_max_range = parse_number(value, line_no);
    else if (key == "filter") {
      try {
        c.filter = parse_filter_kind(value);
      } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), line_no);
      }
    } else if (key == "entropy_tolerance") c.entropy_tolerance = parse_number(value, line_no);
    else if (key == "distance_gamma") c.distance_gamma = parse_number(value, line_no);
    else if (key == "epsilon_scale") c.epsilon_scale = parse_number(value, line_no);
    else if (key == "prior") {
      if (value == "uniform") c.prior = PriorKind::kUniform;
      else if (value == "gaussian") c.prior = PriorKind::kGaussian;
      else throw ParseError("prior must be 'uniform' or 'gaussian'", line_no);
    } else if (key == "prior_x") c.prior_x = parse_number(value, line_no);
    else if (key == "prior_y") c.prior_y = parse_number(value, line_no);
    else if (key == "prior_theta") c.prior_theta = parse_number(value, line_no);
    else if (key == "prior_sigma_xy") c.prior_sigma_xy = parse_number(value, line_no);
    else if (key == "prior_sigma_theta") c.prior_sigma_theta = parse_number(value, line_no);
    else if (key == "beam_stride") c.beam_stride = parse_int(value, line_no);
    else if (key == "reset_on_underflow") c.reset_on_underflow = parse_bool(value, line_no);
    else throw ParseError("unknown config key '" + key + "'", line_no);
  }
  c.validate();
  return c;
}

void write_config(std::ostream& os, const LocalizerConfig& c) {
  os << std::setprecision(17);
  os << "cell_size " << c.cell_size << "\n";
  os << "theta_res_deg " << c.theta_res_deg << "\n";
  os << "trans_sigma_per_meter " << c.trans_sigma_per_meter << "\n";
  os << "rot_sigma_per_meter " << c.rot_sigma_per_meter << "\n";
  os << "rot_sigma_per_radian " << c.rot_sigma_per_radian << "\n";
  os << "noise_cutoff " << c.noise_cutoff << "\n";
  os << "max_atomic_trans " << c.max_atomic_trans << "\n";
  os << "max_atomic_rot " << c.max_atomic_rot << "\n";
  os << "sensor_sigma " << c.sensor_sigma << "\n";
  os << "sensor_c_r " << c.sensor_c_r << "\n";
  os << "sensor_c_d " << c.sensor_c_d << "\n";
  os << "sensor_n_bins " << c.sensor_n_bins << "\n";
  os << "sensor_max_range " << c.sensor_max_range << "\n";
  os << "filter " << filter_kind_name(c.filter) << "\n";
  os << "entropy_tolerance " << c.entropy_tolerance << "\n";
  os << "distance_gamma " << c.distance_gamma << "\n";
  os << "epsilon_scale " << c.epsilon_scale << "\n";
  os << "prior " << (c.prior == PriorKind::kUniform ? "uniform" : "gaussian") << "\n";
  os << "prior_x " << c.prior_x << "\n";
  os << "prior_y " << c.prior_y << "\n";
  os << "prior_theta " << c.prior_theta << "\n";
  os << "prior_sigma_xy " << c.prior_sigma_xy << "\n";
  os << "prior_sigma_theta " << c.prior_sigma_theta << "\n";
  os << "beam_stride " << c.beam_stride << "\n";
  os << "reset_on_underflow " << (c.reset_on_underflow ? 1 : 0) << "\n";
}

std::size_t state_count(double width_m, double height_m, double cell_size,
                        double theta_res_deg) {
  if (!(cell_size > 0.0) || !(theta_res_deg > 0.0))
    throw std::invalid_argument("resolutions must be positive");
  const auto nx = static_cast<std::size_t>(std::max<long long>(1, std::llround(width_m / cell_size)));
  const auto ny = static_cast<std::size_t>(std::max<long long>(1, std::llround(height_m / cell_size)));
  const auto nt = static_cast<std::size_t>(std::max<long long>(1, std::llround(360.0 / theta_res_deg)));
  return nx * ny * nt;
}

std::vector<LogEvent> parse_log(std::istream& is) {
  std::vector<LogEvent> events;
  std::string line;
  int line_no = 0;
  double last_t = -std::numeric_limits<double>::infinity();
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;

    LogEvent ev;
    std::string tok;
    if (tag == "ODOM") {
      ev.type = LogEvent::Type::kOdometry;
      if (!(ls >> tok)) throw ParseError("ODOM: missing timestamp", line_no);
      ev.t = parse_number(tok, line_no);
      if (!(ls >> tok)) throw ParseError("ODOM: missing translation", line_no);
      ev.odom.delta_trans = parse_number(tok, line_no);
      if (!(ls >> tok)) throw ParseError("ODOM: missing rotation", line_no);
      ev.odom.delta_rot = parse_number(tok, line_no);
    } else if (tag == "SCAN") {
      ev.type = LogEvent::Type::kScan;
      if (!(ls >> tok)) throw ParseError("SCAN: missing timestamp", line_no);
      ev.t = parse_number(tok, line_no);
      if (!(ls >> tok)) throw ParseError("SCAN: missing beam count", line_no);
      const int k = parse_int(tok, line_no);
      if (k < 0) throw ParseError("SCAN: negative beam count", line_no);
      ev.scan.reserve(k);
      for (int i = 0; i < k; ++i) {
        if (!(ls >> tok)) throw ParseError("SCAN: missing bearing for beam " + std::to_string(i), line_no);
        const double bearing = parse_number(tok, line_no);
        if (!(ls >> tok)) throw ParseError("SCAN: missing range for beam " + std::to_string(i), line_no);
        const double range = parse_number(tok, line_no);
        if (range < 0.0) throw ParseError("SCAN: negative range", line_no);
        ev.scan.emplace_back(bearing, range);
      }
    } else {
      throw ParseError("unknown event tag '" + tag + "'", line_no);
    }
    if (ls >> tok) throw ParseError("unexpected token '" + tok + "'", line_no);
    if (ev.t < last_t) throw ParseError("timestamp goes backwards", line_no);
    last_t = ev.t;
    events.push_back(std::move(ev));
  }
  return events;
}

void write_log(std::ostream& os, std::span<const LogEvent> events) {
  os << std::setprecision(17);
  for (const LogEvent& ev : events) {
    if (ev.type == LogEvent::Type::kOdometry) {
      os << "ODOM " << ev.t << ' ' << ev.odom.delta_trans << ' ' << ev.odom.delta_rot << "\n";
    } else {
      os << "SCAN " << ev.t << ' ' << ev.scan.size();
      for (const auto& [bearing, range] : ev.scan) os << ' ' << bearing << ' ' << range;
      os << "\n";
    }
  }
}

Localizer::Localizer(const OccupancyGrid& map, const LocalizerConfig& config)
    : map_(map),
      config_((config.validate(), config)),
      table_(SensorTable::build(map_, config_.beam_params(), config_.theta_bins(),
                                config_.cell_size)),
      belief_(BeliefGrid::uniform(map_, config_.theta_bins(), config_.cell_size)) {
  init_belief();
  last_estimate_ = make_estimate(0.0);
}

Localizer::Localizer(const OccupancyGrid& map, const LocalizerConfig& config,
                     SensorTable table)
    : map_(map),
      config_((config.validate(), config)),
      table_(std::move(table)),
      belief_(BeliefGrid::uniform(map_, config_.theta_bins(), config_.cell_size)) {
  if (table_.nx() != belief_.nx() || table_.ny() != belief_.ny() ||
      table_.theta_bins() != config_.theta_bins() ||
      table_.cell_size() != belief_.cell_size() ||
      table_.origin_x() != belief_.origin_x() || table_.origin_y() != belief_.origin_y())
    throw std::invalid_argument("sensor table geometry does not match the grid");
  if (table_.params().n_bins != config_.sensor_n_bins ||
      table_.params().max_range() != config_.sensor_max_range)
    throw std::invalid_argument("sensor table range binning does not match the config");
  table_.attach_map(map_);
  init_belief();
  last_estimate_ = make_estimate(0.0);
}

void Localizer::init_belief() {
  if (config_.prior == PriorKind::kGaussian)
    belief_ = BeliefGrid::gaussian(map_, config_.theta_bins(),
                                   {config_.prior_x, config_.prior_y, config_.prior_theta},
                                   config_.prior_sigma_xy, config_.prior_sigma_theta,
                                   config_.cell_size);
  else
    belief_ = BeliefGrid::uniform(map_, config_.theta_bins(), config_.cell_size);
  const auto free_states =
      static_cast<double>(belief_.free_cell_count()) * belief_.ntheta();
  belief_.set_epsilon(config_.epsilon_scale > 0.0 ? config_.epsilon_scale / free_states : 0.0);
  belief_.set_replay_noise(config_.motion_noise());
}

void Localizer::handle_odometry(const OdometryReading& reading) {
  pending_.delta_trans += reading.delta_trans;
  pending_.delta_rot += reading.delta_rot;
  has_pending_ = true;
  ++stats_.odom_events;
  stats_.total_distance += std::abs(reading.delta_trans);
  stats_.total_rotation += std::abs(reading.delta_rot);
}

void Localizer::flush_motion() {
  if (!has_pending_) return;
  predict(belief_, pending_, config_.motion_noise(), Boundary::kClip);
  pending_ = OdometryReading{};
  has_pending_ = false;
}

PoseEstimate Localizer::make_estimate(double t) const {
  PoseEstimate e;
  e.t = t;
  const auto mp = belief_.max_posterior();
  e.pose = mp.pose;
  e.prob = mp.prob;
  e.entropy = belief_.entropy();
  e.active_fraction = belief_.active_cell_stats().fraction;
  return e;
}

PoseEstimate Localizer::handle_scan(double t,
                                    std::span<const std::pair<double, double>> beams,
                                    std::vector<BeamRecord>* records) {
  const auto t0 = std::chrono::steady_clock::now();
  flush_motion();

  const FilterConfig fcfg = config_.filter_config();
  double h_before = 0.0;
  if (fcfg.kind == FilterKind::kEntropy) h_before = belief_.entropy();

  struct Decision {
    int index;
    double bearing, range;
    FilterDecision d;
  };
  std::vector<Decision> decisions;
  for (std::size_t i = 0; i < beams.size(); i += config_.beam_stride) {
    const auto& [bearing, range] = beams[i];
    const Beam beam{bearing, config_.sensor_max_range};
    decisions.push_back({static_cast<int>(i), bearing, range,
                         evaluate_beam_filter(fcfg, belief_, table_, beam, range, h_before)});
  }

  std::vector<const Decision*> accepted;
  for (const Decision& dec : decisions)
    if (dec.d.accept) accepted.push_back(&dec);
  std::stable_sort(accepted.begin(), accepted.end(),
                   [](const Decision* a, const Decision* b) { return a->bearing < b->bearing; });

  const bool same_geom =
      table_.nx() == belief_.nx() && table_.ny() == belief_.ny() &&
      table_.cell_size() == belief_.cell_size() &&
      table_.origin_x() == belief_.origin_x() && table_.origin_y() == belief_.origin_y();

  bool lost = false;
  std::vector<int> tbin(belief_.ntheta());
  for (const Decision* dec : accepted) {
    const int mb = table_.params().measured_bin(dec->range);
    const double p_avg = table_.average_likelihood(mb);
    if (!(p_avg > 0.0)) {
      // No state of the map could have produced this reading at all; treat it
      // like an underflow instead of feeding a zero normalizer downstream.
      lost = true;
      ++stats_.underflows;
      if (config_.reset_on_underflow) init_belief();
      continue;
    }
    for (int it = 0; it < belief_.ntheta(); ++it)
      tbin[it] = table_.theta_bin(belief_.layer_heading(it) + dec->bearing);
    auto fn = [&](int ix, int iy, int it) {
      if (same_geom) return table_.likelihood(table_.expected_bin(ix, iy, tbin[it]), mb);
      int tix, tiy;
      if (!table_.cell_of(belief_.cell_pose(ix, iy, it), tix, tiy)) return p_avg;
      return table_.likelihood(table_.expected_bin(tix, tiy, tbin[it]), mb);
    };
    const PerceptionStats ps = belief_.apply_perception(fn, p_avg);
    if (!ps.ok) {
      lost = true;
      ++stats_.underflows;
      if (config_.reset_on_underflow) init_belief();
    }
  }

  PoseEstimate est = make_estimate(t);
  est.lost = lost;
  est.beams_used = static_cast<int>(accepted.size());
  est.beams_rejected = static_cast<int>(decisions.size() - accepted.size());

  ++stats_.scans;
  stats_.beams_total += static_cast<long>(decisions.size());
  stats_.beams_rejected += est.beams_rejected;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  stats_.update_seconds_total += secs;
  stats_.update_seconds_max = std::max(stats_.update_seconds_max, secs);

  if (records)
    for (const Decision& dec : decisions)
      records->push_back({t, dec.index, dec.bearing, dec.range, dec.d.accept,
                          dec.d.delta_entropy, dec.d.p_short});

  last_estimate_ = est;
  return est;
}

PoseEstimate Localizer::step(const LogEvent& event, std::vector<BeamRecord>* records) {
  seen_event_ = true;
  last_t_ = event.t;
  if (event.type == LogEvent::Type::kOdometry) {
    handle_odometry(event.odom);
    PoseEstimate e = last_estimate_;
    e.t = event.t;
    last_estimate_ = e;
    return e;
  }
  return handle_scan(event.t, event.scan, records);
}

void Localizer::write_trajectory_header(std::ostream& os) {
  os << "t,x,y,theta,prob,entropy,active_fraction\n";
}

void Localizer::write_trajectory_row(std::ostream& os, const PoseEstimate& e) {
  os << std::setprecision(12) << e.t << ',' << e.pose.x << ',' << e.pose.y << ','
     << e.pose.theta << ',' << e.prob << ',' << e.entropy << ',' << e.active_fraction
     << "\n";
}

void Localizer::write_beam_header(std::ostream& os) {
  os << "t,beam_index,bearing,range,accepted,delta_entropy,p_short\n";
}

void Localizer::write_beam_row(std::ostream& os, const BeamRecord& r) {
  os << std::setprecision(12) << r.t << ',' << r.index << ',' << r.bearing << ','
     << r.range << ',' << (r.accepted ? 1 : 0) << ',' << r.delta_entropy << ','
     << r.p_short << "\n";
}

std::vector<PoseEstimate> Localizer::parse_trajectory_csv(std::istream& is) {
  std::vector<PoseEstimate> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("t,", 0) == 0) continue;  // header
    std::istringstream ls(line);
    PoseEstimate e;
    char comma;
    if (!(ls >> e.t >> comma >> e.pose.x >> comma >> e.pose.y >> comma >> e.pose.theta >>
          comma >> e.prob >> comma >> e.entropy >> comma >> e.active_fraction))
      throw ParseError("malformed trajectory row", line_no);
    out.push_back(e);
  }
  return out;
}

RunStats Localizer::process_log(std::span<const LogEvent> events,
                                std::ostream* trajectory_csv, std::ostream* beam_csv,
                                std::vector<PoseEstimate>* estimates) {
  if (trajectory_csv) write_trajectory_header(*trajectory_csv);
  if (beam_csv) write_beam_header(*beam_csv);
  std::vector<BeamRecord> records;
  for (const LogEvent& ev : events) {
    records.clear();
    const PoseEstimate est = step(ev, beam_csv ? &records : nullptr);
    if (ev.type == LogEvent::Type::kScan) {
      if (trajectory_csv) write_trajectory_row(*trajectory_csv, est);
      if (beam_csv)
        for (const BeamRecord& r : records) write_beam_row(*beam_csv, r);
      if (estimates) estimates->push_back(est);
    }
  }
  return stats_;
}

}  // namespace gridloc
