#include "enacull/fov.hpp"

#include <algorithm>
#include <numbers>

#include <fmt/format.h>

#include "enacull/table.hpp"

namespace enacull::fov {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

void require_unit(const Vec3& v, const char* what) {
  const double n = norm(v);
  require(std::fabs(n - 1.0) <= kUnitTolerance, ErrorCode::kGeometry,
          fmt::format("{} is not a unit vector (norm {})", what, n));
}

/// Spin-plane basis: u points at bin 0's center, w = axis x u.
struct SpinFrame {
  Vec3 u;
  Vec3 w;
};

SpinFrame spin_frame(const Vec3& axis) {
  const Vec3 north{0.0, 0.0, 1.0};
  Vec3 p = north - dot(north, axis) * axis;
  if (norm(p) < 1e-9) {
    const Vec3 x{1.0, 0.0, 0.0};
    p = x - dot(x, axis) * axis;
  }
  const Vec3 u = normalized(p);
  return SpinFrame{u, cross(axis, u)};
}

/// Azimuth of `dir` in the spin plane, degrees in [0, 360).
double spin_azimuth(const Vec3& dir, const SpinFrame& frame) {
  double phi = std::atan2(dot(dir, frame.w), dot(dir, frame.u)) * kRadToDeg;
  if (phi < 0.0) phi += 360.0;
  if (phi >= 360.0) phi -= 360.0;
  return phi;
}

int wrap_bin(int k) { return ((k % kAngleBins) + kAngleBins) % kAngleBins; }

}  // namespace

void FovConfig::validate() const {
  require(fov_diameter_deg > 0.0 && magnetosphere_radius_re > 0.0 && earth_radius_km > 0.0 &&
              spins_per_sample > 0 && spin_period_s > 0.0,
          ErrorCode::kConfig, "FOV configuration values must all be positive");
}

double angular_separation(const Vec3& a, const Vec3& b) {
  require_unit(a, "first direction");
  require_unit(b, "second direction");
  return std::atan2(norm(cross(a, b)), dot(a, b)) * kRadToDeg;
}

Vec3 bin_center(const Vec3& spin_axis, int bin) {
  const SpinFrame frame = spin_frame(spin_axis);
  const double phi = kAngleBinWidthDeg * bin * kDegToRad;
  return std::cos(phi) * frame.u + std::sin(phi) * frame.w;
}

AngleBin nearest_spin_bin(const Vec3& target_dir, const Vec3& spin_axis) {
  require_unit(target_dir, "target direction");
  require_unit(spin_axis, "spin axis");
  const double off_axis = std::atan2(norm(cross(target_dir, spin_axis)), dot(target_dir, spin_axis));
  require(off_axis >= kDegenerateAxisRad && off_axis <= std::numbers::pi - kDegenerateAxisRad,
          ErrorCode::kGeometry, "target is aligned with the spin axis; azimuth undefined");

  const double x = spin_azimuth(target_dir, spin_frame(spin_axis)) / kAngleBinWidthDeg;
  const double lower = std::floor(x);
  const double frac = x - lower;
  const int lo = static_cast<int>(lower);
  constexpr double kTie = 1e-9;
  int k;
  if (frac < 0.5 - kTie) {
    k = wrap_bin(lo);
  } else if (frac > 0.5 + kTie) {
    k = wrap_bin(lo + 1);
  } else {
    k = std::min(wrap_bin(lo), wrap_bin(lo + 1));
  }
  return AngleBin(k);
}

double exclusion_half_width(Body body, double distance_km, const FovConfig& config) {
  double half = 0.5 * config.fov_diameter_deg;
  if (body == Body::kEarth) {
    require(distance_km > 0.0, ErrorCode::kGeometry, "earth distance must be positive");
    const double ratio =
        config.magnetosphere_radius_re * config.earth_radius_km / distance_km;
    half += std::asin(std::min(1.0, ratio)) * kRadToDeg;
  }
  return half;
}

BinSet bad_bins_for_direction(const Vec3& body_dir, const Vec3& spin_axis, double half_width_deg) {
  BinSet bad;
  const double sin_lat = std::clamp(dot(body_dir, spin_axis), -1.0, 1.0);
  const double lat = std::asin(std::fabs(sin_lat)) * kRadToDeg;
  if (lat > half_width_deg) return bad;

  const SpinFrame frame = spin_frame(spin_axis);
  const double in_plane = std::hypot(dot(body_dir, frame.u), dot(body_dir, frame.w));
  const bool has_azimuth = in_plane > std::sin(kDegenerateAxisRad);
  const double cos_half = std::cos(half_width_deg * kDegToRad);

  auto within = [&](int k) {
    return dot(body_dir, bin_center(spin_axis, k)) >= cos_half;
  };

  if (!has_azimuth || half_width_deg >= 90.0) {
    for (int k = 0; k < kAngleBins; ++k) {
      if (within(k)) bad.set(static_cast<std::size_t>(k));
    }
    if (has_azimuth) bad.set(static_cast<std::size_t>(nearest_spin_bin(body_dir, spin_axis).index()));
    return bad;
  }

  const int nearest = nearest_spin_bin(body_dir, spin_axis).index();
  bad.set(static_cast<std::size_t>(nearest));
  const int reach = static_cast<int>(half_width_deg / kAngleBinWidthDeg) + 1;
  for (int d = -reach; d <= reach; ++d) {
    const int k = wrap_bin(nearest + d);
    if (within(k)) bad.set(static_cast<std::size_t>(k));
  }
  return bad;
}

BinSet mark_bad_bins(double time_s, Body body, const PointingLog& pointing,
                     const BodyEphemeris& ephemeris, const FovConfig& config) {
  require(ephemeris.body == body, ErrorCode::kContract, "ephemeris body mismatch");
  const Vec3& axis = pointing.at(time_s).spin_axis;
  const Vec3 position = ephemeris.position_at(time_s);
  const double distance = norm(position);
  require(distance > 0.0, ErrorCode::kGeometry, "body coincides with spacecraft");
  return bad_bins_for_direction((1.0 / distance) * position, axis,
                                exclusion_half_width(body, distance, config));
}

// ---------------------------------------------------------------------------

PointingLog::PointingLog(std::vector<PointingRecord> records) {
  require(!records.empty(), ErrorCode::kCoverage, "empty pointing log");
  std::stable_sort(records.begin(), records.end(),
                   [](const auto& a, const auto& b) { return a.valid_from_s < b.valid_from_s; });
  for (const auto& r : records) {
    require_unit(r.spin_axis, "pointing spin axis");
    if (!records_.empty() && records_.back().valid_from_s == r.valid_from_s) {
      const auto& prev = records_.back().spin_axis;
      require(prev.x == r.spin_axis.x && prev.y == r.spin_axis.y && prev.z == r.spin_axis.z,
              ErrorCode::kValidation,
              fmt::format("conflicting pointing records at valid_from {}", r.valid_from_s));
      continue;
    }
    records_.push_back(r);
  }
}

const PointingRecord& PointingLog::at(double time_s) const {
  const auto it = std::upper_bound(records_.begin(), records_.end(), time_s,
                                   [](double t, const auto& r) { return t < r.valid_from_s; });
  require(it != records_.begin(), ErrorCode::kCoverage,
          fmt::format("no pointing record covers time {}", time_s));
  return *std::prev(it);
}

Vec3 BodyEphemeris::position_at(double time_s) const {
  require(!samples.empty() && time_s >= samples.front().epoch_s &&
              time_s <= samples.back().epoch_s,
          ErrorCode::kCoverage,
          fmt::format("no {} ephemeris brackets time {}", body_name(body), time_s));
  const auto it = std::lower_bound(samples.begin(), samples.end(), time_s,
                                   [](const auto& s, double t) { return s.epoch_s < t; });
  if (it->epoch_s == time_s) return it->position_km;
  const auto& hi = *it;
  const auto& lo = *std::prev(it);
  const double f = (time_s - lo.epoch_s) / (hi.epoch_s - lo.epoch_s);
  return lo.position_km + f * (hi.position_km - lo.position_km);
}

std::vector<int> MaskSample::good_bins() const {
  const BinSet bad_any = merged_bad();
  std::vector<int> good;
  for (int k = 0; k < kAngleBins; ++k) {
    if (!bad_any.test(static_cast<std::size_t>(k))) good.push_back(k);
  }
  return good;
}

ExclusionMask build_masks(const std::vector<PointingRecord>& pointings,
                          const std::vector<BodyEphemeris>& ephemerides, const FovConfig& config,
                          double t0_s, double t1_s) {
  config.validate();
  const PointingLog log(pointings);
  require(t1_s >= t0_s, ErrorCode::kConfig, "mask time range is reversed");
  const double step = config.spins_per_sample * config.spin_period_s;

  ExclusionMask mask;
  for (std::size_t k = 0;; ++k) {
    const double t = t0_s + static_cast<double>(k) * step;
    if (t > t1_s) break;
    MaskSample sample;
    sample.epoch_s = t;
    for (const auto& eph : ephemerides) {
      sample.bad[static_cast<std::size_t>(eph.body)] |=
          mark_bad_bins(t, eph.body, log, eph, config);
    }
    mask.samples.push_back(sample);
  }
  return mask;
}

std::vector<std::uint8_t> cell_mask(const ExclusionMask& mask,
                                    const std::vector<TimeInterval>& times) {
  const std::size_t n_time = times.size();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(kBodyCount) * kAngleBins * n_time, 0);
  const auto& s = mask.samples;
  auto apply = [&](const MaskSample& sample, std::size_t t) {
    for (int b = 0; b < kBodyCount; ++b) {
      for (int a = 0; a < kAngleBins; ++a) {
        if (sample.bad[static_cast<std::size_t>(b)].test(static_cast<std::size_t>(a))) {
          out[(static_cast<std::size_t>(b) * kAngleBins + a) * n_time + t] = 1;
        }
      }
    }
  };
  for (std::size_t t = 0; t < n_time; ++t) {
    const double start = times[t].start_epoch_s;
    const double end = start + times[t].duration_s;
    auto it = std::upper_bound(s.begin(), s.end(), start,
                               [](double v, const MaskSample& m) { return v < m.epoch_s; });
    if (it != s.begin()) apply(*std::prev(it), t);
    for (; it != s.end() && it->epoch_s < end; ++it) apply(*it, t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

std::vector<PointingRecord> read_pointing(std::istream& in) {
  table::Reader reader(in, "pointing log");
  reader.require_columns({"valid_from_s", "x", "y", "z"});
  std::vector<PointingRecord> out;
  while (reader.next()) {
    out.push_back(PointingRecord{reader.as_double("valid_from_s"),
                                 Vec3{reader.as_double("x"), reader.as_double("y"),
                                      reader.as_double("z")}});
  }
  return out;
}

std::vector<PointingRecord> read_pointing(const std::filesystem::path& path) {
  auto in = table::open_input(path);
  return read_pointing(in);
}

std::vector<BodyEphemeris> read_ephemeris(std::istream& in) {
  table::Reader reader(in, "ephemeris");
  reader.require_columns({"body", "epoch_s", "x_km", "y_km", "z_km"});
  std::array<BodyEphemeris, kBodyCount> bodies;
  std::array<bool, kBodyCount> seen{};
  for (int b = 0; b < kBodyCount; ++b) bodies[b].body = static_cast<Body>(b);
  while (reader.next()) {
    Body body;
    try {
      body = parse_body(reader.field("body"));
    } catch (const Error& e) {
      throw Error(ErrorCode::kValidation, reader.where() + ": " + e.what());
    }
    EphemerisSample sample{reader.as_double("epoch_s"),
                           Vec3{reader.as_double("x_km"), reader.as_double("y_km"),
                                reader.as_double("z_km")}};
    require(norm(sample.position_km) > 0.0, ErrorCode::kValidation,
            reader.where() + ": body distance must be positive");
    auto& samples = bodies[static_cast<std::size_t>(body)].samples;
    require(samples.empty() || samples.back().epoch_s < sample.epoch_s, ErrorCode::kValidation,
            reader.where() + ": ephemeris samples must be strictly time-ordered per body");
    samples.push_back(sample);
    seen[static_cast<std::size_t>(body)] = true;
  }
  std::vector<BodyEphemeris> out;
  for (int b = 0; b < kBodyCount; ++b) {
    if (seen[b]) out.push_back(bodies[b]);
  }
  return out;
}

std::vector<BodyEphemeris> read_ephemeris(const std::filesystem::path& path) {
  auto in = table::open_input(path);
  return read_ephemeris(in);
}

void write_mask(std::ostream& out, const ExclusionMask& mask) {
  out << "epoch_s,body,bad_bins\n";
  for (const auto& sample : mask.samples) {
    for (int b = 0; b < kBodyCount; ++b) {
      std::string bins;
      for (int k = 0; k < kAngleBins; ++k) {
        if (!sample.bad[static_cast<std::size_t>(b)].test(static_cast<std::size_t>(k))) continue;
        if (!bins.empty()) bins.push_back(';');
        bins += std::to_string(k);
      }
      out << fmt::format("{},{},{}\n", sample.epoch_s, body_name(static_cast<Body>(b)), bins);
    }
  }
}

ExclusionMask read_mask(std::istream& in) {
  table::Reader reader(in, "mask");
  reader.require_columns({"epoch_s", "body", "bad_bins"});
  ExclusionMask mask;
  while (reader.next()) {
    const double epoch = reader.as_double("epoch_s");
    if (mask.samples.empty() || mask.samples.back().epoch_s != epoch) {
      require(mask.samples.empty() || mask.samples.back().epoch_s < epoch,
              ErrorCode::kValidation, reader.where() + ": mask samples must be time-ordered");
      mask.samples.push_back(MaskSample{epoch, {}});
    }
    const Body body = parse_body(reader.field("body"));
    const auto& text = reader.field("bad_bins");
    if (text.empty()) continue;
    for (const auto& part : table::split(text, ';')) {
      const int k = std::stoi(part);
      require(k >= 0 && k < kAngleBins, ErrorCode::kValidation, reader.where() + ": bad bin");
      mask.samples.back().bad[static_cast<std::size_t>(body)].set(static_cast<std::size_t>(k));
    }
  }
  return mask;
}

}  // namespace enacull::fov
