#include "imucal/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

namespace imucal {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void put_double(std::ostream& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

double parse_double(std::string_view s, const char* what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(std::string("cannot parse ") + what + " from '" + std::string(s) + "'");
  }
  return v;
}

long parse_long(std::string_view s, const char* what) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError(std::string("cannot parse ") + what + " from '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

// Value of `key=` inside a header line of space-separated key=value pairs.
std::string header_value(const std::string& line, const std::string& key) {
  std::istringstream in(line);
  std::string token;
  while (in >> token) {
    if (token.rfind(key + "=", 0) == 0) return token.substr(key.size() + 1);
  }
  throw FormatError("dataset header is missing '" + key + "'");
}

ojson vec_json(const Vec3& v) { return ojson::array({v.x(), v.y(), v.z()}); }

ojson quat_json(const UnitQuaternion& q) {
  const Eigen::Vector4d c = q.xyzw();
  return ojson::array({c[0], c[1], c[2], c[3]});
}

Vec3 vec_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw FormatError(what + ": expected an array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw FormatError(what + ": expected an array of 3 numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

UnitQuaternion quat_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 4) {
    throw FormatError(what + ": expected a quaternion [x, y, z, w]");
  }
  double c[4];
  for (int i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw FormatError(what + ": expected a quaternion [x, y, z, w]");
    c[i] = j[i].get<double>();
  }
  try {
    return UnitQuaternion::from_xyzw(c[0], c[1], c[2], c[3]);
  } catch (const std::invalid_argument& e) {
    throw FormatError(what + ": " + e.what());
  }
}

ojson vec_list_json(const std::vector<Vec3>& vs) {
  ojson a = ojson::array();
  for (const auto& v : vs) a.push_back(vec_json(v));
  return a;
}

std::vector<Vec3> vec_list_from(const json& j, const std::string& what) {
  if (!j.is_array()) throw FormatError(what + ": expected an array");
  std::vector<Vec3> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(vec_from(e, what));
  return out;
}

void check_version(const json& j, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected a JSON object");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer() ||
      j["format_version"].get<int>() != kFormatVersion) {
    throw FormatError(std::string(what) + ": unsupported or missing format_version");
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw FormatError(where + ": unknown key '" + item.key() + "'");
  }
}

double get_number(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw FormatError(where + "." + key + ": expected a number");
  const double v = j[key].get<double>();
  if (!std::isfinite(v)) throw FormatError(where + "." + key + ": must be finite");
  return v;
}

bool get_bool(const json& j, const char* key, bool fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) throw FormatError(where + "." + key + ": expected true or false");
  return j[key].get<bool>();
}

std::uint64_t get_seed(const json& j, const char* key, std::uint64_t fallback,
                       const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_unsigned()) {
    throw FormatError(where + "." + key + ": expected a non-negative integer");
  }
  return j[key].get<std::uint64_t>();
}

int get_int(const json& j, const char* key, int fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw FormatError(where + "." + key + ": expected an integer");
  return j[key].get<int>();
}

template <class F>
void rethrow_as_format(const std::string& where, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
}

ImuNoiseSpec noise_from_config(const json& j, double dt, const std::string& where) {
  check_keys(j, {"sigma_a", "sigma_g", "sigma_ba", "sigma_bg"}, where);
  const ImuNoiseSpec ref = ImuNoiseSpec::reference();
  ImuNoiseSpec n;
  n.sigma_a = get_number(j, "sigma_a", ref.sigma_a, where);
  n.sigma_g = get_number(j, "sigma_g", ref.sigma_g, where);
  n.sigma_ba = get_number(j, "sigma_ba", ref.sigma_ba, where);
  n.sigma_bg = get_number(j, "sigma_bg", ref.sigma_bg, where);
  n.dt = dt;
  rethrow_as_format(where, [&] { n.validate(); });
  return n;
}

}  // namespace

// ---------------------------------------------------------------- dataset

void write_dataset(std::ostream& out, const MeasurementSeries& m) {
  m.validate();
  out << "# imucal dataset format_version=" << kFormatVersion << "\n";
  out << "# num_imus=" << m.num_imus << " num_samples=" << m.num_samples << " dt=";
  put_double(out, m.dt);
  out << "\n";
  ojson noise = ojson::array();
  for (const auto& n : m.noise) noise.push_back(to_json(n));
  out << "# noise=" << noise.dump() << "\n";
  out << "k,n,ax,ay,az,gx,gy,gz\n";
  for (int k = 0; k < m.num_samples; ++k) {
    for (int n = 0; n < m.num_imus; ++n) {
      const ImuReading& r = m.at(k, n);
      out << k << ',' << n;
      for (int i = 0; i < 3; ++i) {
        out << ',';
        put_double(out, r.accel[i]);
      }
      for (int i = 0; i < 3; ++i) {
        out << ',';
        put_double(out, r.gyro[i]);
      }
      out << '\n';
    }
  }
}

MeasurementSeries read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line).rfind("# imucal dataset", 0) != 0) {
    throw FormatError("dataset: missing '# imucal dataset' header");
  }
  if (parse_long(header_value(strip_cr(line), "format_version"), "format_version") !=
      kFormatVersion) {
    throw FormatError("dataset: unsupported format_version");
  }
  MeasurementSeries m;
  if (!std::getline(in, line)) throw FormatError("dataset: truncated header");
  line = strip_cr(line);
  m.num_imus = static_cast<int>(parse_long(header_value(line, "num_imus"), "num_imus"));
  m.num_samples = static_cast<int>(parse_long(header_value(line, "num_samples"), "num_samples"));
  m.dt = parse_double(header_value(line, "dt"), "dt");
  if (m.num_imus < 2 || m.num_samples < 1 || !(m.dt > 0.0) || !std::isfinite(m.dt)) {
    throw FormatError("dataset: need num_imus >= 2, num_samples >= 1 and dt > 0");
  }
  if (!std::getline(in, line)) throw FormatError("dataset: truncated header");
  line = strip_cr(line);
  const std::string noise_prefix = "# noise=";
  if (line.rfind(noise_prefix, 0) != 0) throw FormatError("dataset: missing noise header");
  json noise;
  try {
    noise = json::parse(line.substr(noise_prefix.size()));
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: bad noise header: ") + e.what());
  }
  if (!noise.is_array() || static_cast<int>(noise.size()) != m.num_imus) {
    throw FormatError("dataset: noise header must list one spec per IMU");
  }
  for (const auto& n : noise) m.noise.push_back(noise_from_json(n));
  if (!std::getline(in, line) || strip_cr(line) != "k,n,ax,ay,az,gx,gy,gz") {
    throw FormatError("dataset: missing column header");
  }

  m.readings.resize(static_cast<std::size_t>(m.num_imus) * m.num_samples);
  std::size_t count = 0;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 8) throw FormatError("dataset: expected 8 fields in row " + std::to_string(count));
    const long k = parse_long(fields[0], "k");
    const long n = parse_long(fields[1], "n");
    const long expected_k = static_cast<long>(count / m.num_imus);
    const long expected_n = static_cast<long>(count % m.num_imus);
    if (k != expected_k || n != expected_n) {
      throw FormatError("dataset: rows must be ordered by k then n (row " + std::to_string(count) + ")");
    }
    if (count >= m.readings.size()) throw FormatError("dataset: more rows than declared");
    ImuReading& r = m.readings[count];
    for (int i = 0; i < 3; ++i) r.accel[i] = parse_double(fields[2 + i], "accel");
    for (int i = 0; i < 3; ++i) r.gyro[i] = parse_double(fields[5 + i], "gyro");
    ++count;
  }
  if (count != m.readings.size()) {
    throw FormatError("dataset: expected " + std::to_string(m.readings.size()) + " rows, found " +
                      std::to_string(count));
  }
  for (auto& n : m.noise) {
    if (std::abs(n.dt - m.dt) > 1e-12 * m.dt) throw FormatError("dataset: noise dt differs from dt");
  }
  rethrow_as_format("dataset", [&] { m.validate(); });
  return m;
}

// ------------------------------------------------------------------- json

ojson to_json(const ExtrinsicSet& e) {
  ojson j;
  ojson pos = ojson::array();
  ojson ori = ojson::array();
  ojson mis = ojson::array();
  for (int n = 0; n < e.num_imus(); ++n) {
    pos.push_back(vec_json(e.position[n]));
    ori.push_back(quat_json(e.orientation[n]));
    mis.push_back(quat_json(e.misalignment[n]));
  }
  j["position"] = std::move(pos);
  j["orientation"] = std::move(ori);
  j["misalignment"] = std::move(mis);
  return j;
}

ExtrinsicSet extrinsics_from_json(const json& j) {
  check_keys(j, {"position", "orientation", "misalignment"}, "extrinsics");
  ExtrinsicSet e;
  e.position = vec_list_from(j.at("position"), "extrinsics.position");
  for (const auto& q : j.at("orientation")) e.orientation.push_back(quat_from(q, "extrinsics.orientation"));
  for (const auto& q : j.at("misalignment")) e.misalignment.push_back(quat_from(q, "extrinsics.misalignment"));
  rethrow_as_format("extrinsics", [&] { e.validate(); });
  return e;
}

ojson to_json(const ImuNoiseSpec& n) {
  ojson j;
  j["sigma_a"] = n.sigma_a;
  j["sigma_g"] = n.sigma_g;
  j["sigma_ba"] = n.sigma_ba;
  j["sigma_bg"] = n.sigma_bg;
  j["dt"] = n.dt;
  return j;
}

ImuNoiseSpec noise_from_json(const json& j) {
  check_keys(j, {"sigma_a", "sigma_g", "sigma_ba", "sigma_bg", "dt"}, "noise");
  ImuNoiseSpec n;
  for (const char* key : {"sigma_a", "sigma_g", "sigma_ba", "sigma_bg", "dt"}) {
    if (!j.contains(key) || !j[key].is_number()) throw FormatError(std::string("noise: missing ") + key);
  }
  n.sigma_a = j["sigma_a"].get<double>();
  n.sigma_g = j["sigma_g"].get<double>();
  n.sigma_ba = j["sigma_ba"].get<double>();
  n.sigma_bg = j["sigma_bg"].get<double>();
  n.dt = j["dt"].get<double>();
  rethrow_as_format("noise", [&] { n.validate(); });
  return n;
}

ojson to_json(const GroundTruthLog& t) {
  ojson j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "ground_truth";
  j["seed"] = t.seed;
  j["gravity"] = t.gravity;
  j["dt"] = t.dt;
  j["num_imus"] = t.extrinsics.num_imus();
  j["num_samples"] = t.num_samples();
  j["extrinsics"] = to_json(t.extrinsics);
  j["alpha"] = vec_list_json(t.alpha);
  j["accel_bias"] = vec_list_json(t.accel_bias);
  j["gyro_bias"] = vec_list_json(t.gyro_bias);
  return j;
}

GroundTruthLog ground_truth_from_json(const json& j) {
  check_version(j, "ground truth");
  GroundTruthLog t;
  try {
    t.seed = j.at("seed").get<std::uint64_t>();
    t.gravity = j.at("gravity").get<double>();
    t.dt = j.at("dt").get<double>();
    t.extrinsics = extrinsics_from_json(j.at("extrinsics"));
    t.alpha = vec_list_from(j.at("alpha"), "alpha");
    t.accel_bias = vec_list_from(j.at("accel_bias"), "accel_bias");
    t.gyro_bias = vec_list_from(j.at("gyro_bias"), "gyro_bias");
  } catch (const json::exception& e) {
    throw FormatError(std::string("ground truth: ") + e.what());
  }
  const std::size_t states = t.alpha.size() * static_cast<std::size_t>(t.extrinsics.num_imus());
  if (t.accel_bias.size() != states || t.gyro_bias.size() != states) {
    throw FormatError("ground truth: bias arrays do not match num_samples * num_imus");
  }
  return t;
}

ojson to_json(const SolveReport& r, bool with_log) {
  ojson j;
  j["status"] = to_string(r.status);
  j["message"] = r.message;
  j["iterations"] = r.iterations;
  j["initial_cost"] = r.initial_cost;
  j["final_cost"] = r.final_cost;
  if (with_log) {
    ojson log = ojson::array();
    for (const auto& it : r.log) {
      ojson e;
      e["iteration"] = it.iteration;
      e["cost"] = it.cost;
      e["damping"] = it.damping;
      e["step_norm"] = it.step_norm;
      e["accepted"] = it.accepted;
      log.push_back(std::move(e));
    }
    j["log"] = std::move(log);
  }
  return j;
}

ojson to_json(const RankReport& r) {
  ojson j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "rank_report";
  j["method"] = r.method;
  j["dimension"] = r.dimension;
  j["rank"] = r.rank;
  j["deficient"] = r.deficient;
  j["threshold"] = r.threshold;
  j["reference_singular_value"] = r.reference_singular_value;
  j["singular_values"] = r.singular_values;
  j["labels"] = r.labels;
  ojson dirs = ojson::array();
  for (Eigen::Index c = 0; c < r.null_directions.cols(); ++c) {
    ojson d = ojson::object();
    for (Eigen::Index i = 0; i < r.null_directions.rows(); ++i) {
      const double v = r.null_directions(i, c);
      if (std::abs(v) > 1e-6) d[r.labels[i]] = v;
    }
    dirs.push_back(std::move(d));
  }
  j["null_directions"] = std::move(dirs);
  j["full_dimension"] = r.full_dimension;
  j["full_rank"] = r.full_rank;
  return j;
}

ojson states_to_json(const ParameterVector& x) {
  ojson j;
  j["alpha"] = vec_list_json(x.alpha);
  j["accel_bias"] = vec_list_json(x.accel_bias);
  j["gyro_bias"] = vec_list_json(x.gyro_bias);
  return j;
}

void states_from_json(const json& j, ParameterVector& x) {
  check_keys(j, {"alpha", "accel_bias", "gyro_bias"}, "states");
  x.alpha = vec_list_from(j.at("alpha"), "states.alpha");
  x.accel_bias = vec_list_from(j.at("accel_bias"), "states.accel_bias");
  x.gyro_bias = vec_list_from(j.at("gyro_bias"), "states.gyro_bias");
  const std::size_t states = x.alpha.size() * static_cast<std::size_t>(x.num_imus());
  if (x.accel_bias.size() != states || x.gyro_bias.size() != states) {
    throw FormatError("states: bias arrays do not match the sample and IMU counts");
  }
}

// ------------------------------------------------------------- trajectory

Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "t,ax,ay,az,wx,wy,wz,alx,aly,alz,gx,gy,gz") {
    throw FormatError("trajectory: expected header t,ax,ay,az,wx,wy,wz,alx,aly,alz,gx,gy,gz");
  }
  Trajectory out;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 13) throw FormatError("trajectory: expected 13 fields per row");
    TrajectorySample s;
    s.t = parse_double(f[0], "t");
    for (int i = 0; i < 3; ++i) {
      s.accel[i] = parse_double(f[1 + i], "accel");
      s.omega[i] = parse_double(f[4 + i], "omega");
      s.alpha[i] = parse_double(f[7 + i], "alpha");
      s.gravity[i] = parse_double(f[10 + i], "gravity");
    }
    out.push_back(s);
  }
  if (out.size() < 3) throw FormatError("trajectory: need at least three samples");
  const double dt = out[1].t - out[0].t;
  if (!(dt > 0.0)) throw FormatError("trajectory: time must increase");
  for (std::size_t k = 1; k < out.size(); ++k) {
    if (std::abs(out[k].t - out[k - 1].t - dt) > 1e-6 * dt) {
      throw FormatError("trajectory: samples must be uniformly spaced");
    }
  }
  return out;
}

// ----------------------------------------------------------------- config

RunConfig default_config() {
  RunConfig c;
  c.scenario = RigScenario::reference(30.0, 7);
  c.motion = MotionProfile::excitation();
  return c;
}

RunConfig parse_config(const json& j) {
  RunConfig c = default_config();
  check_keys(j, {"format_version", "scenario", "problem", "solver", "initial_guess", "check"}, "config");
  if (j.contains("format_version")) check_version(j, "config");

  if (j.contains("scenario")) {
    const json& s = j["scenario"];
    const std::string w = "scenario";
    check_keys(s, {"imus", "noise", "duration", "dt", "seed", "gravity", "add_noise",
                   "bias_random_walk", "initial_bias_range", "misalignment_std_deg", "trajectory"},
               w);
    RigScenario& sc = c.scenario;
    c.dt = get_number(s, "dt", c.dt, w);
    if (!(c.dt > 0.0)) throw FormatError("scenario.dt: must be > 0");
    sc.duration = get_number(s, "duration", sc.duration, w);
    if (!(sc.duration > 0.0)) throw FormatError("scenario.duration: must be > 0");
    sc.seed = get_seed(s, "seed", sc.seed, w);
    c.motion.gravity = get_number(s, "gravity", c.motion.gravity, w);
    sc.add_noise = get_bool(s, "add_noise", sc.add_noise, w);
    sc.bias_random_walk = get_bool(s, "bias_random_walk", sc.bias_random_walk, w);
    sc.initial_bias_range = get_number(s, "initial_bias_range", sc.initial_bias_range, w);
    if (sc.initial_bias_range < 0.0) throw FormatError("scenario.initial_bias_range: must be >= 0");
    sc.misalignment_std_deg = get_number(s, "misalignment_std_deg", sc.misalignment_std_deg, w);
    if (sc.misalignment_std_deg < 0.0) throw FormatError("scenario.misalignment_std_deg: must be >= 0");

    if (s.contains("imus")) {
      const json& imus = s["imus"];
      if (!imus.is_array() || imus.size() < 2) throw FormatError("scenario.imus: need at least two IMUs");
      ExtrinsicSet e;
      for (std::size_t n = 0; n < imus.size(); ++n) {
        const std::string wi = "scenario.imus[" + std::to_string(n) + "]";
        check_keys(imus[n], {"position", "orientation", "misalignment"}, wi);
        e.position.push_back(imus[n].contains("position") ? vec_from(imus[n]["position"], wi + ".position")
                                                          : Vec3::Zero());
        e.orientation.push_back(imus[n].contains("orientation")
                                    ? quat_from(imus[n]["orientation"], wi + ".orientation")
                                    : UnitQuaternion());
        e.misalignment.push_back(imus[n].contains("misalignment")
                                     ? quat_from(imus[n]["misalignment"], wi + ".misalignment")
                                     : UnitQuaternion());
      }
      rethrow_as_format("scenario.imus", [&] { e.validate(); });
      sc.extrinsics = std::move(e);
    }
    const int num_imus = sc.extrinsics.num_imus();
    sc.noise.assign(num_imus, ImuNoiseSpec::reference());
    if (s.contains("noise")) {
      const json& n = s["noise"];
      if (n.is_array()) {
        if (static_cast<int>(n.size()) != num_imus) {
          throw FormatError("scenario.noise: need one entry per IMU");
        }
        for (int i = 0; i < num_imus; ++i) {
          sc.noise[i] = noise_from_config(n[i], c.dt, "scenario.noise[" + std::to_string(i) + "]");
        }
      } else {
        sc.noise.assign(num_imus, noise_from_config(n, c.dt, "scenario.noise"));
      }
    }
    for (auto& n : sc.noise) n.dt = c.dt;

    if (s.contains("trajectory")) {
      const json& t = s["trajectory"];
      const std::string wt = "scenario.trajectory";
      if (!t.is_object() || !t.contains("type") || !t["type"].is_string()) {
        throw FormatError(wt + ": needs a string 'type' (sinusoid or csv)");
      }
      const std::string type = t["type"].get<std::string>();
      if (type == "csv") {
        check_keys(t, {"type", "path"}, wt);
        if (!t.contains("path") || !t["path"].is_string()) throw FormatError(wt + ".path: expected a string");
        c.trajectory_csv = t["path"].get<std::string>();
      } else if (type == "sinusoid") {
        check_keys(t, {"type", "angular_amplitude", "angular_frequency", "angular_phase",
                       "linear_amplitude", "linear_frequency", "linear_phase", "omega_offset",
                       "accel_offset", "initial_orientation"},
                   wt);
        MotionProfile& m = c.motion;
        const auto vec_field = [&](const char* key, Vec3& v) {
          if (t.contains(key)) v = vec_from(t[key], wt + "." + key);
        };
        vec_field("angular_amplitude", m.angular_amplitude);
        vec_field("angular_frequency", m.angular_frequency);
        vec_field("angular_phase", m.angular_phase);
        vec_field("linear_amplitude", m.linear_amplitude);
        vec_field("linear_frequency", m.linear_frequency);
        vec_field("linear_phase", m.linear_phase);
        vec_field("omega_offset", m.omega_offset);
        vec_field("accel_offset", m.accel_offset);
        if (t.contains("initial_orientation")) {
          m.initial_orientation = quat_from(t["initial_orientation"], wt + ".initial_orientation");
        }
      } else {
        throw FormatError(wt + ".type: must be 'sinusoid' or 'csv'");
      }
    }
  }

  if (j.contains("problem")) {
    const json& p = j["problem"];
    check_keys(p, {"estimate_misalignment", "sigma_a_alt"}, "problem");
    c.problem.estimate_misalignment =
        get_bool(p, "estimate_misalignment", c.problem.estimate_misalignment, "problem");
    c.problem.sigma_a_alt = get_bool(p, "sigma_a_alt", c.problem.sigma_a_alt, "problem");
  }

  if (j.contains("solver")) {
    const json& s = j["solver"];
    const std::string w = "solver";
    check_keys(s, {"max_iterations", "cost_tolerance", "gradient_tolerance", "parameter_tolerance",
                   "initial_damping", "damping_up", "damping_down"},
               w);
    SolverOptions& o = c.solver;
    o.max_iterations = get_int(s, "max_iterations", o.max_iterations, w);
    o.cost_tolerance = get_number(s, "cost_tolerance", o.cost_tolerance, w);
    o.gradient_tolerance = get_number(s, "gradient_tolerance", o.gradient_tolerance, w);
    o.parameter_tolerance = get_number(s, "parameter_tolerance", o.parameter_tolerance, w);
    o.initial_damping = get_number(s, "initial_damping", o.initial_damping, w);
    o.damping_up = get_number(s, "damping_up", o.damping_up, w);
    o.damping_down = get_number(s, "damping_down", o.damping_down, w);
    rethrow_as_format(w, [&] { o.validate(); });
  }

  if (j.contains("initial_guess")) {
    const json& g = j["initial_guess"];
    const std::string w = "initial_guess";
    check_keys(g, {"position_std_mm", "orientation_std_deg", "fixed_magnitude", "seed"}, w);
    InitialGuessSpec& s = c.initial_guess;
    s.position_std_mm = get_number(g, "position_std_mm", s.position_std_mm, w);
    s.orientation_std_deg = get_number(g, "orientation_std_deg", s.orientation_std_deg, w);
    s.fixed_magnitude = get_bool(g, "fixed_magnitude", s.fixed_magnitude, w);
    s.seed = get_seed(g, "seed", s.seed, w);
    if (s.position_std_mm < 0.0 || s.orientation_std_deg < 0.0) {
      throw FormatError(w + ": perturbation sizes must be >= 0");
    }
  }

  if (j.contains("check")) {
    const json& k = j["check"];
    check_keys(k, {"threshold"}, "check");
    c.rank.threshold = get_number(k, "threshold", c.rank.threshold, "check");
    if (!(c.rank.threshold > 0.0 && c.rank.threshold < 1.0)) {
      throw FormatError("check.threshold: must be in (0, 1)");
    }
  }
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

ojson to_json(const RunConfig& c) {
  ojson j;
  j["format_version"] = kFormatVersion;
  ojson s;
  ojson imus = ojson::array();
  for (int n = 0; n < c.scenario.extrinsics.num_imus(); ++n) {
    ojson imu;
    imu["position"] = vec_json(c.scenario.extrinsics.position[n]);
    imu["orientation"] = quat_json(c.scenario.extrinsics.orientation[n]);
    imu["misalignment"] = quat_json(c.scenario.extrinsics.misalignment[n]);
    imus.push_back(std::move(imu));
  }
  s["imus"] = std::move(imus);
  ojson noise = ojson::array();
  for (const auto& n : c.scenario.noise) {
    ojson e = to_json(n);
    e.erase("dt");
    noise.push_back(std::move(e));
  }
  s["noise"] = std::move(noise);
  s["duration"] = c.scenario.duration;
  s["dt"] = c.dt;
  s["seed"] = c.scenario.seed;
  s["gravity"] = c.motion.gravity;
  s["add_noise"] = c.scenario.add_noise;
  s["bias_random_walk"] = c.scenario.bias_random_walk;
  s["initial_bias_range"] = c.scenario.initial_bias_range;
  s["misalignment_std_deg"] = c.scenario.misalignment_std_deg;
  ojson t;
  if (c.trajectory_csv) {
    t["type"] = "csv";
    t["path"] = *c.trajectory_csv;
  } else {
    const MotionProfile& m = c.motion;
    t["type"] = "sinusoid";
    t["angular_amplitude"] = vec_json(m.angular_amplitude);
    t["angular_frequency"] = vec_json(m.angular_frequency);
    t["angular_phase"] = vec_json(m.angular_phase);
    t["linear_amplitude"] = vec_json(m.linear_amplitude);
    t["linear_frequency"] = vec_json(m.linear_frequency);
    t["linear_phase"] = vec_json(m.linear_phase);
    t["omega_offset"] = vec_json(m.omega_offset);
    t["accel_offset"] = vec_json(m.accel_offset);
    t["initial_orientation"] = quat_json(m.initial_orientation);
  }
  s["trajectory"] = std::move(t);
  j["scenario"] = std::move(s);
  j["problem"] = {{"estimate_misalignment", c.problem.estimate_misalignment},
                  {"sigma_a_alt", c.problem.sigma_a_alt}};
  j["solver"] = {{"max_iterations", c.solver.max_iterations},
                 {"cost_tolerance", c.solver.cost_tolerance},
                 {"gradient_tolerance", c.solver.gradient_tolerance},
                 {"parameter_tolerance", c.solver.parameter_tolerance},
                 {"initial_damping", c.solver.initial_damping},
                 {"damping_up", c.solver.damping_up},
                 {"damping_down", c.solver.damping_down}};
  j["initial_guess"] = {{"position_std_mm", c.initial_guess.position_std_mm},
                        {"orientation_std_deg", c.initial_guess.orientation_std_deg},
                        {"fixed_magnitude", c.initial_guess.fixed_magnitude},
                        {"seed", c.initial_guess.seed}};
  j["check"] = {{"threshold", c.rank.threshold}};
  return j;
}

// ------------------------------------------------------------------ files

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::remove(tmp.c_str());
      throw std::runtime_error("failed writing '" + path + "'");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot move output into place at '" + path + "'");
  }
}

}  // namespace imucal
