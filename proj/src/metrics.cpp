#include "imucal/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace imucal {

namespace {

double square(double v) { return v * v; }

double rms(double sum, long count) {
  return count > 0 ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

double vector_sum_sq(const std::vector<Vec3>& est, const std::vector<Vec3>& truth) {
  double total = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) total += (est[i] - truth[i]).squaredNorm();
  return total;
}

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell_csv(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return csv_escape(*s);
  if (const auto* l = std::get_if<long>(&c)) return std::to_string(*l);
  return shortest(std::get<double>(c));
}

std::string cell_text(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* l = std::get_if<long>(&c)) return std::to_string(*l);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", std::get<double>(c));
  return buf;
}

nlohmann::ordered_json cell_json(const Cell& c) {
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  if (const auto* l = std::get_if<long>(&c)) return *l;
  const double d = std::get<double>(c);
  if (!std::isfinite(d)) return nullptr;
  return d;
}

nlohmann::ordered_json table_json(const Table& table) {
  nlohmann::ordered_json j;
  j["title"] = table.title;
  j["columns"] = table.columns;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : table.rows) {
    auto r = nlohmann::ordered_json::array();
    for (const auto& c : row) r.push_back(cell_json(c));
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j;
}

std::string render_text(const Table& table) {
  std::vector<std::size_t> width(table.columns.size(), 0);
  std::vector<std::vector<std::string>> cells;
  for (std::size_t i = 0; i < table.columns.size(); ++i) width[i] = table.columns[i].size();
  for (const auto& row : table.rows) {
    std::vector<std::string> r;
    for (std::size_t i = 0; i < row.size(); ++i) {
      r.push_back(cell_text(row[i]));
      if (i < width.size()) width[i] = std::max(width[i], r.back().size());
    }
    cells.push_back(std::move(r));
  }
  std::ostringstream out;
  if (!table.title.empty()) out << table.title << "\n";
  const auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i > 0) out << "  ";
      const std::size_t w = i < width.size() ? width[i] : r[i].size();
      out << r[i] << std::string(w - std::min(w, r[i].size()), ' ');
    }
    out << "\n";
  };
  line(table.columns);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << "\n";
  for (const auto& r : cells) line(r);
  return out.str();
}

std::string render_csv(const Table& table) {
  std::ostringstream out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    out << (i ? "," : "") << csv_escape(table.columns[i]);
  }
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << cell_csv(row[i]);
    out << "\n";
  }
  return out.str();
}

}  // namespace

ErrorSums& ErrorSums::operator+=(const ErrorSums& o) {
  position += o.position;
  orientation += o.orientation;
  misalignment += o.misalignment;
  extrinsic_count += o.extrinsic_count;
  misalignment_count += o.misalignment_count;
  alpha_initial += o.alpha_initial;
  alpha_final += o.alpha_final;
  accel_bias_initial += o.accel_bias_initial;
  accel_bias_final += o.accel_bias_final;
  gyro_bias_initial += o.gyro_bias_initial;
  gyro_bias_final += o.gyro_bias_final;
  alpha_count += o.alpha_count;
  bias_count += o.bias_count;
  return *this;
}

ErrorSums error_sums(const TrialResult& trial) {
  const ExtrinsicSet& est = trial.estimate.extrinsics;
  const ExtrinsicSet& truth = trial.truth.extrinsics;
  if (est.num_imus() != truth.num_imus() || trial.initial.num_imus() != truth.num_imus()) {
    throw std::invalid_argument("metrics: estimate and truth have different IMU counts");
  }
  const std::size_t samples = trial.truth.alpha.size();
  const std::size_t states = samples * static_cast<std::size_t>(truth.num_imus());
  if (samples == 0 || trial.truth.accel_bias.size() != states ||
      trial.truth.gyro_bias.size() != states) {
    throw std::invalid_argument("metrics: ground truth lacks per-timestep states");
  }
  for (const ParameterVector* x : {&trial.initial, &trial.estimate}) {
    if (x->alpha.size() != samples || x->accel_bias.size() != states ||
        x->gyro_bias.size() != states) {
      throw std::invalid_argument("metrics: estimate and truth have different sample counts");
    }
  }

  ErrorSums s;
  for (int n = 0; n < truth.num_imus(); ++n) {
    s.misalignment += square(geodesic_angle(est.misalignment[n], truth.misalignment[n]));
    ++s.misalignment_count;
    if (n == 0) continue;
    s.position += (est.position[n] - truth.position[n]).squaredNorm();
    s.orientation += square(geodesic_angle(est.orientation[n], truth.orientation[n]));
    ++s.extrinsic_count;
  }
  s.alpha_initial = vector_sum_sq(trial.initial.alpha, trial.truth.alpha);
  s.alpha_final = vector_sum_sq(trial.estimate.alpha, trial.truth.alpha);
  s.accel_bias_initial = vector_sum_sq(trial.initial.accel_bias, trial.truth.accel_bias);
  s.accel_bias_final = vector_sum_sq(trial.estimate.accel_bias, trial.truth.accel_bias);
  s.gyro_bias_initial = vector_sum_sq(trial.initial.gyro_bias, trial.truth.gyro_bias);
  s.gyro_bias_final = vector_sum_sq(trial.estimate.gyro_bias, trial.truth.gyro_bias);
  s.alpha_count = 3 * static_cast<long>(samples);
  s.bias_count = 3 * static_cast<long>(states);
  return s;
}

ExtrinsicRmse extrinsic_rmse(const ErrorSums& s) {
  return {1e3 * rms(s.position, s.extrinsic_count), rad2deg(rms(s.orientation, s.extrinsic_count)),
          rad2deg(rms(s.misalignment, s.misalignment_count))};
}

AuxStateComparison aux_state_rmse(const ErrorSums& s) {
  AuxStateComparison out;
  out.initial = {rms(s.alpha_initial, s.alpha_count), rms(s.accel_bias_initial, s.bias_count),
                 rms(s.gyro_bias_initial, s.bias_count)};
  out.final_estimate = {rms(s.alpha_final, s.alpha_count), rms(s.accel_bias_final, s.bias_count),
                        rms(s.gyro_bias_final, s.bias_count)};
  return out;
}

ExtrinsicRmse rmse_extrinsics(const std::vector<TrialResult>& trials) {
  if (trials.empty()) throw std::invalid_argument("rmse_extrinsics: no trials");
  ErrorSums total;
  for (const auto& t : trials) total += error_sums(t);
  return extrinsic_rmse(total);
}

AuxStateComparison rmse_aux_states(const std::vector<TrialResult>& trials) {
  if (trials.empty()) throw std::invalid_argument("rmse_aux_states: no trials");
  ErrorSums total;
  for (const auto& t : trials) total += error_sums(t);
  return aux_state_rmse(total);
}

std::optional<TableFormat> parse_table_format(const std::string& name) {
  if (name == "text") return TableFormat::kText;
  if (name == "json") return TableFormat::kJson;
  if (name == "csv") return TableFormat::kCsv;
  return std::nullopt;
}

std::string render_table(const Table& table, TableFormat format) {
  switch (format) {
    case TableFormat::kText: return render_text(table);
    case TableFormat::kCsv: return render_csv(table);
    case TableFormat::kJson: {
      nlohmann::ordered_json j;
      j["format_version"] = kReportFormatVersion;
      const nlohmann::ordered_json body = table_json(table);
      for (const auto& [key, value] : body.items()) j[key] = value;
      return j.dump(2) + "\n";
    }
  }
  return {};
}

std::string render_tables(const std::vector<Table>& tables, TableFormat format) {
  if (format == TableFormat::kJson) {
    nlohmann::ordered_json j;
    j["format_version"] = kReportFormatVersion;
    j["tables"] = nlohmann::ordered_json::array();
    for (const auto& t : tables) j["tables"].push_back(table_json(t));
    return j.dump(2) + "\n";
  }
  std::string out;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    if (i > 0) out += "\n";
    if (format == TableFormat::kCsv && !tables[i].title.empty()) out += "# " + tables[i].title + "\n";
    out += render_table(tables[i], format);
  }
  return out;
}

Table parse_table_json(const std::string& document) {
  const auto j = nlohmann::json::parse(document);
  if (j.value("format_version", 0) != kReportFormatVersion) {
    throw std::invalid_argument("table: unsupported format_version");
  }
  Table t;
  t.title = j.at("title").get<std::string>();
  t.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& row : j.at("rows")) {
    std::vector<Cell> r;
    for (const auto& c : row) {
      if (c.is_string()) {
        r.emplace_back(c.get<std::string>());
      } else if (c.is_number_integer()) {
        r.emplace_back(c.get<long>());
      } else if (c.is_null()) {
        r.emplace_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        r.emplace_back(c.get<double>());
      }
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace imucal
