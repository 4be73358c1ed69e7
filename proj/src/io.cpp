#include "nsda/io.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace nsda::io {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double parse_double(const std::string& s, const std::string& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw FormatError(path, "expected a number, got '" + s + "'");
  }
}

int parse_int(const std::string& s, const std::string& path) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(path, "expected an integer, got '" + s + "'");
  return v;
}

void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << fields[i];
  os << '\n';
}

void append(std::vector<std::string>& row, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(format_double(m(r, c)));
}

void append_names(std::vector<std::string>& row, const std::string& prefix, Eigen::Index rows, Eigen::Index cols) {
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      row.push_back(cols == 1 ? prefix + std::to_string(r) : prefix + std::to_string(r) + std::to_string(c));
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_dataset_csv(std::ostream& os, const TimeLabeledDataset& data) {
  data.validate();
  std::vector<std::string> header{"class", "time"};
  for (int i = 0; i < data.dim; ++i) header.push_back("x" + std::to_string(i));
  write_row(os, header);
  for (const auto& s : data.samples) {
    std::vector<std::string> row{std::to_string(s.label), s.time ? std::to_string(*s.time) : ""};
    append(row, s.x);
    write_row(os, row);
  }
}

TimeLabeledDataset read_dataset_csv(std::istream& is, const std::string& source, int min_horizon) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(source + ":1", "missing header");
  const auto header = split(trim(line));
  if (header.size() < 3 || trim(header[0]) != "class" || trim(header[1]) != "time")
    throw FormatError(source + ":1", "header must be class,time,x0,...");
  TimeLabeledDataset data;
  data.horizon = std::max(min_horizon, 0);
  data.dim = int(header.size()) - 2;
  for (int i = 0; i < data.dim; ++i) {
    if (trim(header[i + 2]) != "x" + std::to_string(i))
      throw FormatError(source + ":1", "feature column " + std::to_string(i) + " must be named x" + std::to_string(i));
  }
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto f = split(line);
    if (int(f.size()) != data.dim + 2)
      throw FormatError(where, "expected " + std::to_string(data.dim + 2) + " fields, got " + std::to_string(f.size()));
    Sample s;
    s.label = parse_int(trim(f[0]), where + ":class");
    if (s.label < 0) throw FormatError(where + ":class", "class must be nonnegative");
    if (const auto t = trim(f[1]); !t.empty()) {
      s.time = parse_int(t, where + ":time");
      if (*s.time < 0) throw FormatError(where + ":time", "time must be nonnegative");
      data.horizon = std::max(data.horizon, *s.time);
    }
    s.x.resize(data.dim);
    for (int i = 0; i < data.dim; ++i) s.x[i] = parse_double(trim(f[i + 2]), where + ":x" + std::to_string(i));
    data.num_classes = std::max(data.num_classes, s.label + 1);
    data.samples.push_back(std::move(s));
  }
  data.validate();
  return data;
}

void write_latent_csv(std::ostream& os, const LatentTrajectory& z) {
  std::vector<std::string> header{"k"};
  append_names(header, "z", z.cols(), 1);
  write_row(os, header);
  for (Eigen::Index k = 0; k < z.rows(); ++k) {
    std::vector<std::string> row{std::to_string(k)};
    append(row, z.row(k).transpose());
    write_row(os, row);
  }
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Matrix matrix_from_json(const Json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw FormatError(path, "expected a nonempty array of rows");
  const auto rows = Eigen::Index(j.size());
  Eigen::Index cols = -1;
  Matrix m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[r];
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!row.is_array()) throw FormatError(rp, "expected an array");
    if (cols < 0) {
      cols = Eigen::Index(row.size());
      m.resize(rows, cols);
    }
    if (Eigen::Index(row.size()) != cols) throw FormatError(rp, "ragged row");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw FormatError(rp + "[" + std::to_string(c) + "]", "expected a number");
      m(r, c) = row[c].get<double>();
    }
  }
  return m;
}

Vector vector_from_json(const Json& j, const std::string& path) {
  if (!j.is_array()) throw FormatError(path, "expected an array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError(path + "[" + std::to_string(i) + "]", "expected a number");
    v[Eigen::Index(i)] = j[i].get<double>();
  }
  return v;
}

Json to_json(const ClassModel<double>& m) {
  Json j;
  j["A"] = to_json(m.A);
  j["Q"] = to_json(m.Q);
  j["R"] = to_json(m.R);
  j["mu0"] = to_json(m.mu0);
  j["K0"] = to_json(m.K0);
  return j;
}

Json to_json(const LinearGaussianModel<double>& m) {
  Json classes = Json::array();
  for (const auto& c : m.classes) classes.push_back(to_json(c));
  return Json{{"classes", classes}};
}

ClassModel<double> class_model_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw FormatError(path, "expected an object");
  auto field = [&](const char* name) -> const Json& {
    if (!j.contains(name)) throw FormatError(path + "." + name, "missing");
    return j.at(name);
  };
  ClassModel<double> m;
  m.A = matrix_from_json(field("A"), path + ".A");
  m.Q = matrix_from_json(field("Q"), path + ".Q");
  m.R = matrix_from_json(field("R"), path + ".R");
  m.mu0 = vector_from_json(field("mu0"), path + ".mu0");
  m.K0 = matrix_from_json(field("K0"), path + ".K0");
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw FormatError(path, e.what());
  }
  return m;
}

LinearGaussianModel<double> model_from_json(const Json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("classes") || !j["classes"].is_array())
    throw FormatError(path + ".classes", "expected an array of class models");
  LinearGaussianModel<double> m;
  for (std::size_t i = 0; i < j["classes"].size(); ++i)
    m.classes.push_back(class_model_from_json(j["classes"][i], path + ".classes[" + std::to_string(i) + "]"));
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw FormatError(path, e.what());
  }
  return m;
}

void write_em_trace_csv(std::ostream& os, const EMTrace<double>& trace) {
  write_row(os, {"iteration", "loglik", "delta"});
  for (const auto& it : trace.iterations)
    write_row(os, {std::to_string(it.iteration), format_double(it.loglik), format_double(it.delta)});
  write_row(os, {std::to_string(trace.iterations.size()), format_double(trace.final_loglik), ""});
}

void write_smoother_csv(std::ostream& os, const SmootherOutput<double>& out) {
  require(out.horizon() >= 0, "empty smoother output");
  const auto d = out.z_pred.front().size();
  std::vector<std::string> header{"k"};
  const std::vector<std::string> stages = out.has_smooth ? std::vector<std::string>{"pred", "filt", "smooth"}
                                                         : std::vector<std::string>{"pred", "filt"};
  for (const auto& s : stages) append_names(header, "z_" + s + "_", d, 1);
  for (const auto& s : stages) append_names(header, "P_" + s + "_", d, d);
  if (out.has_lag) append_names(header, "V_lag_", d, d);
  write_row(os, header);
  for (int k = 0; k <= out.horizon(); ++k) {
    std::vector<std::string> row{std::to_string(k)};
    append(row, out.z_pred[k]);
    append(row, out.z_filt[k]);
    if (out.has_smooth) append(row, out.z_smooth[k]);
    append(row, out.P_pred[k]);
    append(row, out.P_filt[k]);
    if (out.has_smooth) append(row, out.P_smooth[k]);
    if (out.has_lag) {
      if (k == 0) row.insert(row.end(), std::size_t(d * d), "");
      else append(row, out.lag_cov[k]);
    }
    write_row(os, row);
  }
}

void write_ess_csv(std::ostream& os, const ParticleSystem& system) {
  write_row(os, {"k", "ess_forward", "ess_smoothed"});
  for (int k = 0; k <= system.horizon(); ++k) {
    write_row(os, {std::to_string(k), format_double(effective_sample_size(system.forward_weights[k])),
                   system.smoothed() ? format_double(effective_sample_size(system.smoothed_weights[k])) : ""});
  }
}

void write_moments_csv(std::ostream& os, const MomentSequence<double>& m) {
  require(!m.empty(), "empty moment sequence");
  const auto d = m.front().mean.size();
  std::vector<std::string> header{"k"};
  append_names(header, "mean_", d, 1);
  append_names(header, "cov_", d, d);
  write_row(os, header);
  for (std::size_t k = 0; k < m.size(); ++k) {
    std::vector<std::string> row{std::to_string(k)};
    append(row, m[k].mean);
    append(row, m[k].cov);
    write_row(os, row);
  }
}

Json to_json(const DiscriminantRule<double>& rule) {
  Json j;
  if (const auto* lin = std::get_if<LinearRule<double>>(&rule)) {
    j["type"] = "linear";
    j["time_invariant"] = lin->time_invariant;
    Json times = Json::array();
    for (int k = 0; k <= lin->horizon(); ++k) {
      Json t;
      t["k"] = k;
      Json cls = Json::array();
      for (int c = 0; c < lin->num_classes(); ++c) cls.push_back(Json{{"a", to_json(lin->a[k][c])}, {"c", lin->c[k][c]}});
      t["classes"] = cls;
      if (!lin->w.empty()) {
        t["w"] = to_json(lin->w[k]);
        t["b"] = lin->b[k];
      }
      t["pooled_cov"] = to_json(lin->pooled[k]);
      times.push_back(std::move(t));
    }
    j["times"] = times;
    return j;
  }
  const auto& quad = std::get<QuadraticRule<double>>(rule);
  j["type"] = "quadratic";
  j["time_invariant"] = quad.time_invariant;
  Json times = Json::array();
  for (int k = 0; k <= quad.horizon(); ++k) {
    Json t;
    t["k"] = k;
    Json cls = Json::array();
    for (const auto& term : quad.terms[k]) {
      cls.push_back(Json{{"mean", to_json(term.mean)},
                         {"precision", to_json(term.precision)},
                         {"log_det", term.log_det},
                         {"log_prior", term.log_prior}});
    }
    t["classes"] = cls;
    if (!quad.E.empty()) {
      t["E"] = to_json(quad.E[k]);
      t["F"] = to_json(quad.F[k]);
      t["G"] = quad.G[k];
      t["log_prior_ratio"] = quad.log_prior_ratio[k];
    }
    times.push_back(std::move(t));
  }
  j["times"] = times;
  return j;
}

}  // namespace nsda::io
