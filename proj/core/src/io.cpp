#include <kflearn/io.hpp>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace kflearn {

using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  return out;
}

json parse(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, std::string_view name) {
  if (!j.is_array()) throw ConfigError(std::string(name) + " must be a nested array");
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  if (!j[0].is_array()) throw ConfigError(std::string(name) + " must be a nested array");
  const Index cols = static_cast<Index>(j[0].size());
  Matrix M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw ConfigError(std::string(name) + " has ragged rows");
    for (Index k = 0; k < cols; ++k) {
      const json& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number()) throw ConfigError(std::string(name) + " entries must be numbers");
      M(i, k) = v.get<double>();
    }
  }
  return M;
}

const json& require_key(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing key '") + key + "'");
  return j.at(key);
}

json model_json(const Model& m) {
  return {{"n", m.n()},
          {"m", m.m()},
          {"A", matrix_to_json(m.A)},
          {"C", matrix_to_json(m.C)},
          {"K", matrix_to_json(m.K)},
          {"R", matrix_to_json(m.R)}};
}

Model model_from(const json& j) {
  if (!j.is_object()) throw ConfigError("model must be an object");
  Model m;
  m.A = matrix_from_json(require_key(j, "A"), "A");
  m.C = matrix_from_json(require_key(j, "C"), "C");
  m.K = matrix_from_json(require_key(j, "K"), "K");
  m.R = matrix_from_json(require_key(j, "R"), "R");
  try {
    if (j.contains("n") && j.at("n").get<Index>() != m.A.rows()) throw ConfigError("n does not match A");
    if (j.contains("m") && j.at("m").get<Index>() != m.C.rows()) throw ConfigError("m does not match C");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model dimensions: ") + e.what());
  }
  try {
    m.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

template <class T>
T get_as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Quote a free-text field for CSV.
std::string csv_field(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' ? ' ' : c);
  }
  out += '"';
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

std::string model_to_json(const Model& model) { return model_json(model).dump(2); }

Model model_from_json(std::string_view text) { return model_from(parse(text, "model file")); }

void write_model(const std::filesystem::path& path, const Model& model) {
  auto out = open_out(path);
  out << model_to_json(model) << '\n';
}

Model read_model(const std::filesystem::path& path) { return model_from_json(slurp(path)); }

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  auto out = open_out(path);
  const Index m = traj.output_dim();
  const Index n = traj.x ? traj.x->rows() : 0;
  const bool with_e = traj.e.has_value();
  out << "# seed=" << traj.seed << '\n' << 't';
  for (Index i = 0; i < m; ++i) out << ",y_" << i + 1;
  for (Index i = 0; i < n; ++i) out << ",x_" << i + 1;
  if (with_e)
    for (Index i = 0; i < m; ++i) out << ",e_" << i + 1;
  out << '\n';
  for (Index k = 0; k < traj.length(); ++k) {
    out << k;
    for (Index i = 0; i < m; ++i) out << ',' << traj.y(i, k);
    for (Index i = 0; i < n; ++i) out << ',' << (*traj.x)(i, k);
    if (with_e)
      for (Index i = 0; i < m; ++i) out << ',' << (*traj.e)(i, k);
    out << '\n';
  }
}

Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  Trajectory traj;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("seed=");
      if (pos != std::string::npos) {
        try {
          traj.seed = std::stoull(line.substr(pos + 5));
        } catch (const std::exception&) {
          throw ConfigError("trajectory seed comment is malformed");
        }
      }
      continue;
    }
    header = split(line, ',');
    break;
  }
  if (header.empty()) throw ConfigError("trajectory file has no header");
  std::vector<int> ycol, xcol, ecol;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string h = trim(header[i]);
    if (h.rfind("y_", 0) == 0) ycol.push_back(static_cast<int>(i));
    else if (h.rfind("x_", 0) == 0) xcol.push_back(static_cast<int>(i));
    else if (h.rfind("e_", 0) == 0) ecol.push_back(static_cast<int>(i));
  }
  if (ycol.empty()) throw ConfigError("trajectory file has no y_ columns");
  if (!ecol.empty() && ecol.size() != ycol.size())
    throw ConfigError("trajectory e_ columns must match y_ columns");

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw ConfigError("trajectory row has the wrong width");
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        row[i] = std::stod(cells[i]);
      } catch (const std::exception&) {
        throw ConfigError("trajectory cell is not a number: '" + cells[i] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  const Index N = static_cast<Index>(rows.size());
  if (N == 0) throw ConfigError("trajectory file has no samples");
  auto fill = [&](const std::vector<int>& cols) {
    Matrix M(static_cast<Index>(cols.size()), N);
    for (Index k = 0; k < N; ++k)
      for (std::size_t i = 0; i < cols.size(); ++i)
        M(static_cast<Index>(i), k) = rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(cols[i])];
    return M;
  };
  traj.y = fill(ycol);
  if (!xcol.empty()) traj.x = fill(xcol);
  if (!ecol.empty()) traj.e = fill(ecol);
  return traj;
}

std::string filter_to_json(const FilterFile& f) {
  json j;
  j["mode"] = std::string(to_string(f.mode));
  j["model_hat"] = model_json(f.spec.model_hat);
  if (const auto* ce = std::get_if<CeStatic>(&f.spec.mode)) {
    j["gain"] = matrix_to_json(ce->L);
  } else {
    json list = json::array();
    for (const Matrix& g : std::get<RobustFir>(f.spec.mode).coeffs) list.push_back(matrix_to_json(g));
    j["fir_coefficients"] = std::move(list);
  }
  json diag = json::object();
  for (const auto& [k, v] : f.diagnostics) diag[k] = std::isfinite(v) ? json(v) : json(nullptr);
  j["diagnostics"] = std::move(diag);
  return j.dump(2);
}

FilterFile filter_from_json(std::string_view text) {
  const json j = parse(text, "filter file");
  if (!j.is_object()) throw ConfigError("filter file must be an object");
  FilterFile f;
  f.mode = parse_filter_mode(get_as<std::string>(j, "mode"));
  f.spec.model_hat = model_from(require_key(j, "model_hat"));
  if (j.contains("gain")) {
    f.spec.mode = CeStatic{matrix_from_json(j.at("gain"), "gain")};
  } else if (j.contains("fir_coefficients")) {
    const json& list = j.at("fir_coefficients");
    if (!list.is_array()) throw ConfigError("fir_coefficients must be an array");
    std::vector<Matrix> coeffs;
    for (const json& g : list) coeffs.push_back(matrix_from_json(g, "fir coefficient"));
    f.spec.mode = RobustFir{std::move(coeffs)};
  } else {
    throw ConfigError("filter file needs 'gain' or 'fir_coefficients'");
  }
  if (j.contains("diagnostics") && j.at("diagnostics").is_object()) {
    for (const auto& [k, v] : j.at("diagnostics").items())
      f.diagnostics.emplace_back(k, v.is_number() ? v.get<double>()
                                                  : std::numeric_limits<double>::quiet_NaN());
  }
  try {
    f.spec.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("filter: ") + e.what());
  }
  return f;
}

void write_filter(const std::filesystem::path& path, const FilterFile& filter) {
  auto out = open_out(path);
  out << filter_to_json(filter) << '\n';
}

FilterFile read_filter(const std::filesystem::path& path) { return filter_from_json(slurp(path)); }

ExperimentConfig config_from_json(std::string_view text, const std::filesystem::path& base) {
  const json j = parse(text, "config file");
  if (!j.is_object()) throw ConfigError("config must be an object");
  static const std::set<std::string> known = {
      "model", "n_grid", "trials", "past", "future", "order", "weighting", "creg", "horizon",
      "terminal", "seed", "basis", "eval_horizon", "burn_in", "perfect_knowledge",
      "tail_threshold"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");

  ExperimentConfig cfg;
  if (j.contains("model")) {
    const json& mj = j.at("model");
    if (mj.is_string()) {
      std::filesystem::path p = mj.get<std::string>();
      if (p.is_relative() && !base.empty()) p = base / p;
      cfg.model = read_model(p);
    } else {
      cfg.model = model_from(mj);
    }
  }
  if (j.contains("n_grid")) cfg.n_grid = get_as<std::vector<Index>>(j, "n_grid");
  if (j.contains("trials")) cfg.trials = get_as<int>(j, "trials");
  if (j.contains("past")) cfg.hankel.past = get_as<int>(j, "past");
  if (j.contains("future")) cfg.hankel.future = get_as<int>(j, "future");
  if (j.contains("order")) cfg.order = get_as<int>(j, "order");
  if (j.contains("weighting")) cfg.hankel.weighting = parse_weighting(get_as<std::string>(j, "weighting"));
  if (j.contains("creg")) cfg.creg = get_as<double>(j, "creg");
  if (j.contains("horizon")) cfg.horizon = get_as<int>(j, "horizon");
  if (j.contains("terminal")) cfg.terminal = parse_terminal(get_as<std::string>(j, "terminal"));
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("basis")) cfg.basis = parse_basis(get_as<std::string>(j, "basis"));
  if (j.contains("eval_horizon")) cfg.eval_horizon = get_as<Index>(j, "eval_horizon");
  if (j.contains("burn_in") && !j.at("burn_in").is_null()) cfg.burn_in = get_as<Index>(j, "burn_in");
  if (j.contains("perfect_knowledge")) cfg.perfect_knowledge = get_as<bool>(j, "perfect_knowledge");
  if (j.contains("tail_threshold")) cfg.tail_threshold = get_as<double>(j, "tail_threshold");
  cfg.validate();
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["model"] = model_json(cfg.model);
  j["n_grid"] = cfg.n_grid;
  j["trials"] = cfg.trials;
  j["past"] = cfg.hankel.past;
  j["future"] = cfg.hankel.future;
  j["order"] = cfg.order;
  j["weighting"] = std::string(to_string(cfg.hankel.weighting));
  j["creg"] = cfg.creg;
  j["horizon"] = cfg.horizon;
  j["terminal"] = std::string(to_string(cfg.terminal));
  j["seed"] = cfg.seed;
  j["basis"] = std::string(to_string(cfg.basis));
  j["eval_horizon"] = cfg.eval_horizon;
  j["burn_in"] = cfg.burn_in ? json(*cfg.burn_in) : json(nullptr);
  j["perfect_knowledge"] = cfg.perfect_knowledge;
  j["tail_threshold"] = cfg.tail_threshold;
  return j.dump(2);
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  return config_from_json(slurp(path), path.parent_path());
}

void write_trials_csv(const std::filesystem::path& path, const std::vector<TrialRecord>& trials) {
  auto out = open_out(path);
  out << "n_samples,trial,seed,j_ce,j_robust,rho_ce_closed_loop,rho_k_hat,rho_a_hat,sigma_n_G,"
         "hankel_error,robust_objective,robust_constraint,ident_status,ce_status,robust_status\n";
  for (const TrialRecord& r : trials) {
    out << r.n_samples << ',' << r.trial << ',' << r.seed << ',' << fmt(r.j_ce) << ','
        << fmt(r.j_robust) << ',' << fmt(r.rho_ce_closed_loop) << ',' << fmt(r.rho_k_hat) << ','
        << fmt(r.rho_a_hat) << ',' << fmt(r.sigma_n_G) << ',' << fmt(r.hankel_error) << ','
        << fmt(r.robust_objective) << ',' << fmt(r.robust_constraint) << ','
        << csv_field(r.ident_status) << ',' << csv_field(r.ce_status) << ',' << csv_field(r.robust_status)
        << '\n';
  }
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  out << "n_samples,filter,ok,failed,mean,median,p95,p97_5,max,failure_rate,warning\n";
  for (const SummaryRow& r : rows) {
    out << r.n_samples << ',' << r.filter << ',' << r.ok << ',' << r.failed << ',' << fmt(r.mean)
        << ',' << fmt(r.median) << ',' << fmt(r.p95) << ',' << fmt(r.p975) << ',' << fmt(r.max)
        << ',' << fmt(r.failure_rate) << ',' << (r.warning ? "failure rate above 50%" : "") << '\n';
  }
}

void write_tail_csv(const std::filesystem::path& path, const TailReport& t) {
  auto out = open_out(path);
  out << "threshold,conditioned,paired,worst_ce,worst_robust,worst_ratio,max_pair_ratio,"
         "worst_ce_seed,worst_robust_seed,message\n";
  out << fmt(t.threshold) << ',' << t.conditioned << ',' << t.paired << ',' << fmt(t.worst_ce)
      << ',' << fmt(t.worst_robust) << ',' << fmt(t.worst_ratio) << ',' << fmt(t.max_pair_ratio)
      << ',' << t.worst_ce_seed << ',' << t.worst_robust_seed << ',' << csv_field(t.message) << '\n';
}

void write_bounds_csv(const std::filesystem::path& path, const std::vector<BoundReport>& reports) {
  auto out = open_out(path);
  out << "name,value,condition_satisfied,inputs,components\n";
  auto pairs = [](const std::vector<std::pair<std::string, double>>& kv) {
    std::string s;
    for (const auto& [k, v] : kv) s += (s.empty() ? "" : ";") + k + "=" + fmt(v);
    return s;
  };
  for (const BoundReport& r : reports) {
    out << r.name << ',' << fmt(r.value) << ',' << (r.condition_satisfied ? "true" : "false")
        << ',' << csv_field(pairs(r.inputs)) << ',' << csv_field(pairs(r.components)) << '\n';
  }
}

void write_mse_csv(const std::filesystem::path& path, const MseReport& report,
                   std::string_view filter_mode) {
  auto out = open_out(path);
  out << "filter,j_tilde,horizon_used,burn_in,basis\n";
  out << filter_mode << ',' << fmt(report.j_tilde) << ',' << report.horizon_used << ','
      << report.burn_in << ',' << to_string(report.basis) << '\n';
}

void write_ident_diagnostics_csv(const std::filesystem::path& path, const IdentResult& ident,
                                 const std::vector<std::pair<std::string, double>>& extras) {
  auto out = open_out(path);
  out << "quantity,index,value\n";
  for (Index i = 0; i < ident.singular_values.size(); ++i)
    out << "singular_value," << i + 1 << ',' << fmt(ident.singular_values(i)) << '\n';
  out << "sigma_n," << ident.n_used << ',' << fmt(ident.singular_values(ident.n_used - 1)) << '\n';
  for (const auto& [k, v] : extras) out << k << ",," << fmt(v) << '\n';
}

}  // namespace kflearn
