#include "slfem/config.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace slfem {

std::string NbCell::label() const {
  if (nb_on == 0) return std::to_string(nb_off);
  return std::to_string(nb_off) + "+" + std::to_string(nb_on);
}

SourceFn ExperimentConfig::source() const {
  double s = source_scale;
  if (source_kind == SourceKind::Paper)
    return [s](double x, double y) -> std::array<double, 2> {
      double v = s * std::sqrt(x * x + y * y + 1.0);
      return {v, v};
    };
  double vx = s * fx, vy = s * fy;
  return [vx, vy](double, double) -> std::array<double, 2> { return {vx, vy}; };
}

PicardOptions ExperimentConfig::picard_options(const ExecPolicy& ex) const {
  PicardOptions p;
  p.delta0 = delta0;
  p.max_iter = max_iter;
  p.clamp_eps = clamp_eps;
  p.norm = norm;
  p.cg_tol = cg_tol;
  p.cg_max_iter = cg_max_iter;
  p.exec = ex;
  return p;
}

UpdatePolicy ExperimentConfig::policy(const NbCell& cell, double delta) const {
  UpdatePolicy pol;
  pol.delta = delta;
  pol.theta = theta;
  pol.online_tol = online_tol;
  pol.nb_off = cell.nb_off;
  pol.nb_on = cell.nb_on;
  pol.dim_cap_fraction = dim_cap_fraction;
  pol.pou = pou;
  pol.eig.method = eig;
  pol.check_rank = check_rank;
  return pol;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config: " + field + ": " + why);
  };
  if (nx < 2 || ny < 2) fail("grid.nx/ny", "must be >= 2");
  if (Nx < 1 || Ny < 1) fail("grid.Nx/Ny", "must be >= 1");
  if (nx % Nx != 0 || ny % Ny != 0) fail("grid", "fine grid must nest in coarse grid");
  if (!(delta0 > 0)) fail("picard.delta0", "must be > 0");
  if (max_iter < 1) fail("picard.max_iter", "must be >= 1");
  if (!(clamp_eps > 0) || clamp_eps >= 1) fail("picard.clamp_eps", "must be in (0, 1)");
  if (!(cg_tol > 0)) fail("solver.cg_tol", "must be > 0");
  if (cg_max_iter < 1) fail("solver.cg_max_iter", "must be >= 1");
  if (nb_cells.empty()) fail("gmsfem.nb_off", "list must be nonempty");
  for (const auto& c : nb_cells) {
    if (c.nb_off < 1) fail("gmsfem.nb_off", "entries must be >= 1");
    if (c.nb_on < 0) fail("gmsfem.nb_on", "entries must be >= 0");
  }
  if (deltas.empty()) fail("gmsfem.delta", "list must be nonempty");
  for (double d : deltas)
    if (std::isnan(d) || d < 0) fail("gmsfem.delta", "entries must be >= 0 or inf");
  if (!(theta > 0) || theta > 1) fail("gmsfem.theta", "must be in (0, 1]");
  if (online_tol < 0) fail("gmsfem.online_tol", "must be >= 0");
  if (!(dim_cap_fraction > 0)) fail("gmsfem.dim_cap_fraction", "must be > 0");
  if (out_dir.empty()) fail("output.dir", "must be nonempty");
  switch (beta.kind) {
    case CoefficientSpec::Kind::Constant:
      if (!(beta.value > 0)) fail("beta.value", "must be > 0");
      break;
    case CoefficientSpec::Kind::Channels:
      if (!(beta.background > 0)) fail("beta.background", "must be > 0");
      if (!(beta.channel_value > 0)) fail("beta.channel_value", "must be > 0");
      break;
    case CoefficientSpec::Kind::Raster:
      if (beta.raster_path.empty()) fail("beta.raster_path", "must be set");
      break;
  }
}

namespace {

struct IniData {
  // section -> ordered (key, value) pairs
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections;

  std::vector<std::pair<std::string, std::string>>& section(const std::string& name) {
    for (auto& s : sections)
      if (s.first == name) return s.second;
    sections.push_back({name, {}});
    return sections.back().second;
  }
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

IniData parse_ini(std::istream& in) {
  IniData data;
  std::string line, current = "";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: line " + std::to_string(lineno) + ": malformed section header");
      current = trim(line.substr(1, line.size() - 2));
      data.section(current);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + ": empty key");
    data.section(current).push_back({key, val});
  }
  return data;
}

double to_double(const std::string& field, const std::string& v) {
  if (v == "inf") return kDeltaInf;
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw ConfigError("config: " + field + ": not a number: '" + v + "'");
  }
}

int to_int(const std::string& field, const std::string& v) {
  try {
    std::size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return i;
  } catch (...) {
    throw ConfigError("config: " + field + ": not an integer: '" + v + "'");
  }
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

} // namespace

ExperimentConfig load_config_text(const std::string& text) {
  std::stringstream ss(text);
  IniData ini = parse_ini(ss);

  ExperimentConfig cfg;
  std::vector<int> nb_off, nb_on = {0};
  bool beta_seen = false;
  std::string beta_spec = "model1-like";
  double beta_value = 1.0, beta_background = 1.0, beta_channel = 1e-4;
  std::vector<Rect> beta_rects;
  std::string beta_raster;

  for (const auto& [sec, entries] : ini.sections) {
    for (const auto& [key, val] : entries) {
      const std::string field = sec.empty() ? key : sec + "." + key;
      if (sec == "grid") {
        if (key == "nx") cfg.nx = to_int(field, val);
        else if (key == "ny") cfg.ny = to_int(field, val);
        else if (key == "Nx") cfg.Nx = to_int(field, val);
        else if (key == "Ny") cfg.Ny = to_int(field, val);
        else throw ConfigError("config: unknown key " + field);
      } else if (sec == "beta") {
        beta_seen = true;
        if (key == "spec") beta_spec = val;
        else if (key == "value") beta_value = to_double(field, val);
        else if (key == "background") beta_background = to_double(field, val);
        else if (key == "channel_value") beta_channel = to_double(field, val);
        else if (key == "raster_path") beta_raster = val;
        else if (key == "rect") {
          auto parts = split_list(val);
          if (parts.size() != 4)
            throw ConfigError("config: beta.rect: expected 'x0 y0 x1 y1', got '" + val + "'");
          beta_rects.push_back({to_double(field, parts[0]), to_double(field, parts[1]),
                                to_double(field, parts[2]), to_double(field, parts[3])});
        } else throw ConfigError("config: unknown key " + field);
      } else if (sec == "source") {
        if (key == "f") {
          if (val == "paper") cfg.source_kind = ExperimentConfig::SourceKind::Paper;
          else if (val == "constant") cfg.source_kind = ExperimentConfig::SourceKind::Constant;
          else throw ConfigError("config: source.f: must be 'paper' or 'constant'");
        } else if (key == "scale") cfg.source_scale = to_double(field, val);
        else if (key == "fx") cfg.fx = to_double(field, val);
        else if (key == "fy") cfg.fy = to_double(field, val);
        else throw ConfigError("config: unknown key " + field);
      } else if (sec == "picard") {
        if (key == "delta0") cfg.delta0 = to_double(field, val);
        else if (key == "max_iter") cfg.max_iter = to_int(field, val);
        else if (key == "clamp_eps") cfg.clamp_eps = to_double(field, val);
        else if (key == "norm") {
          if (val == "vh") cfg.norm = ChangeNorm::Vh;
          else if (val == "l2") cfg.norm = ChangeNorm::L2;
          else throw ConfigError("config: picard.norm: must be 'vh' or 'l2'");
        } else throw ConfigError("config: unknown key " + field);
      } else if (sec == "solver") {
        if (key == "cg_tol") cfg.cg_tol = to_double(field, val);
        else if (key == "cg_max_iter") cfg.cg_max_iter = to_int(field, val);
        else throw ConfigError("config: unknown key " + field);
      } else if (sec == "gmsfem") {
        if (key == "nb_off") {
          nb_off.clear();
          for (const auto& t : split_list(val)) nb_off.push_back(to_int(field, t));
        } else if (key == "nb_on") {
          nb_on.clear();
          for (const auto& t : split_list(val)) nb_on.push_back(to_int(field, t));
        } else if (key == "delta") {
          cfg.deltas.clear();
          for (const auto& t : split_list(val)) cfg.deltas.push_back(to_double(field, t));
        } else if (key == "theta") cfg.theta = to_double(field, val);
        else if (key == "online_tol") cfg.online_tol = to_double(field, val);
        else if (key == "pou") {
          if (val == "hat") cfg.pou = PouMode::Hat;
          else if (val == "msfem") cfg.pou = PouMode::Msfem;
          else throw ConfigError("config: gmsfem.pou: must be 'hat' or 'msfem'");
        } else if (key == "eig") {
          if (val == "auto") cfg.eig = EigOptions::Method::Auto;
          else if (val == "dense") cfg.eig = EigOptions::Method::Dense;
          else throw ConfigError("config: gmsfem.eig: must be 'auto' or 'dense'");
        } else if (key == "dim_cap_fraction") cfg.dim_cap_fraction = to_double(field, val);
        else if (key == "check_rank") {
          if (val == "true") cfg.check_rank = true;
          else if (val == "false") cfg.check_rank = false;
          else throw ConfigError("config: gmsfem.check_rank: must be 'true' or 'false'");
        } else throw ConfigError("config: unknown key " + field);
      } else if (sec == "output") {
        if (key == "dir") cfg.out_dir = val;
        else throw ConfigError("config: unknown key " + field);
      } else {
        throw ConfigError("config: unknown section [" + sec + "]");
      }
    }
  }

  if (beta_seen) {
    if (beta_spec == "constant") cfg.beta = CoefficientSpec::constant(beta_value);
    else if (beta_spec == "channels")
      cfg.beta = CoefficientSpec::channels(beta_background, beta_channel, beta_rects);
    else if (beta_spec == "raster") cfg.beta = CoefficientSpec::raster(beta_raster);
    else if (beta_spec == "model1-like") cfg.beta = CoefficientSpec::model1_like(beta_channel);
    else if (beta_spec == "model2-like") cfg.beta = CoefficientSpec::model2_like(beta_channel);
    else
      throw ConfigError("config: beta.spec: unknown spec '" + beta_spec +
                        "' (constant|channels|raster|model1-like|model2-like)");
  }

  // Pair nb_off with nb_on: a single nb_on value applies to every nb_off,
  // otherwise the lists are zipped.
  if (!nb_off.empty()) {
    cfg.nb_cells.clear();
    if (nb_on.size() == 1) {
      for (int off : nb_off) cfg.nb_cells.push_back({off, nb_on[0]});
    } else if (nb_on.size() == nb_off.size()) {
      for (std::size_t i = 0; i < nb_off.size(); ++i) cfg.nb_cells.push_back({nb_off[i], nb_on[i]});
    } else {
      throw ConfigError("config: gmsfem.nb_on: list length must be 1 or match nb_off");
    }
  } else if (nb_on.size() > 1 || (nb_on.size() == 1 && nb_on[0] != 0)) {
    if (nb_on.size() != cfg.nb_cells.size() && nb_on.size() != 1)
      throw ConfigError("config: gmsfem.nb_on: list length must be 1 or match nb_off");
    for (std::size_t i = 0; i < cfg.nb_cells.size(); ++i)
      cfg.nb_cells[i].nb_on = nb_on.size() == 1 ? nb_on[0] : nb_on[i];
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str());
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return "inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

} // namespace

std::string ExperimentConfig::echo() const {
  std::ostringstream os;
  os << "[grid]\n"
     << "nx = " << nx << "\nny = " << ny << "\nNx = " << Nx << "\nNy = " << Ny << "\n\n";

  os << "[beta]\n";
  switch (beta.kind) {
    case CoefficientSpec::Kind::Constant:
      os << "spec = constant\nvalue = " << fmt(beta.value) << "\n";
      break;
    case CoefficientSpec::Kind::Channels:
      os << "spec = channels\nbackground = " << fmt(beta.background)
         << "\nchannel_value = " << fmt(beta.channel_value) << "\n";
      for (const auto& r : beta.rects)
        os << "rect = " << fmt(r.x0) << ' ' << fmt(r.y0) << ' ' << fmt(r.x1) << ' ' << fmt(r.y1)
           << "\n";
      break;
    case CoefficientSpec::Kind::Raster:
      os << "spec = raster\nraster_path = " << beta.raster_path << "\n";
      break;
  }
  os << "\n[source]\n"
     << "f = " << (source_kind == SourceKind::Paper ? "paper" : "constant") << "\n"
     << "scale = " << fmt(source_scale) << "\n";
  if (source_kind == SourceKind::Constant) os << "fx = " << fmt(fx) << "\nfy = " << fmt(fy) << "\n";

  os << "\n[picard]\n"
     << "delta0 = " << fmt(delta0) << "\nmax_iter = " << max_iter
     << "\nclamp_eps = " << fmt(clamp_eps) << "\nnorm = " << (norm == ChangeNorm::Vh ? "vh" : "l2")
     << "\n";

  os << "\n[solver]\ncg_tol = " << fmt(cg_tol) << "\ncg_max_iter = " << cg_max_iter << "\n";

  os << "\n[gmsfem]\nnb_off =";
  for (const auto& c : nb_cells) os << ' ' << c.nb_off;
  os << "\nnb_on =";
  for (const auto& c : nb_cells) os << ' ' << c.nb_on;
  os << "\ndelta =";
  for (double d : deltas) os << ' ' << fmt(d);
  os << "\ntheta = " << fmt(theta) << "\nonline_tol = " << fmt(online_tol)
     << "\npou = " << (pou == PouMode::Msfem ? "msfem" : "hat")
     << "\neig = " << (eig == EigOptions::Method::Auto ? "auto" : "dense")
     << "\ndim_cap_fraction = " << fmt(dim_cap_fraction)
     << "\ncheck_rank = " << (check_rank ? "true" : "false") << "\n";

  os << "\n[output]\ndir = " << out_dir << "\n";
  return os.str();
}

} // namespace slfem
