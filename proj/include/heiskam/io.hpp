#pragma once

// File formats. Sparse coefficient fields, frequency pairs, and vector-field
// bundles travel as JSON; dense grids as a JSON header next to a raw blob of
// little-endian f64 interleaved re/im; traces and measurement tables as CSV
// with a versioned comment line. All floating text goes through fmt17 or the
// round-trip-exact JSON writer, so rerunning a deterministic pipeline
// reproduces every artifact byte for byte.

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "heiskam/diophantine.hpp"
#include "heiskam/heis_dynamics.hpp"
#include "heiskam/kam.hpp"
#include "heiskam/schrodinger.hpp"
#include "heiskam/torus_cohomology.hpp"

namespace heiskam {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "grid blobs are written in native order and specified as little-endian");

// ---- plain files -----------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BadInput("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw BadInput("cannot write " + path);
  out << content;
  out.flush();
  if (!out) throw BadInput("short write on " + path);
}

inline json load_json(const std::string& path) {
  std::string text = read_text_file(path);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos)
    throw BadInput("empty input file " + path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw BadInput("malformed JSON in " + path);
  return j;
}

inline void save_json(const json& j, const std::string& path) {
  write_text_file(path, j.dump(2) + "\n");
}

// ---- sparse coefficient fields ----------------------------------------------

inline json field_to_json(const TorusField& f) {
  json entries = json::array();
  for (const auto& e : f.entries) {
    json idx = json::array();
    for (int a = 0; a < f.axes(); ++a) idx.push_back(int(e.m[a]));
    entries.push_back(json::array({std::move(idx), e.c.real(), e.c.imag()}));
  }
  return json{{"n", f.n},
              {"cutoff", f.cutoff},
              {"real_valued", f.real_valued},
              {"entries", std::move(entries)}};
}

inline TorusField field_from_json(const json& j) {
  if (!j.is_object() || !j.contains("n") || !j.contains("entries"))
    throw BadInput("coefficient file: expected an object with n and entries");
  TorusField f;
  f.n = j.at("n").get<int>();
  if (f.n < 1 || 2 * f.n > kMaxAxes) throw BadInput("coefficient file: dimension out of range");
  f.cutoff = j.value("cutoff", 0);
  f.real_valued = j.value("real_valued", false);
  for (const json& row : j.at("entries")) {
    TorusField::Entry e;
    e.m = midx_zero();
    // an entry is [[m...], re, im]; a flat [m..., re, im] is accepted too
    if (row.is_array() && row.size() == 3 && row.at(0).is_array()) {
      const json& idx = row.at(0);
      if (static_cast<int>(idx.size()) != f.axes())
        throw BadInput("coefficient file: index has wrong dimension");
      for (int a = 0; a < f.axes(); ++a) e.m[a] = static_cast<int16_t>(idx.at(a).get<int>());
      e.c = cplx(row.at(1).get<double>(), row.at(2).get<double>());
    } else if (row.is_array() && static_cast<int>(row.size()) == f.axes() + 2) {
      for (int a = 0; a < f.axes(); ++a) e.m[a] = static_cast<int16_t>(row.at(a).get<int>());
      e.c = cplx(row.at(f.axes()).get<double>(), row.at(f.axes() + 1).get<double>());
    } else {
      throw BadInput("coefficient file: each entry is [[m...], re, im]");
    }
    f.entries.push_back(e);
  }
  f.normalize();
  if (f.real_valued && f.symmetry_defect() > 1e-12)
    throw BadInput("coefficient file: real_valued field breaks conjugate symmetry");
  return f;
}

// ---- frequency pairs ---------------------------------------------------------

// Accepts raw numbers, decimal strings, and square-root tokens: "sqrt2",
// "-sqrt3", "sqrt2.5".
inline double parse_frequency_token(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw BadInput("frequency entries are numbers or token strings");
  std::string s = v.get<std::string>();
  double sign = 1.0;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    sign = s[0] == '-' ? -1.0 : 1.0;
    s.erase(0, 1);
  }
  try {
    std::size_t used = 0;
    if (s.rfind("sqrt", 0) == 0) {
      double arg = std::stod(s.substr(4), &used);
      if (used != s.size() - 4 || arg < 0.0) throw BadInput("bad token");
      return sign * std::sqrt(arg);
    }
    double val = std::stod(s, &used);
    if (used != s.size()) throw BadInput("bad token");
    return sign * val;
  } catch (const Error&) {
    throw BadInput("unrecognized frequency token \"" + v.get<std::string>() + "\"");
  } catch (const std::exception&) {
    throw BadInput("unrecognized frequency token \"" + v.get<std::string>() + "\"");
  }
}

inline std::vector<double> parse_frequency_vector(const json& arr, const std::string& which) {
  if (!arr.is_array() || arr.empty())
    throw BadInput("pair file: " + which + " must be a nonempty array");
  std::vector<double> v;
  v.reserve(arr.size());
  for (const json& t : arr) v.push_back(parse_frequency_token(t));
  return v;
}

// Certification is never trusted from disk; make_pair re-runs the search.
inline FrequencyPair pair_from_json(const json& j) {
  if (!j.is_object() || !j.contains("tau") || !j.contains("eta"))
    throw BadInput("pair file: expected tau and eta arrays");
  std::vector<double> tau = parse_frequency_vector(j.at("tau"), "tau");
  std::vector<double> eta = parse_frequency_vector(j.at("eta"), "eta");
  double gamma = j.value("gamma", 1.5);
  int bound = j.value("search_bound", 200);
  return make_pair(std::move(tau), std::move(eta), gamma, bound);
}

inline json witness_to_json(const DiophantineWitness& w) {
  return json{{"m", w.m}, {"p", w.p}, {"dist", w.dist}, {"score", w.score}};
}

inline json pair_to_json(const FrequencyPair& pair) {
  return json{{"n", pair.n},
              {"tau", pair.tau_vec},
              {"eta", pair.eta_vec},
              {"gamma", pair.gamma},
              {"search_bound", pair.search_bound},
              {"c", pair.c},
              {"worst_tau", witness_to_json(pair.worst_tau)},
              {"worst_eta", witness_to_json(pair.worst_eta)}};
}

inline json diophantine_report(const FrequencyPair& pair, int table_cutoff) {
  DivisorTable table = small_divisor_table(pair, table_cutoff);
  std::size_t tau_vanishing = 0, eta_vanishing = 0;
  for (const DivisorEntry& e : table.entries) {
    if (e.tau_vanishes) ++tau_vanishing;
    if (e.eta_vanishes) ++eta_vanishing;
  }
  const DiophantineWitness& w =
      pair.worst_tau.score <= pair.worst_eta.score ? pair.worst_tau : pair.worst_eta;
  json j;
  j["c"] = pair.c;
  j["worst_m"] = w.m;
  j["worst_p"] = w.p;
  j["gamma"] = pair.gamma;
  j["search_bound"] = pair.search_bound;
  j["worst_tau"] = witness_to_json(pair.worst_tau);
  j["worst_eta"] = witness_to_json(pair.worst_eta);
  j["table_stats"] = json{{"cutoff", table.cutoff},
                          {"entries", table.entries.size()},
                          {"tau_vanishing", tau_vanishing},
                          {"eta_vanishing", eta_vanishing},
                          {"const_tau", table.const_tau},
                          {"const_eta", table.const_eta},
                          {"cert_bound", table.cert_bound}};
  return j;
}

// ---- vector-field bundles ------------------------------------------------------

inline std::vector<std::string> basis_names(int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back("X" + std::to_string(i));
  for (int i = 1; i <= n; ++i) names.push_back("L" + std::to_string(i));
  names.push_back("Z");
  return names;
}

inline json bundle_to_json(const HeisField& F) {
  json comps = json::array();
  for (const TorusField& f : F.comp) comps.push_back(field_to_json(f));
  return json{{"basis_order", basis_names(F.n)}, {"components", std::move(comps)}};
}

inline HeisField bundle_from_json(const json& j) {
  if (!j.is_object() || !j.contains("components"))
    throw BadInput("bundle file: expected an object with components");
  const json& comps = j.at("components");
  if (!comps.is_array() || comps.size() < 3 || comps.size() % 2 == 0)
    throw BadInput("bundle file: components must hold 2n+1 fields");
  HeisField F;
  F.n = (static_cast<int>(comps.size()) - 1) / 2;
  for (const json& c : comps) {
    TorusField f = field_from_json(c);
    if (f.n != F.n) throw BadInput("bundle file: component dimension disagrees with the count");
    F.comp.push_back(std::move(f));
  }
  if (j.contains("basis_order") &&
      j.at("basis_order") != json(basis_names(F.n)))
    throw BadInput("bundle file: basis_order does not match X1..Xn, L1..Ln, Z");
  return F;
}

// ---- dense grids ---------------------------------------------------------------

inline std::string grid_data_path(const std::string& header_path) {
  std::size_t slash = header_path.find_last_of('/');
  std::size_t dot = header_path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return header_path + ".f64";
  return header_path.substr(0, dot) + ".f64";
}

inline void save_grid(const GridField& f, const std::string& header_path) {
  std::string data_path = grid_data_path(header_path);
  static_assert(sizeof(double) == 8);
  std::vector<double> buf;
  buf.reserve(2 * f.samples.size());
  for (const cplx& c : f.samples) {
    buf.push_back(c.real());
    buf.push_back(c.imag());
  }
  std::ofstream out(data_path, std::ios::binary);
  if (!out) throw BadInput("cannot write " + data_path);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
  out.flush();
  if (!out) throw BadInput("short write on " + data_path);

  std::size_t slash = data_path.find_last_of('/');
  std::string blob_name = slash == std::string::npos ? data_path : data_path.substr(slash + 1);
  save_json(json{{"n", f.n}, {"L", f.L}, {"P", f.P}, {"data", blob_name}}, header_path);
}

inline GridField load_grid(const std::string& header_path) {
  json hdr = load_json(header_path);
  if (!hdr.contains("L") || !hdr.contains("P"))
    throw BadInput("grid header " + header_path + " must carry n, L, P");
  GridField f;
  f.n = hdr.value("n", 2);
  f.L = hdr.at("L").get<double>();
  f.P = hdr.at("P").get<int>();
  if (f.n != 2) throw BadInput("grid fields are two dimensional");
  if (f.L <= 0.0 || f.P < 4 || (f.P & (f.P - 1)) != 0)
    throw BadInput("grid header " + header_path + " has a bad box or sample count");

  std::string data_path = grid_data_path(header_path);
  if (hdr.contains("data")) {
    std::string name = hdr.at("data").get<std::string>();
    std::size_t slash = header_path.find_last_of('/');
    data_path = slash == std::string::npos ? name : header_path.substr(0, slash + 1) + name;
  }
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw BadInput("cannot open grid blob " + data_path);
  std::size_t count = static_cast<std::size_t>(f.P) * f.P;
  std::vector<double> buf(2 * count);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(double)) ||
      in.peek() != std::ifstream::traits_type::eof())
    throw BadInput("grid blob " + data_path + " does not hold exactly 2 P^2 doubles");
  f.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) f.samples[i] = cplx(buf[2 * i], buf[2 * i + 1]);

  double mx = f.max_abs();
  if (mx > 0.0 && f.boundary_max() > 1e-10 * mx)
    throw BadInput("grid field in " + header_path + " does not decay at the box boundary");
  return f;
}

// ---- CSV tables -----------------------------------------------------------------

inline std::string trace_csv(const std::vector<KamTraceRow>& rows) {
  std::ostringstream out;
  out << "# heiskam kam-trace v1\n";
  out << "n,eps,delta_r,K";
  for (int j = 0; j < 9; ++j) out << ",lambda_" << j;
  out << ",err_pred,err_obs,residual,t,adm,h_norm,lambda_step\n";
  for (const KamTraceRow& r : rows) {
    out << r.n << ',' << fmt17(r.eps) << ',' << fmt17(r.delta_r) << ',' << fmt17(r.K);
    for (int j = 0; j < 9; ++j) out << ',' << fmt17(r.lambda.coords[j]);
    out << ',' << fmt17(r.err_pred) << ',' << fmt17(r.err_obs) << ',' << fmt17(r.residual) << ','
        << fmt17(r.t) << ',' << fmt17(r.adm) << ',' << fmt17(r.h_norm) << ','
        << fmt17(r.lambda_step) << '\n';
  }
  return out.str();
}

struct MeasurementRow {
  std::string module, check;
  double value = 0.0;
};

inline std::string measurement_csv(const std::vector<MeasurementRow>& rows) {
  std::ostringstream out;
  out << "# heiskam measurements v1\n";
  out << "module,check,value\n";
  for (const MeasurementRow& r : rows)
    out << r.module << ',' << r.check << ',' << fmt17(r.value) << '\n';
  return out.str();
}

struct TameRow {
  double s = 0.0;
  double norm_P = 0.0;      // ||P||_s
  double norm_f_hi = 0.0;   // ||f||_{s + 2 gamma}
  double norm_g_hi = 0.0;   // ||g||_{s + 2 gamma}
  double tame_ratio = 0.0;  // ||P||_s / (||f||_{s+2g} + ||g||_{s+2g})
  double res_f = 0.0;       // ||f - L_tau P||_s / ||f||_s
  double res_g = 0.0;       // ||g - L_eta P||_s / ||g||_s
};

inline std::string tame_csv(const std::vector<TameRow>& rows) {
  std::ostringstream out;
  out << "# heiskam tame-ratios v1\n";
  out << "s,norm_P,norm_f_hi,norm_g_hi,tame_ratio,res_f,res_g\n";
  for (const TameRow& r : rows)
    out << fmt17(r.s) << ',' << fmt17(r.norm_P) << ',' << fmt17(r.norm_f_hi) << ','
        << fmt17(r.norm_g_hi) << ',' << fmt17(r.tame_ratio) << ',' << fmt17(r.res_f) << ','
        << fmt17(r.res_g) << '\n';
  return out.str();
}

// ---- run configuration -----------------------------------------------------------

inline KamConfig kam_config_from_json(const json& j) {
  KamConfig cfg;
  cfg.r0 = j.value("r0", cfg.r0);
  cfg.r = j.value("r", cfg.r);
  cfg.t0 = j.value("t0", cfg.t0);
  cfg.rho = j.value("rho", cfg.rho);
  cfg.eps_target = j.value("eps_target", cfg.eps_target);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.cbar = j.value("cbar", cfg.cbar);
  cfg.newton_tol = j.value("newton_tol", cfg.newton_tol);
  cfg.newton_max_iter = j.value("newton_max_iter", cfg.newton_max_iter);
  cfg.lambda_ball_radius = j.value("lambda_ball_radius", cfg.lambda_ball_radius);
  cfg.stencil_cutoff = j.value("stencil_cutoff", cfg.stencil_cutoff);
  cfg.support_cap = j.value("support_cap", cfg.support_cap);
  if (cfg.r0 < 1 || cfg.r < 1 || cfg.t0 <= 1.0 || cfg.rho <= 1.0 || cfg.eps_target <= 0.0 ||
      cfg.max_iters < 1 || cfg.lambda_ball_radius <= 0.0)
    throw BadInput("run config: schedule parameters out of range");
  return cfg;
}

struct RunSpec {
  FrequencyPair pair;
  PerturbationFamily family;
  KamConfig config;
  std::string family_kind;
};

inline RunSpec run_spec_from_json(const json& j) {
  RunSpec spec;
  spec.pair = j.contains("pair") ? pair_from_json(j.at("pair")) : default_pair();
  json fam = j.value("family", json{{"kind", "model"}});
  spec.family_kind = fam.value("kind", "model");
  if (spec.family_kind == "model") {
    spec.family = make_model_family(spec.pair);
  } else if (spec.family_kind == "conjugate") {
    double amplitude = fam.value("amplitude", 1e-3);
    std::uint64_t seed = fam.value("seed", std::uint64_t{7});
    int cutoff = fam.value("cutoff", 2);
    if (amplitude <= 0.0 || cutoff < 1) throw BadInput("run config: bad conjugate family");
    spec.family = make_conjugated_family(spec.pair, seeded_conjugator(spec.pair, amplitude, seed, cutoff));
  } else if (spec.family_kind == "constant") {
    double size = fam.value("size", 1e-3);
    if (size == 0.0) throw BadInput("run config: constant family needs a nonzero size");
    spec.family = make_constant_family(spec.pair, size);
  } else {
    throw BadInput("run config: unknown family kind \"" + spec.family_kind + "\"");
  }
  spec.config = kam_config_from_json(j.value("config", json::object()));
  return spec;
}

}  // namespace heiskam
