#pragma once

// Command line front end. Every subcommand reads JSON inputs, runs one module
// pipeline, writes JSON/CSV artifacts, and reports through the shared exit
// codes: 0 success, 2 bad input, 3 no convergence, 4 inadmissible step,
// 5 internal assertion. A --config file, when given, overrides flag values.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "heiskam/io.hpp"

namespace heiskam {
namespace cli_detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  out.push_back(cur);
  std::erase_if(out, [](const std::string& t) { return t.empty(); });
  return out;
}

inline std::vector<double> parse_token_list(const std::string& s, const std::string& what) {
  std::vector<double> v;
  for (const std::string& tok : split_list(s)) v.push_back(parse_frequency_token(json(tok)));
  if (v.empty()) throw BadInput(what + " list is empty");
  return v;
}

inline void emit(const json& j) { std::printf("%s\n", j.dump(2).c_str()); }

inline std::string with_suffix(const std::string& path, const std::string& suffix) {
  std::size_t slash = path.find_last_of('/');
  std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + suffix;
  return path.substr(0, dot) + suffix + path.substr(dot);
}

// ---- diophantine-check -------------------------------------------------------

struct DiophantineOpts {
  std::string tau = "sqrt2,sqrt3";
  std::string eta = "sqrt3,-sqrt2";
  double gamma = 1.5;
  int bound = 200;
  int cutoff = 6;
  std::string out, config;
};

inline void run_diophantine(DiophantineOpts opt) {
  std::vector<double> tau, eta;
  if (!opt.config.empty()) {
    json j = load_json(opt.config);
    if (j.contains("tau")) tau = parse_frequency_vector(j.at("tau"), "tau");
    if (j.contains("eta")) eta = parse_frequency_vector(j.at("eta"), "eta");
    opt.gamma = j.value("gamma", opt.gamma);
    opt.bound = j.value("bound", opt.bound);
    opt.cutoff = j.value("cutoff", opt.cutoff);
    opt.out = j.value("out", opt.out);
  }
  if (tau.empty()) tau = parse_token_list(opt.tau, "tau");
  if (eta.empty()) eta = parse_token_list(opt.eta, "eta");
  FrequencyPair pair = make_pair(std::move(tau), std::move(eta), opt.gamma, opt.bound);
  json report = diophantine_report(pair, opt.cutoff);
  emit(report);
  if (!opt.out.empty()) save_json(report, opt.out);
}

// ---- solve-torus ---------------------------------------------------------------

struct SolveTorusOpts {
  std::vector<std::string> in;  // f.json g.json
  std::string pair_path;
  std::string s_list = "0,1,2,3";
  std::string out_p = "P.json";
  std::string out_csv = "tame.csv";
  std::string config;
};

inline void run_solve_torus(SolveTorusOpts opt) {
  if (!opt.config.empty()) {
    json j = load_json(opt.config);
    if (j.contains("in")) opt.in = j.at("in").get<std::vector<std::string>>();
    opt.pair_path = j.value("pair", opt.pair_path);
    opt.s_list = j.value("s", opt.s_list);
    opt.out_p = j.value("out_p", opt.out_p);
    opt.out_csv = j.value("out_csv", opt.out_csv);
  }
  if (opt.in.size() != 2) throw BadInput("solve-torus needs exactly two input fields");
  if (opt.pair_path.empty()) throw BadInput("solve-torus needs --pair");
  TorusField f = field_from_json(load_json(opt.in[0]));
  TorusField g = field_from_json(load_json(opt.in[1]));
  FrequencyPair pair = pair_from_json(load_json(opt.pair_path));

  TorusField phi = field_add(L_eta(f, pair), L_tau(g, pair), 1.0, -1.0);
  SplitTorusResult split = split_torus(f, g, phi, pair);
  save_json(field_to_json(split.P), opt.out_p);

  std::vector<TameRow> rows;
  for (const std::string& tok : split_list(opt.s_list)) {
    TameRow row;
    row.s = parse_frequency_token(json(tok));
    if (row.s < 0.0) throw BadInput("norm index must be nonnegative");
    double hi = row.s + 2.0 * pair.gamma;
    row.norm_P = sobolev_norm(split.P, row.s);
    row.norm_f_hi = sobolev_norm(f, hi);
    row.norm_g_hi = sobolev_norm(g, hi);
    double denom = row.norm_f_hi + row.norm_g_hi;
    row.tame_ratio = denom > 0.0 ? row.norm_P / denom : 0.0;
    row.res_f = sobolev_norm(split.f_res, row.s) / std::max(sobolev_norm(f, row.s), 1e-300);
    row.res_g = sobolev_norm(split.g_res, row.s) / std::max(sobolev_norm(g, row.s), 1e-300);
    rows.push_back(row);
  }
  write_text_file(opt.out_csv, tame_csv(rows));

  emit(json{{"P", opt.out_p},
            {"csv", opt.out_csv},
            {"used_fallback", split.used_fallback},
            {"ratio_f", split.ratio_f},
            {"ratio_g", split.ratio_g},
            {"ratio_P", split.ratio_P}});
}

// ---- solve-schrodinger ------------------------------------------------------------

struct SchrodingerOpts {
  std::string op;
  std::vector<std::string> in;
  std::string frame_path;
  std::string out = "P.json";
  bool backward = false;
  std::string config;
};

inline void run_schrodinger(SchrodingerOpts opt) {
  if (!opt.config.empty()) {
    json j = load_json(opt.config);
    opt.op = j.value("op", opt.op);
    if (j.contains("in")) opt.in = j.at("in").get<std::vector<std::string>>();
    opt.frame_path = j.value("frame", opt.frame_path);
    opt.out = j.value("out", opt.out);
    opt.backward = j.value("backward", opt.backward);
  }
  if (opt.frame_path.empty()) throw BadInput("solve-schrodinger needs --frame");
  RotatedFrame frame = build_frame(pair_from_json(load_json(opt.frame_path)));

  if (opt.op == "ltau" || opt.op == "leta") {
    if (opt.in.size() != 1) throw BadInput(opt.op + " takes one input grid");
    GridField f = load_grid(opt.in[0]);
    GridField P = opt.op == "ltau" ? solve_L_tau(f, frame, 1e-9, opt.backward)
                                   : solve_L_eta(f, frame);
    save_grid(P, opt.out);
    GridField back = opt.op == "ltau" ? L_tau_apply(P, frame) : L_eta_apply(P, frame);
    GridField res = grid_add(back, f, 1.0, -1.0);
    emit(json{{"P", opt.out}, {"residual_rel", res.l2() / std::max(f.l2(), 1e-300)}});
    return;
  }
  if (opt.op == "transfer") {
    if (opt.in.size() != 2) throw BadInput("transfer takes two input grids");
    GridField f = load_grid(opt.in[0]);
    GridField g = load_grid(opt.in[1]);
    TransferResult res = transfer_solve(f, g, frame);
    save_grid(res.P, opt.out);
    emit(json{{"P", opt.out},
              {"residual_tau", res.residual_tau},
              {"residual_eta", res.residual_eta}});
    return;
  }
  if (opt.op == "split") {
    if (opt.in.size() != 2 && opt.in.size() != 3)
      throw BadInput("split takes two input grids plus an optional defect grid");
    GridField f = load_grid(opt.in[0]);
    GridField g = load_grid(opt.in[1]);
    GridField phi;
    bool have_phi = opt.in.size() == 3;
    if (have_phi) phi = load_grid(opt.in[2]);
    BumpWindow window = build_bump(frame, f.L, f.P);
    SplitInfiniteResult res = split_infinite(f, g, frame, window, have_phi ? &phi : nullptr);
    save_grid(res.P, opt.out);
    std::string fres_path = with_suffix(opt.out, "_fres");
    std::string gres_path = with_suffix(opt.out, "_gres");
    save_grid(res.f_res, fres_path);
    save_grid(res.g_res, gres_path);
    emit(json{{"P", opt.out},
              {"f_res", fres_path},
              {"g_res", gres_path},
              {"phi_l2", res.phi_l2},
              {"ratio_f", res.ratio_f},
              {"ratio_g", res.ratio_g},
              {"mirrored", res.mirrored},
              {"window_retried", res.window_retried}});
    return;
  }
  throw BadInput("unknown --op \"" + opt.op + "\" (transfer | split | ltau | leta)");
}

// ---- cohomology --------------------------------------------------------------------

struct CohomologyOpts {
  int n = 2;
  std::string pair_path, out, config;
};

// Dimension counts need directions only, not the certified constant, so the
// synthetic vectors for n != 2 skip the search.
inline FrequencyPair direction_only_pair(int n) {
  static const double primes[] = {2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0};
  FrequencyPair pair;
  pair.n = n;
  for (int i = 0; i < n; ++i) {
    pair.tau_vec.push_back(std::sqrt(primes[i]));
    pair.eta_vec.push_back(std::sqrt(primes[n + i]));
  }
  pair.tau = 1.0;
  pair.eta_norm = 1.0;
  return pair;
}

inline void run_cohomology(CohomologyOpts opt) {
  if (!opt.config.empty()) {
    json j = load_json(opt.config);
    opt.n = j.value("n", opt.n);
    opt.pair_path = j.value("pair", opt.pair_path);
    opt.out = j.value("out", opt.out);
  }
  FrequencyPair pair;
  if (!opt.pair_path.empty()) {
    pair = pair_from_json(load_json(opt.pair_path));
  } else if (opt.n == 2) {
    pair = default_pair();
  } else {
    if (opt.n < 1 || 2 * opt.n > kMaxAxes) throw BadInput("--n out of range");
    pair = direction_only_pair(opt.n);
  }
  int cocycles = static_cast<int>(constant_cocycle_space(pair).cols());
  int h1 = static_cast<int>(cohomology_basis(pair).size());
  json dims{{"n", pair.n}, {"cocycles", cocycles}, {"coboundaries", cocycles - h1}, {"h1", h1}};
  emit(dims);
  if (!opt.out.empty()) save_json(dims, opt.out);
}

// ---- kam-run -------------------------------------------------------------------------

struct KamRunOpts {
  std::string config;
  std::string out = "trace.csv";
  std::string summary;
};

inline void run_kam(KamRunOpts opt) {
  if (opt.config.empty()) throw BadInput("kam-run needs --config");
  RunSpec spec = run_spec_from_json(load_json(opt.config));
  std::vector<KamTraceRow> trace;
  try {
    KamResult res = kam_run(spec.family, spec.config, &trace);
    write_text_file(opt.out, trace_csv(res.trace));
    json summary{{"family", spec.family_kind},
                 {"iterations", res.iterations},
                 {"eps_final", res.eps_final},
                 {"conjugacy_residual", res.conjugacy_residual},
                 {"lambda", res.lambda.coords},
                 {"trace", opt.out}};
    emit(summary);
    if (!opt.summary.empty()) save_json(summary, opt.summary);
  } catch (const Error&) {
    write_text_file(opt.out, trace_csv(trace));  // keep the partial trace
    throw;
  }
}

// ---- verify-suite ----------------------------------------------------------------------

struct VerifySuiteOpts {
  std::uint64_t seed = 7;
  std::string out = "suite.csv";
  std::string config;
};

inline void run_verify_suite(VerifySuiteOpts opt) {
  if (!opt.config.empty()) {
    json j = load_json(opt.config);
    opt.seed = j.value("seed", opt.seed);
    opt.out = j.value("out", opt.out);
  }
  std::vector<MeasurementRow> rows;
  auto put = [&rows](const char* module, const char* check, double value) {
    rows.push_back({module, check, value});
  };

  FrequencyPair pair = default_pair();
  put("diophantine", "certified_c", pair.c);
  put("diophantine", "worst_tau_dist", pair.worst_tau.dist);
  put("diophantine", "worst_eta_dist", pair.worst_eta.dist);
  DivisorTable table = small_divisor_table(pair, 4);
  put("diophantine", "table_const_tau", table.const_tau);
  put("diophantine", "table_const_eta", table.const_eta);
  put("diophantine", "cert_bound", table.cert_bound);

  DetRng rng(opt.seed);
  TorusField f0 = random_field(rng, 2, 3, 1.0);
  put("lattice", "sobolev0", sobolev_norm(f0, 0.0));
  {
    std::vector<double> kappa = {0.1, 0.2, 0.3, 0.4};
    std::vector<double> back = {-0.1, -0.2, -0.3, -0.4};
    TorusField rt = apply_translation_multiplier(apply_translation_multiplier(f0, kappa), back);
    put("lattice", "translate_roundtrip", sobolev_norm(field_add(f0, rt, 1.0, -1.0), 0.0));
    std::vector<cplx> samples = grid_samples(f0, 8);
    double mean_sq = 0.0;
    for (const cplx& v : samples) mean_sq += std::norm(v);
    mean_sq /= static_cast<double>(samples.size());
    double coeff_sq = sobolev_norm(f0, 0.0) * sobolev_norm(f0, 0.0);
    put("lattice", "parseval_defect", std::abs(mean_sq - coeff_sq));
    put("lattice", "smoothing_tail", sobolev_norm(smoothing_apply(f0, SmoothingProfile{4.0}), 0.0));
  }

  {
    TorusField P0 = random_field(rng, 2, 3, 1.0);
    TorusField fc = L_tau(P0, pair), gc = L_eta(P0, pair);
    TorusField P = solve_common_coboundary(fc, gc, pair);
    put("cohomology", "recover_defect",
        sobolev_norm(field_add(P, P0, 1.0, -1.0), 0.0) / sobolev_norm(P0, 0.0));
    for (double s : {0.0, 1.0, 2.0, 3.0}) {
      double hi = s + 2.0 * pair.gamma;
      double denom = sobolev_norm(fc, hi) + sobolev_norm(gc, hi);
      std::string name = "tame_ratio_s" + std::to_string(static_cast<int>(s));
      rows.push_back({"cohomology", name, sobolev_norm(P, s) / denom});
    }
    put("cohomology", "cocycle_dim", static_cast<double>(constant_cocycle_space(pair).cols()));
    put("cohomology", "h1_dim", static_cast<double>(cohomology_basis(pair).size()));
  }

  {
    const double L = 20.0;
    const int P = 512;
    RotatedFrame frame = build_frame(pair);
    put("schrodinger", "frame_tau", frame.tau);
    put("schrodinger", "frame_nu2", frame.nu2);
    GridField h0 = grid_from_function(
        [](double z1, double z2) { return std::exp(-0.5 * (z1 * z1 + z2 * z2)) / std::sqrt(kPi); },
        L, P);
    put("schrodinger", "ground_state_box2",
        box_norm(h0, 2.0) / (3.0 * h0.l2()));  // Box eigenvalue 3 at level 0
    GridField fL = L_tau_apply(h0, frame);
    GridField Pf = solve_L_tau(fL, frame);
    put("schrodinger", "ltau_recover",
        grid_add(Pf, h0, 1.0, -1.0).l2() / h0.l2());
    GridField Pb = solve_L_tau(fL, frame, 1e-9, true);
    put("schrodinger", "fwd_bwd_inner",
        grid_add(Pf, Pb, 1.0, -1.0).inner_max(0.5 * L) / h0.max_abs());
    GridField fr = random_hermite_field(rng, 5, L, P);
    BumpWindow window = build_bump(frame, L, P);
    GridField rf = R_psi_apply(fr, frame, window);
    put("schrodinger", "rpsi_annihilator", check_annihilator_tau(rf, frame, 8).worst);
  }

  {
    HeisField H = hf_random(rng, 2, 2, 1e-3);
    std::array<HeisField, 2> dH = d1_apply(H, pair);
    HeisField dd = d2_apply(dH[0], dH[1], pair);
    put("dynamics", "d2d1_defect", hf_sobolev(dd, 0.0) / hf_sobolev(H, 0.0));
    HeisField B = hf_bracket(hf_random(rng, 2, 1, 1.0), hf_random(rng, 2, 1, 1.0));
    double offcenter = 0.0;
    for (int i = 0; i < 2 * B.n; ++i) offcenter += sobolev_norm(B.comp[i], 0.0);
    put("dynamics", "bracket_offcenter", offcenter);
    PerturbedMap h = seeded_conjugator(pair, 1e-3, opt.seed + 1, 1);
    PerturbedMap h_inv = invert_map(h);
    PerturbedMap y1 = model_map(2, model_generator_tau(pair));
    PerturbedMap conj = conjugate_map(y1, h, h_inv);
    PerturbedMap back = conjugate_map(conj, h_inv, h);
    put("dynamics", "conj_roundtrip",
        c_norm(hf_add(back.total(), y1.total(), 1.0, -1.0), 0.0));
  }

  {
    PerturbationFamily fam = make_conjugated_family(pair, seeded_conjugator(pair, 2e-4, opt.seed, 1));
    KamConfig cfg;
    cfg.stencil_cutoff = 4;
    KamState st = kam_init(fam, cfg);
    put("kam", "eps0", st.eps);
    KamTraceRow row = iterative_step(fam, st, cfg);
    put("kam", "eps1", st.eps);
    put("kam", "step_ratio", st.eps / std::max(row.eps, 1e-300));
    put("kam", "residual", row.residual);
    put("kam", "admissibility", row.adm);
  }

  write_text_file(opt.out, measurement_csv(rows));
  std::printf("wrote %s (%zu measurements)\n", opt.out.c_str(), rows.size());
}

}  // namespace cli_detail

inline int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Diophantine translation pairs on the Heisenberg nilmanifold: "
               "certification, cohomological solvers, and the conjugation scheme"};
  app.require_subcommand(1);

  cli_detail::DiophantineOpts dio;
  CLI::App* sub_dio = app.add_subcommand("diophantine-check", "certify a frequency pair");
  sub_dio->add_option("--tau", dio.tau, "first direction, comma separated tokens");
  sub_dio->add_option("--eta", dio.eta, "second direction, comma separated tokens");
  sub_dio->add_option("--gamma", dio.gamma, "Diophantine exponent");
  sub_dio->add_option("--bound", dio.bound, "exhaustive search bound");
  sub_dio->add_option("--cutoff", dio.cutoff, "divisor table cutoff");
  sub_dio->add_option("--out", dio.out, "write the report JSON here too");
  sub_dio->add_option("--config", dio.config, "JSON file overriding the flags");
  sub_dio->callback([&dio] { cli_detail::run_diophantine(dio); });

  cli_detail::SolveTorusOpts st;
  CLI::App* sub_st = app.add_subcommand("solve-torus", "common primitive of a coefficient pair");
  sub_st->add_option("--in", st.in, "f.json g.json")->expected(2);
  sub_st->add_option("--pair", st.pair_path, "frequency pair JSON");
  sub_st->add_option("--s", st.s_list, "norm indices, comma separated");
  sub_st->add_option("--out-p", st.out_p, "primitive output path");
  sub_st->add_option("--out-csv", st.out_csv, "ratio table output path");
  sub_st->add_option("--config", st.config, "JSON file overriding the flags");
  sub_st->callback([&st] { cli_detail::run_solve_torus(st); });

  cli_detail::SchrodingerOpts sc;
  CLI::App* sub_sc = app.add_subcommand("solve-schrodinger", "grid solvers in the rotated frame");
  sub_sc->add_option("--op", sc.op, "transfer | split | ltau | leta");
  sub_sc->add_option("--in", sc.in, "input grid headers")->expected(1, 3);
  sub_sc->add_option("--frame", sc.frame_path, "frequency pair JSON for the frame");
  sub_sc->add_option("--out", sc.out, "output grid header path");
  sub_sc->add_flag("--backward", sc.backward, "use the backward series for ltau");
  sub_sc->add_option("--config", sc.config, "JSON file overriding the flags");
  sub_sc->callback([&sc] { cli_detail::run_schrodinger(sc); });

  cli_detail::CohomologyOpts co;
  CLI::App* sub_co = app.add_subcommand("cohomology", "constant-class dimension counts");
  sub_co->add_option("--n", co.n, "half dimension of the torus");
  sub_co->add_option("--pair", co.pair_path, "frequency pair JSON (optional)");
  sub_co->add_option("--out", co.out, "write the dimension JSON here too");
  sub_co->add_option("--config", co.config, "JSON file overriding the flags");
  sub_co->callback([&co] { cli_detail::run_cohomology(co); });

  cli_detail::KamRunOpts kr;
  CLI::App* sub_kr = app.add_subcommand("kam-run", "successive conjugation scheme");
  sub_kr->add_option("--config", kr.config, "run configuration JSON");
  sub_kr->add_option("--out", kr.out, "trace CSV path");
  sub_kr->add_option("--summary", kr.summary, "write the summary JSON here too");
  sub_kr->callback([&kr] { cli_detail::run_kam(kr); });

  cli_detail::VerifySuiteOpts vs;
  CLI::App* sub_vs = app.add_subcommand("verify-suite", "deterministic cross-module measurements");
  sub_vs->add_option("--seed", vs.seed, "measurement seed");
  sub_vs->add_option("--out", vs.out, "measurement CSV path");
  sub_vs->add_option("--config", vs.config, "JSON file overriding the flags");
  sub_vs->callback([&vs] { cli_detail::run_verify_suite(vs); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 5;
  }
  return 0;
}

}  // namespace heiskam
