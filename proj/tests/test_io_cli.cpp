#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <heiskam/cli.hpp>

namespace heiskam {
namespace {

std::string tmp_path(const std::string& name) {
  return ::testing::TempDir() + "heiskam_io_" + name;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "heiskam");
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

json default_pair_json() {
  return json{{"tau", {"sqrt2", "sqrt3"}},
              {"eta", {"sqrt3", "-sqrt2"}},
              {"gamma", 1.5},
              {"search_bound", 200}};
}

void expect_same_field(const TorusField& a, const TorusField& b) {
  ASSERT_EQ(a.entries.size(), b.entries.size());
  ASSERT_EQ(a.n, b.n);
  for (std::size_t k = 0; k < a.entries.size(); ++k) {
    EXPECT_EQ(a.entries[k].m, b.entries[k].m);
    EXPECT_EQ(a.entries[k].c, b.entries[k].c);  // the writer is round-trip exact
  }
}

TEST(FieldJson, RoundTripsExactly) {
  DetRng rng(3);
  TorusField f = random_field(rng, 2, 2, 1.0);
  json j = json::parse(field_to_json(f).dump());
  expect_same_field(field_from_json(j), f);
}

TEST(FieldJson, AcceptsFlatEntriesAndRejectsBrokenOnes) {
  json flat{{"n", 2}, {"entries", json::array({json::array({1, 0, -1, 0, 0.5, -0.25})})}};
  TorusField f = field_from_json(flat);
  ASSERT_EQ(f.entries.size(), 1u);
  EXPECT_EQ(f.entries[0].m[2], -1);
  EXPECT_EQ(f.entries[0].c, cplx(0.5, -0.25));

  EXPECT_THROW(field_from_json(json{{"n", 2}}), BadInput);
  EXPECT_THROW(field_from_json(json::array()), BadInput);
  json wrong_dim{{"n", 2}, {"entries", json::array({json::array({json::array({1, 0}), 1.0, 0.0})})}};
  EXPECT_THROW(field_from_json(wrong_dim), BadInput);
  json short_row{{"n", 2}, {"entries", json::array({json::array({1.0, 0.0})})}};
  EXPECT_THROW(field_from_json(short_row), BadInput);

  // real_valued fields are projected onto their conjugate-symmetric part on
  // load, so a lone mode comes back as half a pair
  json asym{{"n", 2},
            {"real_valued", true},
            {"entries", json::array({json::array({json::array({1, 0, 0, 0}), 1.0, 0.0})})}};
  TorusField sym = field_from_json(asym);
  ASSERT_EQ(sym.entries.size(), 2u);
  EXPECT_EQ(sym.entries[0].c, cplx(0.5, 0.0));
  EXPECT_EQ(sym.entries[1].c, cplx(0.5, 0.0));
  EXPECT_LE(sym.symmetry_defect(), 1e-15);
}

TEST(PairJson, ParsesSymbolicTokens) {
  EXPECT_DOUBLE_EQ(parse_frequency_token(json("sqrt2")), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(parse_frequency_token(json("-sqrt3")), -std::sqrt(3.0));
  EXPECT_DOUBLE_EQ(parse_frequency_token(json("sqrt2.5")), std::sqrt(2.5));
  EXPECT_DOUBLE_EQ(parse_frequency_token(json("+0.75")), 0.75);
  EXPECT_DOUBLE_EQ(parse_frequency_token(json(0.25)), 0.25);
  EXPECT_THROW(parse_frequency_token(json("sqr2")), BadInput);
  EXPECT_THROW(parse_frequency_token(json("sqrt-2")), BadInput);
  EXPECT_THROW(parse_frequency_token(json("1.5x")), BadInput);
  EXPECT_THROW(parse_frequency_token(json(true)), BadInput);

  FrequencyPair pair = pair_from_json(default_pair_json());
  EXPECT_DOUBLE_EQ(pair.tau_vec[0], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(pair.eta_vec[1], -std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(pair.c, 0.19137191714035978);  // the certificate is recomputed on load

  EXPECT_THROW(pair_from_json(json{{"tau", {"sqrt2", "sqrt3"}}}), BadInput);
  EXPECT_THROW(pair_from_json(json{{"tau", json::array()}, {"eta", {"sqrt3"}}}), BadInput);
}

TEST(BundleJson, RoundTripsAndChecksTheBasisOrder) {
  DetRng rng(5);
  HeisField F = hf_random(rng, 2, 1, 0.3);
  json j = bundle_to_json(F);
  HeisField back = bundle_from_json(j);
  ASSERT_EQ(back.n, 2);
  for (int i = 0; i < 5; ++i) expect_same_field(back.comp[i], F.comp[i]);

  json wrong = j;
  wrong["basis_order"][0] = "Z1";
  EXPECT_THROW(bundle_from_json(wrong), BadInput);

  json even = j;
  even["components"].erase(4);
  EXPECT_THROW(bundle_from_json(even), BadInput);
  EXPECT_THROW(bundle_from_json(json{{"n", 2}}), BadInput);
}

TEST(GridFiles, RoundTripBitExactWithSidecarBlob) {
  GridField f = grid_from_function(
      [](double z1, double z2) { return std::exp(-0.5 * (z1 * z1 + z2 * z2)); }, 10.0, 64);
  std::string hdr = tmp_path("grid.json");
  save_grid(f, hdr);

  json meta = load_json(hdr);
  EXPECT_EQ(meta.at("P").get<int>(), 64);
  std::string blob = grid_data_path(hdr);
  EXPECT_EQ(meta.at("data").get<std::string>(),
            blob.substr(blob.find_last_of('/') + 1));
  EXPECT_EQ(std::filesystem::file_size(blob), 2u * 64u * 64u * sizeof(double));

  GridField back = load_grid(hdr);
  ASSERT_EQ(back.samples.size(), f.samples.size());
  EXPECT_DOUBLE_EQ(back.L, f.L);
  for (std::size_t i = 0; i < f.samples.size(); ++i) EXPECT_EQ(back.samples[i], f.samples[i]);
}

TEST(GridFiles, LoadRejectsBrokenGeometryBlobsAndNonDecay) {
  GridField f = grid_from_function(
      [](double z1, double z2) { return std::exp(-0.5 * (z1 * z1 + z2 * z2)); }, 10.0, 64);
  std::string hdr = tmp_path("grid_bad.json");
  save_grid(f, hdr);

  json meta = load_json(hdr);
  meta["P"] = 63;
  save_json(meta, hdr);
  EXPECT_THROW(load_grid(hdr), BadInput);

  meta["P"] = 64;
  save_json(meta, hdr);
  {
    std::ofstream out(grid_data_path(hdr), std::ios::binary | std::ios::trunc);
    out.write("short", 5);
  }
  EXPECT_THROW(load_grid(hdr), BadInput);

  GridField flat = grid_from_function([](double, double) { return 1.0; }, 10.0, 64);
  std::string hdr2 = tmp_path("grid_flat.json");
  save_grid(flat, hdr2);
  EXPECT_THROW(load_grid(hdr2), BadInput);

  EXPECT_THROW(load_grid(tmp_path("missing.json")), BadInput);
}

TEST(CsvTables, CarryVersionedHeadersAndExactFloats) {
  KamTraceRow row;
  row.n = 0;
  row.eps = 0.1;
  std::string trace = trace_csv({row});
  EXPECT_EQ(trace.rfind("# heiskam kam-trace v1\n", 0), 0u);
  EXPECT_NE(trace.find("err_pred,err_obs,residual"), std::string::npos);
  EXPECT_NE(trace.find("0.10000000000000001"), std::string::npos);  // 17 significant digits

  std::string meas = measurement_csv({{"m", "c", 1.0 / 3.0}});
  EXPECT_EQ(meas.rfind("# heiskam measurements v1\n", 0), 0u);
  EXPECT_EQ(std::stod(meas.substr(meas.rfind(',') + 1)), 1.0 / 3.0);

  EXPECT_EQ(tame_csv({}).rfind("# heiskam tame-ratios v1\n", 0), 0u);
}

TEST(RunConfig, ValidatesScheduleAndFamilies) {
  KamConfig cfg = kam_config_from_json(json{{"max_iters", 5}, {"stencil_cutoff", 3}});
  EXPECT_EQ(cfg.max_iters, 5);
  EXPECT_EQ(cfg.stencil_cutoff, 3);
  EXPECT_EQ(cfg.r, KamConfig{}.r);

  EXPECT_THROW(kam_config_from_json(json{{"r0", 0}}), BadInput);
  EXPECT_THROW(kam_config_from_json(json{{"rho", 1.0}}), BadInput);
  EXPECT_THROW(kam_config_from_json(json{{"eps_target", 0.0}}), BadInput);

  EXPECT_THROW(run_spec_from_json(json{{"family", {{"kind", "mystery"}}}}), BadInput);
  EXPECT_THROW(run_spec_from_json(json{{"family", {{"kind", "constant"}, {"size", 0.0}}}}),
               BadInput);
  EXPECT_THROW(run_spec_from_json(json{{"family", {{"kind", "conjugate"}, {"amplitude", -1.0}}}}),
               BadInput);
  RunSpec spec = run_spec_from_json(json{{"family", {{"kind", "constant"}, {"size", 1e-3}}}});
  EXPECT_EQ(spec.family_kind, "constant");
}

TEST(Cli, CohomologyCountsTheConstantClasses) {
  std::string out = tmp_path("dims.json");
  ASSERT_EQ(run_cli({"cohomology", "--n", "2", "--out", out}), 0);
  json dims = load_json(out);
  EXPECT_EQ(dims.at("cocycles").get<int>(), 9);
  EXPECT_EQ(dims.at("h1").get<int>(), 7);
  EXPECT_EQ(dims.at("coboundaries").get<int>(), 2);

  ASSERT_EQ(run_cli({"cohomology", "--n", "3", "--out", out}), 0);
  dims = load_json(out);
  EXPECT_EQ(dims.at("cocycles").get<int>(), 13);
  EXPECT_EQ(dims.at("h1").get<int>(), 11);
}

TEST(Cli, ConfigFileOverridesFlags) {
  std::string cfg = tmp_path("co_cfg.json");
  save_json(json{{"n", 2}}, cfg);
  std::string out = tmp_path("dims_cfg.json");
  ASSERT_EQ(run_cli({"cohomology", "--n", "3", "--config", cfg, "--out", out}), 0);
  EXPECT_EQ(load_json(out).at("n").get<int>(), 2);
}

TEST(Cli, DiophantineReportMatchesALibraryRun) {
  std::string out = tmp_path("dio.json");
  ASSERT_EQ(run_cli({"diophantine-check", "--bound", "60", "--cutoff", "3", "--out", out}), 0);
  json rep = load_json(out);
  FrequencyPair pair = make_pair({std::sqrt(2.0), std::sqrt(3.0)},
                                 {std::sqrt(3.0), -std::sqrt(2.0)}, 1.5, 60);
  EXPECT_DOUBLE_EQ(rep.at("c").get<double>(), pair.c);
  EXPECT_EQ(rep.at("worst_p").get<long long>(),
            pair.worst_tau.score <= pair.worst_eta.score ? pair.worst_tau.p : pair.worst_eta.p);
  EXPECT_GT(rep.at("table_stats").at("cert_bound").get<double>(), 0.0);
}

TEST(Cli, SolveTorusRecoversAManufacturedPrimitive) {
  FrequencyPair pair = pair_from_json(default_pair_json());
  DetRng rng(9);
  TorusField P0 = random_field(rng, 2, 2, 1.0);
  P0 = field_add(P0, field_mode(2, midx_zero(), P0.mean(), P0.real_valued), 1.0, -1.0);
  TorusField f = L_tau(P0, pair), g = L_eta(P0, pair);

  std::string f_path = tmp_path("f.json"), g_path = tmp_path("g.json");
  std::string pair_path = tmp_path("pair.json");
  save_json(field_to_json(f), f_path);
  save_json(field_to_json(g), g_path);
  save_json(default_pair_json(), pair_path);
  std::string out_p = tmp_path("P.json"), out_csv = tmp_path("tame.csv");

  ASSERT_EQ(run_cli({"solve-torus", "--in", f_path, g_path, "--pair", pair_path, "--s", "0,1",
                     "--out-p", out_p, "--out-csv", out_csv}),
            0);

  TorusField P = field_from_json(load_json(out_p));
  double defect = sobolev_norm(field_add(P, P0, 1.0, -1.0), 0.0) / sobolev_norm(P0, 0.0);
  EXPECT_LE(defect, 1e-10);

  std::string csv = read_text_file(out_csv);
  EXPECT_EQ(csv.rfind("# heiskam tame-ratios v1\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);  // banner, header, two rows
}

TEST(Cli, SchrodingerSolvesAGridFromDisk) {
  FrequencyPair pair = pair_from_json(default_pair_json());
  RotatedFrame frame = build_frame(pair);
  GridField h0 = grid_from_function(
      [](double z1, double z2) { return std::exp(-0.5 * (z1 * z1 + z2 * z2)); }, 20.0, 256);
  GridField f = L_tau_apply(h0, frame);

  std::string in = tmp_path("ltau_in.json"), pair_path = tmp_path("frame.json");
  std::string out = tmp_path("ltau_out.json");
  save_grid(f, in);
  save_json(default_pair_json(), pair_path);

  ASSERT_EQ(run_cli({"solve-schrodinger", "--op", "ltau", "--in", in, "--frame", pair_path,
                     "--out", out}),
            0);
  GridField P = load_grid(out);
  EXPECT_LE(grid_add(P, h0, 1.0, -1.0).inner_max(0.5 * h0.L), 1e-7 * h0.max_abs());

  EXPECT_EQ(run_cli({"solve-schrodinger", "--op", "warp", "--in", in, "--frame", pair_path}), 2);
  EXPECT_EQ(run_cli({"solve-schrodinger", "--op", "ltau", "--in", in}), 2);
}

TEST(Cli, KamRunOnTheModelFamilyFinishesImmediately) {
  std::string cfg = tmp_path("kam_model.json");
  save_json(json{{"family", {{"kind", "model"}}}}, cfg);
  std::string trace = tmp_path("kam_model_trace.csv");
  std::string summary = tmp_path("kam_model_summary.json");

  ASSERT_EQ(run_cli({"kam-run", "--config", cfg, "--out", trace, "--summary", summary}), 0);
  json s = load_json(summary);
  EXPECT_EQ(s.at("iterations").get<int>(), 0);
  EXPECT_LE(s.at("eps_final").get<double>(), 1e-12);
  EXPECT_LE(s.at("conjugacy_residual").get<double>(), 1e-12);
  EXPECT_EQ(read_text_file(trace).rfind("# heiskam kam-trace v1\n", 0), 0u);
}

TEST(Cli, ExitCodesFollowTheSharedTaxonomy) {
  EXPECT_EQ(run_cli({"no-such-command"}), 2);
  EXPECT_EQ(run_cli({}), 2);
  EXPECT_EQ(run_cli({"cohomology", "--bogus"}), 2);
  EXPECT_EQ(run_cli({"kam-run"}), 2);  // missing --config

  std::string empty = tmp_path("empty.json");
  write_text_file(empty, "  \n");
  EXPECT_EQ(run_cli({"cohomology", "--config", empty}), 2);

  std::string junk = tmp_path("junk.json");
  write_text_file(junk, "{not json");
  EXPECT_EQ(run_cli({"cohomology", "--config", junk}), 2);

  // a parameter-blind obstruction makes the scheme refuse: no-convergence code
  std::string cfg = tmp_path("kam_const.json");
  save_json(json{{"family", {{"kind", "constant"}, {"size", 1e-3}}}}, cfg);
  std::string trace = tmp_path("kam_const_trace.csv");
  EXPECT_EQ(run_cli({"kam-run", "--config", cfg, "--out", trace}), 3);
  // the partial trace is still written for the failed run
  EXPECT_EQ(read_text_file(trace).rfind("# heiskam kam-trace v1\n", 0), 0u);
}

}  // namespace
}  // namespace heiskam
