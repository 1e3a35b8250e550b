#pragma once

// Successive conjugation scheme for parametrized families of commuting pairs
// near the model translation pair. Each step smooths the current error
// fields, removes their off-center averages, solves the linearized equation
// for a conjugation field H, conjugates the whole family by exp H, and
// relocates the parameter at which the projected average of the new error
// vanishes. The parameter moves through the 9-coordinate chart of the
// commuting constant family; the projection target is the orthonormal basis
// of the constant cocycle space, so the removable class is exactly what the
// conjugation cannot reach.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "heiskam/heis_dynamics.hpp"

namespace heiskam {

// ---- families ------------------------------------------------------------------

// A parametrized family of commuting map pairs over the chart of the constant
// commuting family. The callback must return, for every admissible parameter,
// two maps that commute; the scheme probes the parameter dependence by
// central differences, so the callback should be smooth in the coordinates.
struct PerturbationFamily {
  FrequencyPair pair;
  std::function<std::pair<PerturbedMap, PerturbedMap>(const FamilyParameter&)> maps;
};

// the constant commuting family itself, as maps
inline PerturbationFamily make_model_family(const FrequencyPair& pair) {
  PerturbationFamily fam;
  fam.pair = pair;
  fam.maps = [pair](const FamilyParameter& lam) {
    auto [F1, F2] = family_generators(lam, pair);
    PerturbedMap y1 = model_map(pair.n, heis_add(model_generator_tau(pair), F1));
    PerturbedMap y2 = model_map(pair.n, heis_add(model_generator_eta(pair), F2));
    return std::make_pair(y1, y2);
  };
  return fam;
}

// the model family conjugated by a fixed near-identity map: the scheme should
// recover the conjugacy and a parameter near zero
inline PerturbationFamily make_conjugated_family(const FrequencyPair& pair,
                                                 const PerturbedMap& h_star,
                                                 const ComposeOptions& copt = {}) {
  PerturbedMap h_star_inv = invert_map(h_star, copt);
  PerturbationFamily fam;
  fam.pair = pair;
  fam.maps = [pair, h_star, h_star_inv, copt](const FamilyParameter& lam) {
    auto [F1, F2] = family_generators(lam, pair);
    PerturbedMap y1 = model_map(pair.n, heis_add(model_generator_tau(pair), F1));
    PerturbedMap y2 = model_map(pair.n, heis_add(model_generator_eta(pair), F2));
    // h* o y o h*^{-1} = (h*^{-1})^{-1} o y o h*^{-1}
    return std::make_pair(conjugate_map(y1, h_star_inv, h_star, copt),
                          conjugate_map(y2, h_star_inv, h_star, copt));
  };
  return fam;
}

// A parameter-blind pair carrying a constant off-center error along the first
// generator. The error satisfies the cocycle relation (so the pair commutes
// exactly) but constant coboundaries are purely central, so no conjugation
// removes it, and a family that never moves cannot relocate it either: the
// scheme must refuse this input rather than report success.
inline PerturbationFamily make_constant_family(const FrequencyPair& pair, double size) {
  require(pair.n == 2, "the parameter chart is defined for n = 2");
  HeisVector c(pair.n);
  c.x_part = {size * pair.eta_vec[1], -size * pair.eta_vec[0]};
  PerturbedMap y1 = model_map(pair.n, heis_add(model_generator_tau(pair), c));
  PerturbedMap y2 = model_map(pair.n, model_generator_eta(pair));
  PerturbationFamily fam;
  fam.pair = pair;
  fam.maps = [y1, y2](const FamilyParameter&) { return std::make_pair(y1, y2); };
  return fam;
}

// ---- norms and configuration ------------------------------------------------------

// C^r surrogate: Sobolev norm with the fixed embedding margin n+1 on T^{2n}
inline double c_norm(const HeisField& F, double r) { return hf_sobolev(F, r + F.n + 1); }

// Reproducible small conjugator x exp H(x): a seeded random mean-free field
// rescaled so its base norm equals the requested size.
inline PerturbedMap seeded_conjugator(const FrequencyPair& pair, double size, std::uint64_t seed,
                                      int cutoff = 2) {
  DetRng rng(seed);
  HeisField H = hf_subtract_mean(hf_random(rng, pair.n, cutoff, 1.0));
  double norm = c_norm(H, 0.0);
  require(norm > 0.0, "seeded field degenerated to zero");
  return map_from_total(pair.n, hf_scale(H, size / norm));
}

struct KamConfig {
  int r0 = 3;                 // regularity offset of the splitting loss
  int r = 12;                 // working regularity
  double t0 = 8.0;            // smoothing schedule t_n = t0 * rho^n
  double rho = 1.4;
  double eps_target = 1e-10;  // stop once the error norm falls below this
  int max_iters = 20;
  double cbar = 1e3;          // admissibility threshold for each step
  double newton_tol = 1e-12;  // bound on the projected average at the returned zero
  int newton_max_iter = 25;
  double lambda_ball_radius = 0.5;
  int stencil_cutoff = 6;   // harmonic truncation for parameter-stencil probes
  int support_cap = 64;     // hard cap on retained harmonics of the iterated maps
  // measured per-module constants entering the error prediction
  double c_quad = 1.0, c_r = 1.0, c_r0 = 1.0;
  ComposeOptions compose;
  SplitVfOptions split;

  double stencil_spacing() const { return 1e-4 * lambda_ball_radius; }
  double t_at(int n) const { return t0 * std::pow(rho, n); }
};

struct KamTraceRow {
  int n = 0;
  double t = 0.0;            // smoothing scale used this step
  double eps = 0.0;          // error norm at the step's starting parameter
  double delta_r = 0.0;      // high norm at regularity r0 + r
  double K = 0.0;            // second-difference bound in the parameter
  double adm = 0.0;          // admissibility product, must stay below cbar
  double h_norm = 0.0;       // conjugation field size at regularity r
  double lambda_step = 0.0;  // parameter movement of this step
  double err_pred = 0.0;     // predicted bound on the next error norm
  double err_obs = 0.0;      // measured next error norm
  double residual = 0.0;     // sampled conjugacy defect of the accumulated map
  FamilyParameter lambda;    // parameter zero after this step
};

struct KamResult {
  int iterations = 0;
  double eps_final = 0.0;
  double conjugacy_residual = 0.0;
  FamilyParameter lambda;
  PerturbedMap u, u_inv;  // accumulated conjugacy and its inverse
  HeisField H_total;      // displacement field of the accumulated conjugacy
  std::vector<KamTraceRow> trace;
};

// ---- probes --------------------------------------------------------------------

namespace detail {

inline bool map_is_identity(const PerturbedMap& m) {
  if (m.model.norm() != 0.0) return false;
  for (const TorusField& f : m.field.comp)
    if (!f.entries.empty()) return false;
  return true;
}

inline HeisField hf_truncate(const HeisField& F, int cutoff) {
  HeisField r = F;
  for (TorusField& f : r.comp)
    std::erase_if(f.entries,
                  [cutoff](const TorusField::Entry& e) { return midx_linf(e.m) > cutoff; });
  return r;
}

inline PerturbedMap truncate_map(const PerturbedMap& m, int cutoff) {
  return map_from_total(m.n, hf_truncate(m.total(), cutoff));
}

// error fields of a conjugated family member relative to the model generators
inline std::array<HeisField, 2> conjugated_errors(const PerturbationFamily& fam,
                                                  const FamilyParameter& lam,
                                                  const PerturbedMap& u, const PerturbedMap& u_inv,
                                                  const ComposeOptions& copt) {
  auto [m1, m2] = fam.maps(lam);
  if (!map_is_identity(u)) {
    m1 = conjugate_map(m1, u, u_inv, copt);
    m2 = conjugate_map(m2, u, u_inv, copt);
  }
  int n = fam.pair.n;
  HeisField y1 = hf_from_constant(n, model_generator_tau(fam.pair));
  HeisField y2 = hf_from_constant(n, model_generator_eta(fam.pair));
  return {hf_add(m1.total(), y1, 1.0, -1.0), hf_add(m2.total(), y2, 1.0, -1.0)};
}

inline Eigen::VectorXd class_projection(const std::array<HeisField, 2>& errs,
                                        const Eigen::MatrixXd& B) {
  Eigen::VectorXd avg = pair_to_vec(hf_mean(errs[0]), hf_mean(errs[1]));
  return B.transpose() * avg;
}

inline FamilyParameter shifted(const FamilyParameter& lam, int j, double delta) {
  FamilyParameter out = lam;
  out.coords[j] += delta;
  return out;
}

using PhiFn = std::function<Eigen::VectorXd(const FamilyParameter&)>;

// central-difference Jacobian of the projected average; the 18 node
// evaluations are independent and run on the thread budget
inline Eigen::MatrixXd phi_jacobian(const PhiFn& phi, const FamilyParameter& lam, double h) {
  int d = static_cast<int>(lam.coords.size());
  std::vector<Eigen::VectorXd> node(2 * d);
  parallel_for(node.size(), [&](std::size_t k) {
    int j = static_cast<int>(k) / 2;
    double sign = (k % 2 == 0) ? 1.0 : -1.0;
    node[k] = phi(shifted(lam, j, sign * h));
  });
  Eigen::MatrixXd J(node[0].size(), d);
  for (int j = 0; j < d; ++j) J.col(j) = (node[2 * j] - node[2 * j + 1]) / (2.0 * h);
  return J;
}

// Damped Newton for a zero of the projected average. Residuals come from the
// full-precision evaluator so the returned parameter is a zero of the true
// map; the Jacobian comes from the coarse evaluator and is refreshed only
// when the search stalls.
inline FamilyParameter newton_zero(const PhiFn& phi_full, const PhiFn& phi_coarse,
                                   const FamilyParameter& start, const KamConfig& cfg) {
  FamilyParameter lam = start;
  Eigen::VectorXd phi = phi_full(lam);
  Eigen::MatrixXd J;
  bool have_jac = false, jac_fresh = false;

  for (int it = 0; it < cfg.newton_max_iter; ++it) {
    if (phi.norm() <= cfg.newton_tol) return lam;

    if (!have_jac) {
      J = phi_jacobian(phi_coarse, lam, cfg.stencil_spacing());
      have_jac = jac_fresh = true;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (smin <= 1e-10 * std::max(1.0, smax))
      throw NewtonDiverged("the family cannot move the remaining average class (singular values "
                           + fmt17(smin) + " / " + fmt17(smax) + ")");
    Eigen::VectorXd step = svd.solve(-phi);

    FamilyParameter target = lam;
    double target_norm = 0.0;
    for (int j = 0; j < 9; ++j) {
      target.coords[j] += step[j];
      target_norm += target.coords[j] * target.coords[j];
    }
    if (std::sqrt(target_norm) > cfg.lambda_ball_radius)
      throw OutOfBall("parameter zero lies outside the configured ball (requested |lambda| = " +
                      fmt17(std::sqrt(target_norm)) + ")");

    bool accepted = false;
    double w = 1.0;
    for (int halve = 0; halve < 8; ++halve, w *= 0.5) {
      FamilyParameter cand = lam;
      for (int j = 0; j < 9; ++j) cand.coords[j] += w * step[j];
      Eigen::VectorXd phi_cand = phi_full(cand);
      if (phi_cand.norm() < phi.norm()) {
        lam = cand;
        phi = phi_cand;
        accepted = true;
        jac_fresh = false;
        break;
      }
    }
    if (!accepted) {
      if (jac_fresh)
        throw NewtonDiverged("no decrease along the Newton direction at |phi| = " +
                             fmt17(phi.norm()));
      have_jac = false;  // stale Jacobian: rebuild once at the current point
    }
  }
  throw NewtonDiverged("projected average still " + fmt17(phi.norm()) + " after " +
                       std::to_string(cfg.newton_max_iter) + " iterations");
}

}  // namespace detail

// ---- parameter solve and family norms -----------------------------------------------

// Zero of the projected average of the family's own error fields, found by
// damped Newton from the given starting parameter.
inline FamilyParameter solve_parameter(const PerturbationFamily& fam, const FamilyParameter& start,
                                       const KamConfig& cfg = {}) {
  Eigen::MatrixXd B = constant_cocycle_space(fam.pair);
  PerturbedMap id = model_map(fam.pair.n, HeisVector(fam.pair.n));
  detail::PhiFn phi = [&](const FamilyParameter& lam) {
    return detail::class_projection(detail::conjugated_errors(fam, lam, id, id, cfg.compose), B);
  };
  return detail::newton_zero(phi, phi, start, cfg);
}

// Stencil norms of the family at the configured spacing: k = 0 the error
// fields themselves, k = 1 first differences, k = 2 second differences, all
// measured in the C^r surrogate and maximized over nodes and generators.
inline double family_norms(const PerturbationFamily& fam, const FamilyParameter& center, double r,
                           int k, const KamConfig& cfg = {}) {
  if (k < 0 || k > 2) throw BadInput("family_norms order must be 0, 1 or 2");
  double h = cfg.stencil_spacing();
  PerturbedMap id = model_map(fam.pair.n, HeisVector(fam.pair.n));
  auto errs = [&](const FamilyParameter& lam) {
    try {
      return detail::conjugated_errors(fam, lam, id, id, cfg.compose);
    } catch (const ConstraintViolated& e) {
      throw StencilTooCoarse(std::string("stencil node leaves the chart: ") + e.what());
    }
  };

  double worst = 0.0;
  std::array<HeisField, 2> ec;
  if (k != 1) {
    ec = errs(center);
    if (k == 0) worst = std::max(c_norm(ec[0], r), c_norm(ec[1], r));
  }
  for (int j = 0; j < 9; ++j) {
    auto ep = errs(detail::shifted(center, j, h));
    auto em = errs(detail::shifted(center, j, -h));
    for (int i = 0; i < 2; ++i) {
      HeisField probe;
      if (k == 0) {
        worst = std::max({worst, c_norm(ep[i], r), c_norm(em[i], r)});
        continue;
      } else if (k == 1) {
        probe = hf_add(ep[i], em[i], 0.5 / h, -0.5 / h);
      } else {
        probe = hf_add(hf_add(ep[i], em[i]), ec[i], 1.0 / (h * h), -2.0 / (h * h));
      }
      worst = std::max(worst, c_norm(probe, r));
    }
  }
  return worst;
}

// ---- the iteration ---------------------------------------------------------------

struct KamState {
  int n = 0;
  FamilyParameter lambda;
  PerturbedMap u, u_inv;                // accumulated conjugacy, full precision
  PerturbedMap u_coarse, u_coarse_inv;  // truncated probes for stencil work
  std::array<HeisField, 2> errors;      // error fields at lambda, full precision
  double eps = 0.0;
  HeisField last_H;  // conjugation field of the most recent step
};

namespace detail {

// Both coarse probes are truncated: the inversion series would otherwise
// triple the support and with it the composition grids of every stencil node.
inline void refresh_coarse(KamState& st, const KamConfig& cfg) {
  st.u_coarse = truncate_map(st.u, cfg.stencil_cutoff);
  st.u_coarse_inv = map_is_identity(st.u_coarse)
                        ? st.u_coarse
                        : truncate_map(invert_map(st.u_coarse, cfg.compose), cfg.stencil_cutoff);
}

inline void enforce_support_cap(PerturbedMap& m, int cap) {
  double scale = std::max(hf_max_abs(m.field), 1e-300);
  double dropped = 0.0;
  for (TorusField& f : m.field.comp) {
    for (const auto& e : f.entries)
      if (midx_linf(e.m) > cap) dropped = std::max(dropped, std::abs(e.c));
    std::erase_if(f.entries, [cap](const TorusField::Entry& e) { return midx_linf(e.m) > cap; });
  }
  if (dropped > 1e-13 * scale)
    throw ResolutionExceeded("conjugacy carries mass " + fmt17(dropped) +
                             " beyond the harmonic cap " + std::to_string(cap));
}

inline double measure_eps(const std::array<HeisField, 2>& errs) {
  return std::max(c_norm(errs[0], 0.0), c_norm(errs[1], 0.0));
}

// five-term prediction for the next error norm, with the configured constants
inline double err_formula(double eps, double delta, double t, const KamConfig& cfg) {
  double p = 1.0 / (cfg.r0 + cfg.r);
  double q = double(cfg.r0 + 1) / (cfg.r0 + cfg.r);
  double t2r0 = std::pow(t, 2.0 * cfg.r0);
  return cfg.c_quad * eps * eps + cfg.c_quad * std::pow(delta, q) * std::pow(eps, 2.0 - q) +
         cfg.c_r * std::pow(t, -double(cfg.r)) * delta +
         cfg.c_r0 * t2r0 * std::pow(eps, 2.0 - p) * std::pow(delta, p) +
         cfg.c_r0 * t2r0 * std::pow(eps, 3.0 - p) * std::pow(delta, 2.0 * p);
}

}  // namespace detail

// Sampled defect of the conjugacy identity: max over the generators and a
// fixed point grid of the wrapped distance between (family map) o u and
// u o (model map).
inline double verify_conjugacy(const PerturbedMap& u, const PerturbationFamily& fam,
                               const FamilyParameter& lam, int grid_per_axis = 4) {
  int n = fam.pair.n;
  auto [m1, m2] = fam.maps(lam);
  PerturbedMap y1 = model_map(n, model_generator_tau(fam.pair));
  PerturbedMap y2 = model_map(n, model_generator_eta(fam.pair));

  std::vector<HeisPoint> pts;
  std::vector<int> idx(2 * n, 0);
  for (;;) {
    HeisPoint p;
    p.base = Eigen::VectorXd(2 * n);
    double spread = 0.0;
    for (int a = 0; a < 2 * n; ++a) {
      p.base[a] = (idx[a] + 0.5) / grid_per_axis;
      spread += p.base[a];
    }
    p.t = 0.5 * (spread - std::floor(spread));  // deterministic, varies over the grid
    pts.push_back(p);
    int a = 0;
    while (a < 2 * n && ++idx[a] == grid_per_axis) idx[a++] = 0;
    if (a == 2 * n) break;
  }

  double worst = 0.0;
  for (const HeisPoint& p : pts) {
    worst = std::max(worst, point_distance(apply_map(m1, apply_map(u, p)),
                                           apply_map(u, apply_map(y1, p))));
    worst = std::max(worst, point_distance(apply_map(m2, apply_map(u, p)),
                                           apply_map(u, apply_map(y2, p))));
  }
  return worst;
}

// Initial state: locate the parameter zero of the raw family and measure the
// starting error there.
inline KamState kam_init(const PerturbationFamily& fam, const KamConfig& cfg = {},
                         const FamilyParameter& start = {}) {
  KamState st;
  st.u = model_map(fam.pair.n, HeisVector(fam.pair.n));
  st.u_inv = st.u;
  st.u_coarse = st.u;
  st.u_coarse_inv = st.u;
  st.last_H = hf_zero(fam.pair.n);

  Eigen::MatrixXd B = constant_cocycle_space(fam.pair);
  detail::PhiFn phi_full = [&](const FamilyParameter& lam) {
    return detail::class_projection(
        detail::conjugated_errors(fam, lam, st.u, st.u_inv, cfg.compose), B);
  };
  st.lambda = detail::newton_zero(phi_full, phi_full, start, cfg);
  st.errors = detail::conjugated_errors(fam, st.lambda, st.u, st.u_inv, cfg.compose);
  st.eps = detail::measure_eps(st.errors);
  return st;
}

// One step of the scheme: smooth, drop off-center averages, split, conjugate
// everything by exp H, then relocate the parameter zero of the new family.
// Mutates the state and returns the completed trace row.
inline KamTraceRow iterative_step(const PerturbationFamily& fam, KamState& st,
                                  const KamConfig& cfg = {}) {
  int n = fam.pair.n;
  double t = cfg.t_at(st.n);

  KamTraceRow row;
  row.n = st.n;
  row.t = t;
  row.eps = st.eps;
  row.delta_r = std::max(c_norm(st.errors[0], cfg.r0 + cfg.r), c_norm(st.errors[1], cfg.r0 + cfg.r));

  Eigen::MatrixXd B = constant_cocycle_space(fam.pair);
  // both probes track the CURRENT coarse conjugator by reference: before the
  // update below they sample the family of step n, afterwards the new one
  auto errs_coarse = [&](const FamilyParameter& lam) {
    auto ms = fam.maps(lam);
    PerturbedMap m1 = detail::truncate_map(ms.first, cfg.stencil_cutoff);
    PerturbedMap m2 = detail::truncate_map(ms.second, cfg.stencil_cutoff);
    if (!detail::map_is_identity(st.u_coarse)) {
      m1 = conjugate_map(m1, st.u_coarse, st.u_coarse_inv, cfg.compose);
      m2 = conjugate_map(m2, st.u_coarse, st.u_coarse_inv, cfg.compose);
    }
    return std::array<HeisField, 2>{
        hf_add(m1.total(), hf_from_constant(n, model_generator_tau(fam.pair)), 1.0, -1.0),
        hf_add(m2.total(), hf_from_constant(n, model_generator_eta(fam.pair)), 1.0, -1.0)};
  };
  detail::PhiFn phi_coarse = [&](const FamilyParameter& lam) {
    return detail::class_projection(errs_coarse(lam), B);
  };

  // second-difference bound in the parameter, from the coarse stencil
  {
    double h = cfg.stencil_spacing();
    std::array<HeisField, 2> ec = errs_coarse(st.lambda);
    std::vector<double> knode(9, 0.0);
    parallel_for(9, [&](std::size_t j) {
      auto ep = errs_coarse(detail::shifted(st.lambda, static_cast<int>(j), h));
      auto em = errs_coarse(detail::shifted(st.lambda, static_cast<int>(j), -h));
      for (int i = 0; i < 2; ++i) {
        HeisField dd = hf_add(hf_add(ep[i], em[i]), ec[i], 1.0 / (h * h), -2.0 / (h * h));
        knode[j] = std::max(knode[j], c_norm(dd, 0.0));
      }
    });
    row.K = 0.0;
    for (double v : knode) row.K = std::max(row.K, v);
  }

  double adm = std::pow(t, cfg.r0) * std::pow(st.eps, 1.0 - 1.0 / (cfg.r + cfg.r0)) *
               std::pow(row.delta_r, 1.0 / (cfg.r + cfg.r0));
  row.adm = adm;
  if (!(adm < cfg.cbar)) {
    if (st.n == 0)
      throw OutOfBall("starting data is inadmissible: gate value " + fmt17(adm) +
                      " is not below " + fmt17(cfg.cbar));
    throw StepInadmissible("gate value " + fmt17(adm) + " at step " + std::to_string(st.n) +
                           " is not below " + fmt17(cfg.cbar));
  }

  // smooth (average-preserving), then drop the off-center averages; the
  // center averages stay and are absorbed by the constant tuning of the split
  std::array<HeisField, 2> data;
  for (int i = 0; i < 2; ++i) {
    data[i] = hf_smooth(st.errors[i], t);
    MIdx zero = midx_zero();
    for (int a = 0; a < 2 * n; ++a) {
      TorusField& f = data[i].comp[a];
      cplx m = f.mean();
      if (m != cplx(0.0, 0.0)) f = field_add(f, field_mode(n, zero, m, f.real_valued), 1.0, -1.0);
    }
  }

  SplitVfResult split = split_vf(data[0], data[1], fam.pair, cfg.split);
  st.last_H = split.H;
  row.h_norm = c_norm(split.H, cfg.r);

  PerturbedMap h = map_from_total(n, split.H);
  PerturbedMap h_inv = invert_map(h, cfg.compose);
  st.u = detail::map_is_identity(st.u) ? h : compose(st.u, h, cfg.compose);
  st.u_inv = detail::map_is_identity(st.u_inv) ? h_inv : compose(h_inv, st.u_inv, cfg.compose);
  detail::enforce_support_cap(st.u, cfg.support_cap);
  detail::enforce_support_cap(st.u_inv, cfg.support_cap);
  detail::refresh_coarse(st, cfg);

  detail::PhiFn phi_full = [&](const FamilyParameter& lam) {
    return detail::class_projection(
        detail::conjugated_errors(fam, lam, st.u, st.u_inv, cfg.compose), B);
  };
  FamilyParameter next = detail::newton_zero(phi_full, phi_coarse, st.lambda, cfg);

  double dlam = 0.0;
  for (int j = 0; j < 9; ++j) {
    double d = next.coords[j] - st.lambda.coords[j];
    dlam += d * d;
  }
  row.lambda_step = std::sqrt(dlam);
  row.err_pred = row.K * row.lambda_step + detail::err_formula(st.eps, row.delta_r, t, cfg);

  st.lambda = next;
  st.errors = detail::conjugated_errors(fam, st.lambda, st.u, st.u_inv, cfg.compose);
  st.eps = detail::measure_eps(st.errors);
  st.n += 1;

  row.err_obs = st.eps;
  row.residual = verify_conjugacy(st.u, fam, st.lambda);
  row.lambda = st.lambda;
  return row;
}

// Full scheme: iterate until the error norm reaches the target. The trace is
// appended row by row into trace_out (when given) so a thrown step leaves the
// completed rows behind.
inline KamResult kam_run(const PerturbationFamily& fam, const KamConfig& cfg = {},
                         std::vector<KamTraceRow>* trace_out = nullptr) {
  KamState st = kam_init(fam, cfg);
  std::vector<KamTraceRow> local;
  std::vector<KamTraceRow>& trace = trace_out ? *trace_out : local;

  while (st.eps > cfg.eps_target) {
    if (st.n >= cfg.max_iters)
      throw NoConvergence("error norm " + fmt17(st.eps) + " after " + std::to_string(st.n) +
                          " steps (target " + fmt17(cfg.eps_target) + ")");
    trace.push_back(iterative_step(fam, st, cfg));
  }

  KamResult out;
  out.iterations = st.n;
  out.eps_final = st.eps;
  out.lambda = st.lambda;
  out.u = st.u;
  out.u_inv = st.u_inv;
  out.H_total = st.u.total();
  out.conjugacy_residual = verify_conjugacy(st.u, fam, st.lambda);
  out.trace = trace;
  return out;
}

}  // namespace heiskam
