#pragma once

// Cohomological equations over the torus characters, plus the constant-vector
// cohomology of the step-2 nilpotent algebra spanned by X_1..X_n, L_1..L_n, Z
// with [X_i, L_j] = delta_ij Z.
//
// For a pair of difference operators L_tau, L_eta acting diagonally with
// divisors zeta(m,tau), zeta(m,eta), the common primitive of compatible data
// (f, g) is
//
//   P_m = f_m / zeta(m,tau)   where the first block of m is nonzero,
//   P_m = g_m / zeta(m,eta)   on the vanishing stratum (m nonzero),
//   P_0 = 0,
//
// with the tame loss ||P||_s <= C (||f||_{s+2 gamma} + ||g||_{s+2 gamma}).
// The same formula splits an approximate cocycle into an exact coboundary
// plus residues controlled by the defect phi = L_eta f - L_tau g.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "heiskam/diophantine.hpp"
#include "heiskam/lattice_fourier.hpp"

namespace heiskam {

// ---- constant vectors in the nilpotent algebra ----------------------------

struct HeisVector {
  std::vector<double> x_part;    // X_1..X_n coefficients
  std::vector<double> lam_part;  // L_1..L_n coefficients
  double z_part = 0.0;

  explicit HeisVector(int n = 2) : x_part(n, 0.0), lam_part(n, 0.0) {}

  int dim_n() const { return static_cast<int>(x_part.size()); }

  double offcenter_norm() const {
    double s = 0.0;
    for (double v : x_part) s += v * v;
    for (double v : lam_part) s += v * v;
    return std::sqrt(s);
  }
  double norm() const { return std::sqrt(offcenter_norm() * offcenter_norm() + z_part * z_part); }
};

inline HeisVector heis_add(const HeisVector& a, const HeisVector& b, double wa = 1.0, double wb = 1.0) {
  HeisVector r(a.dim_n());
  for (int i = 0; i < a.dim_n(); ++i) {
    r.x_part[i] = wa * a.x_part[i] + wb * b.x_part[i];
    r.lam_part[i] = wa * a.lam_part[i] + wb * b.lam_part[i];
  }
  r.z_part = wa * a.z_part + wb * b.z_part;
  return r;
}

// [A, B] lands in the center: (A_x . B_lam - A_lam . B_x) Z.
inline HeisVector heis_bracket(const HeisVector& a, const HeisVector& b) {
  HeisVector r(a.dim_n());
  double s = 0.0;
  for (int i = 0; i < a.dim_n(); ++i) s += a.x_part[i] * b.lam_part[i] - a.lam_part[i] * b.x_part[i];
  r.z_part = s;
  return r;
}

inline HeisVector model_generator_tau(const FrequencyPair& pair) {
  HeisVector y(pair.n);
  y.x_part = pair.tau_vec;
  return y;
}

inline HeisVector model_generator_eta(const FrequencyPair& pair) {
  HeisVector y(pair.n);
  y.lam_part = pair.eta_vec;
  return y;
}

inline Eigen::VectorXd heis_to_vec(const HeisVector& h) {
  int n = h.dim_n();
  Eigen::VectorXd v(2 * n + 1);
  for (int i = 0; i < n; ++i) v[i] = h.x_part[i];
  for (int i = 0; i < n; ++i) v[n + i] = h.lam_part[i];
  v[2 * n] = h.z_part;
  return v;
}

inline HeisVector vec_to_heis(const Eigen::VectorXd& v) {
  int n = (static_cast<int>(v.size()) - 1) / 2;
  HeisVector h(n);
  for (int i = 0; i < n; ++i) h.x_part[i] = v[i];
  for (int i = 0; i < n; ++i) h.lam_part[i] = v[n + i];
  h.z_part = v[2 * n];
  return h;
}

// ---- divisor solvers -------------------------------------------------------

// Difference operators along the two embedded directions.
inline TorusField L_tau(const TorusField& f, const FrequencyPair& pair) {
  return coboundary_multiplier(f, pair.tau_embedded());
}
inline TorusField L_eta(const TorusField& f, const FrequencyPair& pair) {
  return coboundary_multiplier(f, pair.eta_embedded());
}

// Projection onto the characters whose first block is nonzero. Idempotent and
// diagonal, absorbs L_tau (R L_tau = L_tau) and commutes with L_eta.
inline TorusField project_R(const TorusField& f, const FrequencyPair& pair) {
  TorusField r = f;
  std::erase_if(r.entries,
                [&pair](const TorusField::Entry& e) { return pair.block_tau_zero(e.m); });
  return r;
}

struct CoboundaryOptions {
  double compat_tol = 1e-10;
  double obstruction_tol = 1e-12;
  double mean_tol = 1e-12;
};

// Common primitive P with L_tau P = f, L_eta P = g for exactly compatible
// data. Obstructions live on the vanishing stratum of the first block: any
// f-mass there cannot be hit and is reported, not divided.
inline TorusField solve_common_coboundary(const TorusField& f, const TorusField& g,
                                          const FrequencyPair& pair,
                                          const CoboundaryOptions& opt = {}) {
  require(f.n == pair.n && g.n == pair.n, "field/pair dimension mismatch");
  double scale = std::max({sobolev_norm(f, 0.0), sobolev_norm(g, 0.0), 1e-300});
  if (std::abs(f.mean()) > opt.mean_tol * scale || std::abs(g.mean()) > opt.mean_tol * scale)
    throw NonZeroMean("coboundary data must have zero average");

  TorusField defect = field_add(L_eta(f, pair), L_tau(g, pair), 1.0, -1.0);
  double dn = sobolev_norm(defect, 0.0);
  if (dn > opt.compat_tol * scale)
    throw CocycleViolation("compatibility defect " + fmt17(dn) + " exceeds tolerance");

  for (const auto& e : f.entries) {
    if (pair.block_tau_zero(e.m) && !(e.m == midx_zero()) && std::abs(e.c) > opt.obstruction_tol * scale) {
      throw ObstructionNonzero("f has mass " + fmt17(std::abs(e.c)) + " on the vanishing stratum");
    }
  }

  TorusField P;
  P.n = f.n;
  P.cutoff = std::max(f.cutoff, g.cutoff);
  P.real_valued = f.real_valued && g.real_valued;
  for (const auto& e : f.entries) {
    if (e.m == midx_zero() || pair.block_tau_zero(e.m)) continue;
    P.entries.push_back({e.m, e.c / pair.zeta_tau(e.m)});
  }
  for (const auto& e : g.entries) {
    if (e.m == midx_zero() || !pair.block_tau_zero(e.m)) continue;
    P.entries.push_back({e.m, e.c / pair.zeta_eta(e.m)});
  }
  P.normalize();
  if (P.real_valued) require(P.symmetry_defect() <= 1e-13, "primitive lost conjugate symmetry");
  return P;
}

struct SplitTorusResult {
  TorusField P;      // exact primitive candidate
  TorusField f_res;  // f - L_tau P, supported on the vanishing stratum
  TorusField g_res;  // g - L_eta P
  bool used_fallback = false;
  // measured constants ||f_res||_s / ||phi||_{s+2 gamma} etc., at s = 0
  double ratio_f = 0.0, ratio_g = 0.0, ratio_P = 0.0;
};

struct SplitTorusOptions {
  double cochain_tol = 1e-10;
  double mean_tol = 1e-12;
};

// Splitting of approximately compatible data: given phi = L_eta f - L_tau g,
// produce P so that f - L_tau P and g - L_eta P are bounded by ||phi|| with
// the tame divisor loss. If the divisor formula returns zero while data
// remains, falls back to the single largest mode of phi (lexicographic
// tie break) with constants degraded by one.
inline SplitTorusResult split_torus(const TorusField& f, const TorusField& g, const TorusField& phi,
                                    const FrequencyPair& pair, const SplitTorusOptions& opt = {}) {
  require(f.n == pair.n && g.n == pair.n && phi.n == pair.n, "field/pair dimension mismatch");
  double scale =
      std::max({sobolev_norm(f, 0.0), sobolev_norm(g, 0.0), sobolev_norm(phi, 0.0), 1e-300});
  if (std::abs(f.mean()) > opt.mean_tol * scale || std::abs(g.mean()) > opt.mean_tol * scale)
    throw NonZeroMean("split data must have zero average");
  TorusField defect =
      field_add(field_add(L_eta(f, pair), L_tau(g, pair), 1.0, -1.0), phi, 1.0, -1.0);
  if (sobolev_norm(defect, 0.0) > opt.cochain_tol * scale)
    throw NotACochain("phi does not match L_eta f - L_tau g, defect " +
                      fmt17(sobolev_norm(defect, 0.0)));

  SplitTorusResult out;
  out.P.n = f.n;
  out.P.cutoff = std::max(f.cutoff, g.cutoff);
  out.P.real_valued = f.real_valued && g.real_valued;
  for (const auto& e : f.entries) {
    if (e.m == midx_zero() || pair.block_tau_zero(e.m)) continue;
    out.P.entries.push_back({e.m, e.c / pair.zeta_tau(e.m)});
  }
  for (const auto& e : g.entries) {
    if (e.m == midx_zero() || !pair.block_tau_zero(e.m)) continue;
    out.P.entries.push_back({e.m, e.c / pair.zeta_eta(e.m)});
  }
  out.P.normalize();

  if (out.P.entries.empty() && !phi.entries.empty()) {
    // largest |phi_m|; ties resolve to the lexicographically smallest index
    const TorusField::Entry* best = nullptr;
    for (const auto& e : phi.entries)
      if (!best || std::abs(e.c) > std::abs(best->c)) best = &e;
    out.P = field_mode(phi.n, best->m, best->c);
    out.P.real_valued = false;
    out.used_fallback = true;
  }

  out.f_res = field_add(f, L_tau(out.P, pair), 1.0, -1.0);
  out.g_res = field_add(g, L_eta(out.P, pair), 1.0, -1.0);

  double s2g = 2.0 * pair.gamma;
  double phi_hi = sobolev_norm(phi, s2g);
  double data_hi = sobolev_norm(f, s2g) + sobolev_norm(g, s2g);
  if (phi_hi > 0.0) {
    out.ratio_f = sobolev_norm(out.f_res, 0.0) / phi_hi;
    out.ratio_g = sobolev_norm(out.g_res, 0.0) / phi_hi;
  }
  if (data_hi > 0.0) out.ratio_P = sobolev_norm(out.P, 0.0) / data_hi;
  return out;
}

// ---- constant cohomology ---------------------------------------------------
// Pairs (F, G) of constant vectors, flattened to R^{2(2n+1)} in the order
// (F_x, F_lam, F_z, G_x, G_lam, G_z). Cocycles satisfy [Y_tau, G] = [Y_eta, F],
// a single linear relation tau.G_lam + eta.F_x = 0, so they form a subspace of
// dimension 4n+1. Coboundaries are the pairs ([Y_tau, H], [Y_eta, H]), a
// 2-dimensional space of pure-center pairs; the quotient has dimension 4n-1.

inline Eigen::VectorXd pair_to_vec(const HeisVector& F, const HeisVector& G) {
  Eigen::VectorXd v(2 * (2 * F.dim_n() + 1));
  v << heis_to_vec(F), heis_to_vec(G);
  return v;
}

inline std::pair<HeisVector, HeisVector> vec_to_pair(const Eigen::VectorXd& v) {
  int half = static_cast<int>(v.size()) / 2;
  return {vec_to_heis(v.head(half)), vec_to_heis(v.tail(half))};
}

// Orthonormal basis of the kernel of a single nonzero row vector, computed
// from the Householder reflection that maps the row to e_0.
inline Eigen::MatrixXd kernel_basis_of_row(const Eigen::VectorXd& row) {
  int d = static_cast<int>(row.size());
  Eigen::MatrixXd col = row;
  col.resize(d, 1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(col);
  Eigen::MatrixXd Q = qr.householderQ();
  return Q.rightCols(d - 1);
}

// Columns: an orthonormal basis of the cocycle subspace, dimension 4n+1.
inline Eigen::MatrixXd constant_cocycle_space(const FrequencyPair& pair) {
  int n = pair.n;
  int d = 2 * (2 * n + 1);
  Eigen::VectorXd rel = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < n; ++i) rel[i] = pair.eta_vec[i];                    // eta . F_x
  for (int i = 0; i < n; ++i) rel[(2 * n + 1) + n + i] = pair.tau_vec[i];  // tau . G_lam
  return kernel_basis_of_row(rel);
}

// The coboundary of a constant H: ([Y_tau, H], [Y_eta, H]).
inline std::pair<HeisVector, HeisVector> constant_coboundary(const HeisVector& H,
                                                             const FrequencyPair& pair) {
  return {heis_bracket(model_generator_tau(pair), H), heis_bracket(model_generator_eta(pair), H)};
}

// Representatives of the cohomology quotient: zero centers, off-center parts
// spanning the relation kernel in R^{4n}. Dimension 4n-1.
inline std::vector<std::pair<HeisVector, HeisVector>> cohomology_basis(const FrequencyPair& pair) {
  int n = pair.n;
  Eigen::VectorXd rel = Eigen::VectorXd::Zero(4 * n);
  for (int i = 0; i < n; ++i) rel[i] = pair.eta_vec[i];          // eta . F_x
  for (int i = 0; i < n; ++i) rel[3 * n + i] = pair.tau_vec[i];  // tau . G_lam
  Eigen::MatrixXd K = kernel_basis_of_row(rel);

  std::vector<std::pair<HeisVector, HeisVector>> reps;
  reps.reserve(K.cols());
  for (int j = 0; j < K.cols(); ++j) {
    HeisVector F(n), G(n);
    for (int i = 0; i < n; ++i) {
      F.x_part[i] = K(i, j);
      F.lam_part[i] = K(n + i, j);
      G.x_part[i] = K(2 * n + i, j);
      G.lam_part[i] = K(3 * n + i, j);
    }
    reps.emplace_back(F, G);
  }

  // sanity: coboundaries plus representatives exhaust the cocycle space
  Eigen::MatrixXd all(2 * (2 * n + 1), 2 + static_cast<int>(reps.size()));
  HeisVector h1(n), h2(n);
  h1.lam_part[0] = 1.0;  // [Y_tau, .] reaches the first center
  h2.x_part[0] = 1.0;    // [Y_eta, .] reaches the second
  auto cb1 = constant_coboundary(h1, pair);
  auto cb2 = constant_coboundary(h2, pair);
  all.col(0) = pair_to_vec(cb1.first, cb1.second);
  all.col(1) = pair_to_vec(cb2.first, cb2.second);
  for (std::size_t j = 0; j < reps.size(); ++j)
    all.col(2 + static_cast<int>(j)) = pair_to_vec(reps[j].first, reps[j].second);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(all);
  require(qr.rank() == 4 * n + 1, "cohomology representatives do not complement the coboundaries");
  return reps;
}

// ---- the commuting family (n = 2) ------------------------------------------
// Nine chart coordinates: all of F_1 and all of F_2 except F_2's first
// lam coordinate, which the commutation relation
//   [Y_1 + F_1, Y_2 + F_2] = 0
// determines as a rational function of the rest (the denominator tau_1 + f1x1
// stays away from zero on the chart).

struct FamilyParameter {
  // order: f1x1, f1x2, f1l1, f1l2, f1z, f2x1, f2x2, f2l2, f2z
  std::array<double, 9> coords{};

  double norm() const {
    double s = 0.0;
    for (double v : coords) s += v * v;
    return std::sqrt(s);
  }
};

inline std::pair<HeisVector, HeisVector> family_generators(const FamilyParameter& lam,
                                                           const FrequencyPair& pair,
                                                           double commute_tol = 1e-12) {
  require(pair.n == 2, "the parametrized family is defined for n = 2");
  const auto& q = lam.coords;
  double tau1 = pair.tau_vec[0], tau2 = pair.tau_vec[1];
  double eta1 = pair.eta_vec[0], eta2 = pair.eta_vec[1];
  if (std::abs(q[0]) >= 0.5 * std::abs(tau1))
    throw ConstraintViolated("chart coordinate f1x1 = " + fmt17(q[0]) + " leaves the chart");

  HeisVector F1(2), F2(2);
  F1.x_part = {q[0], q[1]};
  F1.lam_part = {q[2], q[3]};
  F1.z_part = q[4];
  F2.x_part = {q[5], q[6]};
  F2.lam_part = {0.0, q[7]};
  F2.z_part = q[8];

  // solve the commutation relation for F2's first lam coordinate
  double rhs = F2.x_part[0] * F1.lam_part[0] + F2.x_part[1] * F1.lam_part[1] -
               F2.lam_part[1] * F1.x_part[1] - tau2 * F2.lam_part[1] - eta1 * F1.x_part[0] -
               eta2 * F1.x_part[1];
  F2.lam_part[0] = rhs / (tau1 + F1.x_part[0]);

  HeisVector A = heis_add(model_generator_tau(pair), F1);
  HeisVector B = heis_add(model_generator_eta(pair), F2);
  HeisVector comm = heis_bracket(A, B);
  double scale = std::max(1.0, A.norm() * B.norm());
  if (std::abs(comm.z_part) > commute_tol * scale)
    throw ConstraintViolated("generators fail to commute, defect " + fmt17(comm.z_part));
  return {F1, F2};
}

inline FamilyParameter parameter_from_generators(const HeisVector& F1, const HeisVector& F2,
                                                 const FrequencyPair& pair,
                                                 double commute_tol = 1e-10) {
  require(pair.n == 2, "the parametrized family is defined for n = 2");
  FamilyParameter lam;
  lam.coords = {F1.x_part[0], F1.x_part[1], F1.lam_part[0], F1.lam_part[1], F1.z_part,
                F2.x_part[0], F2.x_part[1], F2.lam_part[1], F2.z_part};
  auto rebuilt = family_generators(lam, pair, commute_tol);
  double defect = std::abs(rebuilt.second.lam_part[0] - F2.lam_part[0]);
  if (defect > commute_tol * std::max(1.0, F2.norm()))
    throw ConstraintViolated("generators are not in the commuting family, defect " + fmt17(defect));
  return lam;
}

// Conjugating by a constant exp(H) keeps the off-center parts and shifts the
// centers by -[Y_i + F_i, H]. The canonical representative zeroes the centers
// via the minimum-norm H; when the centers are already zero the solve returns
// H = 0, so the map is idempotent.
inline FamilyParameter reduce_conjugacy(const FamilyParameter& lam, const FrequencyPair& pair) {
  auto [F1, F2] = family_generators(lam, pair);
  HeisVector A = heis_add(model_generator_tau(pair), F1);
  HeisVector B = heis_add(model_generator_eta(pair), F2);

  Eigen::MatrixXd M(2, 4);  // unknown H = (H_x1, H_x2, H_l1, H_l2)
  M << -A.lam_part[0], -A.lam_part[1], A.x_part[0], A.x_part[1],
       -B.lam_part[0], -B.lam_part[1], B.x_part[0], B.x_part[1];
  Eigen::Vector2d rhs(F1.z_part, F2.z_part);
  Eigen::VectorXd h = M.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);

  HeisVector H(2);
  H.x_part = {h[0], h[1]};
  H.lam_part = {h[2], h[3]};
  HeisVector F1r = heis_add(F1, heis_bracket(A, H), 1.0, -1.0);
  HeisVector F2r = heis_add(F2, heis_bracket(B, H), 1.0, -1.0);
  return parameter_from_generators(F1r, F2r, pair);
}

}  // namespace heiskam
