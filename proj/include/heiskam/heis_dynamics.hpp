#pragma once

// Maps of the nilmanifold close to the model translations, represented as
// p |-> p . exp(V + W(p)) with V a constant algebra element and W a periodic
// algebra-valued field on the base torus T^{2n} (the center acts trivially on
// the base, so W depends on (x, xi) only). Because the algebra is 2-step
// nilpotent, exp(A) exp(B) = exp(A + B + [A,B]/2) exactly, and compositions,
// inverses and conjugations of such maps stay in the class with closed-form
// displacement fields; no Lie-series truncation is involved anywhere except
// the numerically controlled Taylor expansion used to evaluate a field along
// a displaced argument.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "heiskam/lattice_fourier.hpp"
#include "heiskam/torus_cohomology.hpp"

namespace heiskam {

// ---- algebra-valued fields on the torus --------------------------------------

// component order: X_1..X_n, Lam_1..Lam_n, Z
struct HeisField {
  int n = 2;
  std::vector<TorusField> comp;

  int ncomp() const { return 2 * n + 1; }
  const TorusField& x(int i) const { return comp[i]; }
  const TorusField& lam(int i) const { return comp[n + i]; }
  const TorusField& z() const { return comp[2 * n]; }
  TorusField& x(int i) { return comp[i]; }
  TorusField& lam(int i) { return comp[n + i]; }
  TorusField& z() { return comp[2 * n]; }

  void validate() const {
    require(static_cast<int>(comp.size()) == ncomp(), "component count mismatch");
    for (const TorusField& f : comp) {
      require(f.n == n, "component lives on the wrong torus");
      f.validate();
    }
  }
};

inline HeisField hf_zero(int n) {
  HeisField F;
  F.n = n;
  F.comp.assign(2 * n + 1, field_zero(n, true));
  return F;
}

inline HeisField hf_from_constant(int n, const HeisVector& v) {
  HeisField F = hf_zero(n);
  MIdx zero = midx_zero();
  for (int i = 0; i < n; ++i) {
    if (v.x_part[i] != 0.0) F.comp[i] = field_mode(n, zero, v.x_part[i], true);
    if (v.lam_part[i] != 0.0) F.comp[n + i] = field_mode(n, zero, v.lam_part[i], true);
  }
  if (v.z_part != 0.0) F.comp[2 * n] = field_mode(n, zero, v.z_part, true);
  return F;
}

inline HeisField hf_random(DetRng& rng, int n, int cutoff, double amplitude) {
  HeisField F = hf_zero(n);
  for (TorusField& f : F.comp) f = random_field(rng, n, cutoff, amplitude);
  return F;
}

inline HeisVector hf_mean(const HeisField& F) {
  HeisVector v;
  v.x_part.resize(F.n);
  v.lam_part.resize(F.n);
  for (int i = 0; i < F.n; ++i) {
    v.x_part[i] = F.comp[i].mean().real();
    v.lam_part[i] = F.comp[F.n + i].mean().real();
  }
  v.z_part = F.comp[2 * F.n].mean().real();
  return v;
}

inline HeisField hf_add(const HeisField& a, const HeisField& b, double wa = 1.0, double wb = 1.0) {
  require(a.n == b.n, "dimension mismatch");
  HeisField r;
  r.n = a.n;
  r.comp.reserve(a.ncomp());
  for (int i = 0; i < a.ncomp(); ++i) r.comp.push_back(field_add(a.comp[i], b.comp[i], wa, wb));
  return r;
}

inline HeisField hf_scale(const HeisField& a, double w) {
  HeisField r = a;
  for (TorusField& f : r.comp) f = field_scale(f, w);
  return r;
}

inline HeisField hf_subtract_mean(const HeisField& a) {
  HeisField r = a;
  MIdx zero = midx_zero();
  for (TorusField& f : r.comp) {
    cplx m = f.mean();
    if (m != cplx(0.0, 0.0)) f = field_add(f, field_mode(f.n, zero, m, f.real_valued), 1.0, -1.0);
  }
  return r;
}

inline double hf_sobolev(const HeisField& F, double s) {
  double acc = 0.0;
  for (const TorusField& f : F.comp) {
    double v = sobolev_norm(f, s);
    acc += v * v;
  }
  return std::sqrt(acc);
}

inline double hf_max_abs(const HeisField& F) {
  double v = 0.0;
  for (const TorusField& f : F.comp) v = std::max(v, f.max_abs());
  return v;
}

inline int hf_support(const HeisField& F) {
  int s = 0;
  for (const TorusField& f : F.comp) s = std::max(s, f.support_linf());
  return s;
}

inline HeisField hf_prune(const HeisField& F, double rel_tol) {
  double bar = hf_max_abs(F) * rel_tol;
  HeisField r = F;
  for (TorusField& f : r.comp) {
    if (f.entries.empty()) continue;
    std::vector<TorusField::Entry> kept;
    for (const auto& e : f.entries)
      if (std::abs(e.c) > bar) kept.push_back(e);
    f.entries = std::move(kept);
    f.normalize();
  }
  return r;
}

inline HeisField hf_smooth(const HeisField& F, double t) {
  HeisField r = F;
  SmoothingProfile prof;
  prof.t = t;
  for (TorusField& f : r.comp) f = smoothing_apply(f, prof);
  return r;
}

// pointwise fiber bracket: [A, B] = (A_x . B_lam - A_lam . B_x) Z
inline HeisField hf_bracket(const HeisField& a, const HeisField& b) {
  require(a.n == b.n, "dimension mismatch");
  HeisField r = hf_zero(a.n);
  TorusField zc = field_zero(a.n, true);
  for (int i = 0; i < a.n; ++i) {
    zc = field_add(zc, field_product(a.comp[i], b.comp[a.n + i]), 1.0, 1.0);
    zc = field_add(zc, field_product(a.comp[a.n + i], b.comp[i]), 1.0, -1.0);
  }
  r.comp[2 * a.n] = zc;
  return r;
}

// exact 2-step BCH on fields: a (+) b = a + b + [a,b]/2
inline HeisField hf_bch(const HeisField& a, const HeisField& b) {
  return hf_add(hf_add(a, b), hf_scale(hf_bracket(a, b), 0.5));
}

inline HeisVector hf_eval(const HeisField& F, const std::vector<double>& p) {
  HeisVector v;
  v.x_part.resize(F.n);
  v.lam_part.resize(F.n);
  for (int i = 0; i < F.n; ++i) {
    v.x_part[i] = evaluate(F.comp[i], p).real();
    v.lam_part[i] = evaluate(F.comp[F.n + i], p).real();
  }
  v.z_part = evaluate(F.comp[2 * F.n], p).real();
  return v;
}

// ---- maps ---------------------------------------------------------------------

struct PerturbedMap {
  int n = 2;
  HeisVector model;  // constant displacement (mean of the total field)
  HeisField field;   // mean-free periodic part

  HeisField total() const { return hf_add(hf_from_constant(n, model), field); }
};

inline PerturbedMap model_map(int n, const HeisVector& v) {
  PerturbedMap m;
  m.n = n;
  m.model = v;
  m.field = hf_zero(n);
  return m;
}

// repackage a total displacement field as model = mean, field = rest
inline PerturbedMap map_from_total(int n, const HeisField& total) {
  PerturbedMap m;
  m.n = n;
  m.model = hf_mean(total);
  m.field = hf_subtract_mean(total);
  return m;
}

struct HeisPoint {
  Eigen::VectorXd base;  // (x, xi) in R^{2n}, read mod Z^{2n}
  double t = 0.0;        // center coordinate, read mod 1/2
};

inline HeisPoint apply_map(const PerturbedMap& m, const HeisPoint& p) {
  std::vector<double> q(p.base.data(), p.base.data() + p.base.size());
  HeisVector v = heis_add(m.model, hf_eval(m.field, q), 1.0, 1.0);
  HeisPoint out = p;
  double cross = 0.0;
  for (int i = 0; i < m.n; ++i) {
    out.base[i] += v.x_part[i];
    out.base[m.n + i] += v.lam_part[i];
    cross += p.base[i] * v.lam_part[i] - p.base[m.n + i] * v.x_part[i];
  }
  out.t = p.t + v.z_part + 0.5 * cross;
  return out;
}

inline HeisPoint wrap_point(const HeisPoint& p) {
  HeisPoint q = p;
  for (int i = 0; i < q.base.size(); ++i) q.base[i] -= std::floor(q.base[i]);
  q.t -= 0.5 * std::floor(q.t / 0.5);
  return q;
}

// distance with all coordinates wrapped (base mod 1, center mod 1/2)
inline double point_distance(const HeisPoint& a, const HeisPoint& b) {
  double d = 0.0;
  for (int i = 0; i < a.base.size(); ++i) {
    double u = a.base[i] - b.base[i];
    u -= std::nearbyint(u);
    d = std::max(d, std::abs(u));
  }
  double u = (a.t - b.t) / 0.5;
  u -= std::nearbyint(u);
  d = std::max(d, std::abs(0.5 * u));
  return d;
}

// ---- composition of a field with a map -----------------------------------------

struct ComposeOptions {
  double term_tol = 1e-13;   // relative cut for Taylor terms
  double alias_tol = 1e-9;   // admissible relative mass in the top shells
  int grid_cap = 48;         // hard cap on points per axis
  int order_cap = 16;        // hard cap on the per-axis Taylor order
  int alias_retries = 2;
};

namespace detail {

// shared state for expanding several fields along the same displacement
struct TaylorScratch {
  int axes = 0;
  int G = 0;
  std::size_t total = 0;
  std::vector<std::vector<double>> disp;  // sampled displacement per axis
  std::vector<double> disp_max;
};

inline std::size_t grid_total(int axes, int G) {
  std::size_t t = 1;
  for (int a = 0; a < axes; ++a) t *= static_cast<std::size_t>(G);
  return t;
}

// recursive lexicographic walk over multi-indices with per-axis early break;
// pow_grid accumulates prod_a D_a^{k_a} / k_a! level by level
template <typename Visit>
void taylor_walk(const TaylorScratch& sc, int axis, std::vector<int>& k,
                 std::vector<double>& pow_grid, double prefix_bound,
                 const std::vector<double>& axis_q, double tol, int order_cap, Visit&& visit) {
  if (axis == sc.axes) {
    visit(k, pow_grid);
    return;
  }
  // k[axis] = 0 branch keeps pow_grid as is
  taylor_walk(sc, axis + 1, k, pow_grid, prefix_bound, axis_q, tol, order_cap,
              std::forward<Visit>(visit));
  if (sc.disp_max[axis] == 0.0) return;
  std::vector<double> local = pow_grid;
  double bound = prefix_bound;
  for (int ka = 1; ka <= order_cap; ++ka) {
    bound *= axis_q[axis] / ka;
    if (bound < tol && axis_q[axis] < double(ka)) break;
    for (std::size_t i = 0; i < sc.total; ++i) local[i] *= sc.disp[axis][i] / ka;
    k[axis] = ka;
    taylor_walk(sc, axis + 1, k, local, bound, axis_q, tol, order_cap,
                std::forward<Visit>(visit));
  }
  k[axis] = 0;
}

}  // namespace detail

// Evaluate each field at p + shift + D(p): the constant shift by the exact
// phase multiplier, the periodic displacement D by the everywhere-convergent
// Taylor series sum_k d^k f(p) prod_a D_a(p)^{k_a}/k_a! assembled on a grid
// sized to the joint bandwidth, with per-term magnitude pruning and an
// aliasing monitor on the top frequency shells of the result.
inline std::vector<TorusField> compose_components(const std::vector<const TorusField*>& fields,
                                                  const std::vector<double>& shift,
                                                  const std::vector<TorusField>& disp,
                                                  const ComposeOptions& opt = {}) {
  require(!fields.empty(), "no fields to compose");
  int axes = fields[0]->axes();
  require(static_cast<int>(shift.size()) == axes, "shift dimension mismatch");

  std::vector<TorusField> translated;
  translated.reserve(fields.size());
  for (const TorusField* f : fields) {
    require(f->axes() == axes, "field dimension mismatch");
    translated.push_back(apply_translation_multiplier(*f, shift));
  }

  double disp_peak = 0.0;
  for (const TorusField& d : disp) disp_peak = std::max(disp_peak, d.max_abs());
  if (disp.empty() || disp_peak == 0.0) return translated;
  require(static_cast<int>(disp.size()) == axes, "displacement dimension mismatch");

  int N_g = 0;
  for (const TorusField& f : translated) N_g = std::max(N_g, f.support_linf());
  int N_D = 0;
  for (const TorusField& d : disp) N_D = std::max(N_D, d.support_linf());

  int G = std::min(2 * (N_g + N_D + 3) + 2, opt.grid_cap);
  for (int attempt = 0;; ++attempt) {
    int N_fit = (G - 2) / 2;
    if (G < 2 * std::max(N_g, N_D) + 1) {
      G = 2 * std::max(N_g, N_D) + 2;
      continue;
    }

    detail::TaylorScratch sc;
    sc.axes = axes;
    sc.G = G;
    sc.total = detail::grid_total(axes, G);
    sc.disp.resize(axes);
    sc.disp_max.assign(axes, 0.0);
    for (int a = 0; a < axes; ++a) {
      std::vector<cplx> samples = grid_samples(disp[a], G);
      sc.disp[a].resize(sc.total);
      for (std::size_t i = 0; i < sc.total; ++i) {
        sc.disp[a][i] = samples[i].real();
        sc.disp_max[a] = std::max(sc.disp_max[a], std::abs(sc.disp[a][i]));
      }
    }

    std::vector<TorusField> out;
    out.reserve(fields.size());
    bool alias_bad = false;
    for (const TorusField& g : translated) {
      if (g.entries.empty()) {
        out.push_back(g);
        continue;
      }
      double l1 = 0.0;
      for (const auto& e : g.entries) l1 += std::abs(e.c);
      double tol = opt.term_tol * l1;

      std::vector<double> axis_q(axes, 0.0);
      for (int a = 0; a < axes; ++a) {
        int ma = 0;
        for (const auto& e : g.entries) ma = std::max(ma, std::abs(int(e.m[a])));
        axis_q[a] = kTwoPi * ma * sc.disp_max[a];
      }

      std::vector<cplx> acc(sc.total, cplx(0.0, 0.0));
      std::vector<int> k(axes, 0);
      std::vector<double> pow0(sc.total, 1.0);
      detail::taylor_walk(
          sc, 0, k, pow0, l1, axis_q, tol, opt.order_cap,
          [&](const std::vector<int>& kk, const std::vector<double>& pw) {
            // term bound with the true coefficient profile
            bool zero_order = true;
            for (int a = 0; a < axes; ++a)
              if (kk[a] > 0) zero_order = false;
            if (zero_order) {
              std::vector<cplx> base = grid_samples(g, G);
              for (std::size_t i = 0; i < sc.total; ++i) acc[i] += base[i];
              return;
            }
            double fact = 1.0;
            for (int a = 0; a < axes; ++a)
              for (int j = 1; j <= kk[a]; ++j) fact *= j;
            double bound = 0.0;
            TorusField dg = g;
            for (auto& e : dg.entries) {
              cplx w = 1.0;
              double mag = 1.0;
              for (int a = 0; a < axes; ++a) {
                for (int j = 0; j < kk[a]; ++j) {
                  w *= cplx(0.0, kTwoPi * e.m[a]);
                  mag *= kTwoPi * std::abs(double(e.m[a])) * sc.disp_max[a];
                }
              }
              bound += mag * std::abs(e.c);
              e.c *= w;
            }
            if (bound / fact < tol) return;
            dg.normalize();
            if (dg.entries.empty()) return;
            std::vector<cplx> dgrid = grid_samples(dg, G);
            for (std::size_t i = 0; i < sc.total; ++i) acc[i] += dgrid[i] * pw[i];
          });

      FitResult fit = fit_from_samples(acc, axes / 2, G, N_fit, g.real_valued);
      // aliasing monitor: relative mass in the two outermost shells
      double total_sq = 0.0, shell_sq = 0.0;
      for (const auto& e : fit.field.entries) {
        double w = std::norm(e.c);
        total_sq += w;
        if (midx_linf(e.m) >= N_fit - 1) shell_sq += w;
      }
      if (total_sq > 0.0 && shell_sq > opt.alias_tol * opt.alias_tol * total_sq) {
        alias_bad = true;
        break;
      }
      out.push_back(fit.field);
    }

    if (!alias_bad) {
      for (TorusField& f : out) f.prune(1e-15);
      return out;
    }
    if (attempt >= opt.alias_retries)
      throw AliasingExceeded("composition spectrum does not fit a grid of " + std::to_string(G) +
                             " points per axis");
    G = std::min(G + G / 2, 2 * opt.grid_cap);
  }
}

// field components of F evaluated along the map m1 (the base-torus action of m1)
inline HeisField compose_with_map(const HeisField& F, const PerturbedMap& m1,
                                  const ComposeOptions& opt = {}) {
  require(F.n == m1.n, "dimension mismatch");
  int n = F.n;
  std::vector<double> shift(2 * n);
  HeisVector total_mean = heis_add(m1.model, hf_mean(m1.field), 1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    shift[i] = total_mean.x_part[i];
    shift[n + i] = total_mean.lam_part[i];
  }
  HeisField W = hf_subtract_mean(m1.field);
  std::vector<TorusField> disp(W.comp.begin(), W.comp.begin() + 2 * n);

  std::vector<const TorusField*> ptrs;
  for (const TorusField& f : F.comp) ptrs.push_back(&f);
  std::vector<TorusField> composed = compose_components(ptrs, shift, disp, opt);

  HeisField out;
  out.n = n;
  out.comp = std::move(composed);
  return out;
}

// ---- map algebra ----------------------------------------------------------------

// (m2 . m1)(p) = m2(m1(p)); displacement = v1 (+) v2 o m1 by the exact BCH law
inline PerturbedMap compose(const PerturbedMap& m2, const PerturbedMap& m1,
                            const ComposeOptions& opt = {}) {
  require(m2.n == m1.n, "dimension mismatch");
  HeisField v1 = m1.total();
  HeisField v2_along = compose_with_map(m2.total(), m1, opt);
  return map_from_total(m1.n, hf_bch(v1, v2_along));
}

// inverse displacement by the fixed-point iteration v_inv = -(v o m_inv);
// at the fixed point (-v o m_inv) (+) (v o m_inv) = 0 exactly
inline PerturbedMap invert_map(const PerturbedMap& m, const ComposeOptions& opt = {},
                               int max_iter = 30) {
  HeisField v = m.total();
  PerturbedMap inv = map_from_total(m.n, hf_scale(v, -1.0));
  double scale = std::max(hf_max_abs(v), 1e-300);
  for (int it = 0; it < max_iter; ++it) {
    HeisField next = hf_scale(compose_with_map(v, inv, opt), -1.0);
    double delta = hf_max_abs(hf_add(next, inv.total(), 1.0, -1.0));
    inv = map_from_total(m.n, next);
    // cut iterate dust below the convergence scale; the fitted high shells it
    // seeds would otherwise ratchet the refit support, and with it the sample
    // grid, upward on every pass
    double fmax = hf_max_abs(inv.field);
    if (fmax > 0.0) inv.field = hf_prune(inv.field, 5e-16 * scale / fmax);
    if (delta <= 1e-15 * scale) {
      inv.field = hf_prune(inv.field, 1e-13);
      return inv;
    }
  }
  throw InversionDiverged("displacement iteration did not settle in " +
                          std::to_string(max_iter) + " steps");
}

// h^{-1} o f o h
inline PerturbedMap conjugate_map(const PerturbedMap& f, const PerturbedMap& h,
                                  const PerturbedMap& h_inv, const ComposeOptions& opt = {}) {
  return compose(h_inv, compose(f, h, opt), opt);
}

// ---- cochain operators ------------------------------------------------------------

// translation of every component by the base shift of the model generator
inline HeisField hf_translate_model(const HeisField& H, const std::vector<double>& kappa) {
  HeisField r = H;
  for (TorusField& f : r.comp) f = apply_translation_multiplier(f, kappa);
  return r;
}

// d1(H)_i = H o y_i - H + [Y_i, H o y_i + H]/2
inline std::array<HeisField, 2> d1_apply(const HeisField& H, const FrequencyPair& pair) {
  std::array<HeisField, 2> out{hf_zero(H.n), hf_zero(H.n)};
  std::array<HeisVector, 2> gen{model_generator_tau(pair), model_generator_eta(pair)};
  std::array<std::vector<double>, 2> kappa{pair.tau_embedded(), pair.eta_embedded()};
  for (int i = 0; i < 2; ++i) {
    HeisField Hy = hf_translate_model(H, kappa[i]);
    HeisField diff = hf_add(Hy, H, 1.0, -1.0);
    HeisField sum = hf_add(Hy, H, 1.0, 1.0);
    HeisField br = hf_bracket(hf_from_constant(H.n, gen[i]), sum);
    out[i] = hf_add(diff, hf_scale(br, 0.5));
  }
  return out;
}

// d2(F, G) = F o y_2 - F + [Y_2, F o y_2 + F]/2 - (G o y_1 - G) - [Y_1, G o y_1 + G]/2
inline HeisField d2_apply(const HeisField& F, const HeisField& G, const FrequencyPair& pair) {
  HeisVector Y1 = model_generator_tau(pair), Y2 = model_generator_eta(pair);
  HeisField Fy2 = hf_translate_model(F, pair.eta_embedded());
  HeisField Gy1 = hf_translate_model(G, pair.tau_embedded());
  HeisField r = hf_add(Fy2, F, 1.0, -1.0);
  r = hf_add(r, hf_scale(hf_bracket(hf_from_constant(F.n, Y2), hf_add(Fy2, F)), 0.5));
  r = hf_add(r, hf_add(Gy1, G, 1.0, -1.0), 1.0, -1.0);
  r = hf_add(r, hf_scale(hf_bracket(hf_from_constant(F.n, Y1), hf_add(Gy1, G)), 0.5), 1.0, -1.0);
  return r;
}

// displacement-field difference of the two composition orders; zero iff the
// maps commute, and quadratically small in the perturbation sizes
inline HeisField commutator_defect(const PerturbedMap& f, const PerturbedMap& g,
                                   const ComposeOptions& opt = {}) {
  PerturbedMap fg = compose(f, g, opt);
  PerturbedMap gf = compose(g, f, opt);
  return hf_add(fg.total(), gf.total(), 1.0, -1.0);
}

// ---- splitting for vector-field pairs -----------------------------------------------

struct SplitVfOptions {
  double offcenter_mean_tol = 1e-8;  // relative tolerance on off-center averages
  SplitTorusOptions torus;
};

struct SplitVfResult {
  HeisField H;
  HeisField F_res, G_res;  // F - d1(H)_1, G - d1(H)_2
  bool any_fallback = false;
  double worst_ratio = 0.0;  // largest residual-to-defect ratio over components
};

// Solve d1(H) = (F, G) up to the obstruction-controlled residuals: each
// off-center component is an independent scalar pair; the center component is
// solved after the off-center solution's bracket feedback is subtracted and
// the free constants of H are tuned so both center means vanish.
inline SplitVfResult split_vf(const HeisField& F, const HeisField& G, const FrequencyPair& pair,
                              const SplitVfOptions& opt = {}) {
  require(F.n == pair.n && G.n == pair.n, "dimension mismatch");
  F.validate();
  G.validate();
  int n = pair.n;
  double scale = std::max({hf_max_abs(F), hf_max_abs(G), 1e-300});

  for (int a = 0; a < 2 * n; ++a) {
    if (std::abs(F.comp[a].mean()) > opt.offcenter_mean_tol * scale ||
        std::abs(G.comp[a].mean()) > opt.offcenter_mean_tol * scale)
      throw NontrivialClass("off-center averages obstruct the splitting (component " +
                            std::to_string(a) + ")");
  }

  SplitVfResult out;
  out.H = hf_zero(n);

  for (int a = 0; a < 2 * n; ++a) {
    TorusField f = F.comp[a], g = G.comp[a];
    MIdx zero = midx_zero();
    f = field_add(f, field_mode(f.n, zero, f.mean(), f.real_valued), 1.0, -1.0);
    g = field_add(g, field_mode(g.n, zero, g.mean(), g.real_valued), 1.0, -1.0);
    TorusField phi = field_add(L_eta(f, pair), L_tau(g, pair), 1.0, -1.0);
    SplitTorusResult st = split_torus(f, g, phi, pair, opt.torus);
    out.H.comp[a] = st.P;
    out.any_fallback = out.any_fallback || st.used_fallback;
    out.worst_ratio = std::max({out.worst_ratio, st.ratio_f, st.ratio_g});
  }

  // center data after the off-center solution feeds back through the bracket
  auto center_data = [&](bool second) {
    std::vector<double> kappa = second ? pair.eta_embedded() : pair.tau_embedded();
    TorusField acc = field_zero(n, true);
    for (int i = 0; i < n; ++i) {
      const TorusField& hcomp = second ? out.H.comp[i] : out.H.comp[n + i];
      double coeff = second ? -pair.eta_vec[i] : pair.tau_vec[i];
      TorusField sum = field_add(apply_translation_multiplier(hcomp, kappa), hcomp, 1.0, 1.0);
      acc = field_add(acc, field_scale(sum, 0.5 * coeff), 1.0, 1.0);
    }
    return acc;  // the center component of [Y_i, H o y_i + H]/2
  };

  TorusField Fc = field_add(F.z(), center_data(false), 1.0, -1.0);
  TorusField Gc = field_add(G.z(), center_data(true), 1.0, -1.0);

  // tune the free constants of H so both center means vanish: a constant c
  // added to H shifts the first mean by -tau.c_lam and the second by +eta.c_x
  double mF = Fc.mean().real();
  double mG = Gc.mean().real();
  double alpha = mF / (pair.tau * pair.tau);
  double beta = -mG / (pair.eta_norm * pair.eta_norm);
  MIdx zero = midx_zero();
  for (int i = 0; i < n; ++i) {
    out.H.comp[n + i] =
        field_add(out.H.comp[n + i], field_mode(n, zero, alpha * pair.tau_vec[i], true));
    out.H.comp[i] = field_add(out.H.comp[i], field_mode(n, zero, beta * pair.eta_vec[i], true));
  }
  Fc = field_add(Fc, field_mode(n, zero, alpha * (pair.tau * pair.tau), true), 1.0, -1.0);
  Gc = field_add(Gc, field_mode(n, zero, beta * (pair.eta_norm * pair.eta_norm), true), 1.0, 1.0);

  TorusField Fc0 = field_add(Fc, field_mode(n, zero, Fc.mean(), Fc.real_valued), 1.0, -1.0);
  TorusField Gc0 = field_add(Gc, field_mode(n, zero, Gc.mean(), Gc.real_valued), 1.0, -1.0);
  TorusField phic = field_add(L_eta(Fc0, pair), L_tau(Gc0, pair), 1.0, -1.0);
  SplitTorusResult stc = split_torus(Fc0, Gc0, phic, pair, opt.torus);
  out.H.comp[2 * n] = stc.P;
  out.any_fallback = out.any_fallback || stc.used_fallback;
  out.worst_ratio = std::max({out.worst_ratio, stc.ratio_f, stc.ratio_g});

  std::array<HeisField, 2> d1H = d1_apply(out.H, pair);
  out.F_res = hf_add(F, d1H[0], 1.0, -1.0);
  out.G_res = hf_add(G, d1H[1], 1.0, -1.0);
  return out;
}

}  // namespace heiskam
