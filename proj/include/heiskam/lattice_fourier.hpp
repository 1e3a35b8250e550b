#pragma once

// Trigonometric polynomials on the torus T^{2n}, stored as sparse coefficient
// lists over the character lattice Z^{2n}. A function
//
//   f(x) = sum_m f_m exp(2 pi i m.x),   m in Z^{2n}, |m|_inf <= cutoff,
//
// carries the Sobolev norms ||f||_s^2 = sum_m (1 + 4 pi^2 m.m)^s |f_m|^2.
// Translations x -> x + kappa act diagonally by exp(2 pi i m.kappa), and the
// difference operator f(x + kappa) - f(x) by exp(2 pi i m.kappa) - 1; those
// diagonal actions are what everything downstream is built from.
//
// Coefficients are kept in lexicographic index order at all times, so
// iteration order, serialization, and every derived artifact are
// deterministic.

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <optional>
#include <vector>

#include <fftw3.h>

#include "heiskam/common.hpp"

namespace heiskam {

inline constexpr int kMaxAxes = 8;  // supports n <= 4
using MIdx = std::array<int16_t, kMaxAxes>;

inline MIdx midx_zero() { return MIdx{0, 0, 0, 0, 0, 0, 0, 0}; }

inline MIdx midx_neg(const MIdx& m) {
  MIdx r = midx_zero();
  for (int a = 0; a < kMaxAxes; ++a) r[a] = static_cast<int16_t>(-m[a]);
  return r;
}

inline double midx_dot(const MIdx& m) {
  double s = 0.0;
  for (int a = 0; a < kMaxAxes; ++a) s += double(m[a]) * double(m[a]);
  return s;
}

inline int midx_linf(const MIdx& m) {
  int v = 0;
  for (int a = 0; a < kMaxAxes; ++a) v = std::max(v, std::abs(int(m[a])));
  return v;
}

struct TorusField {
  struct Entry {
    MIdx m;
    cplx c;
  };

  int n = 2;                 // half dimension; the torus has 2n axes
  int cutoff = 0;            // |m|_inf bound on stored support
  bool real_valued = false;  // asserts f_{-m} = conj(f_m)
  std::vector<Entry> entries;  // sorted lexicographically by m, unique

  int axes() const { return 2 * n; }

  // Sorts, merges duplicate indices, drops exact zeros, updates cutoff. For
  // real_valued fields also projects onto the conjugate-symmetric subspace:
  // products accumulate the +m and -m bins in different orders, and without
  // the projection that rounding drift compounds across long composition
  // chains until the symmetry invariant fails.
  void normalize() {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.m < b.m; });
    std::vector<Entry> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
      if (!out.empty() && out.back().m == e.m) {
        out.back().c += e.c;
      } else {
        out.push_back(e);
      }
    }
    entries = std::move(out);
    if (real_valued) symmetrize_sorted();
    std::erase_if(entries, [](const Entry& e) { return e.c == cplx(0.0, 0.0); });
    int supp = 0;
    for (const auto& e : entries) supp = std::max(supp, midx_linf(e.m));
    cutoff = std::max(cutoff, supp);
  }

  const cplx* find(const MIdx& m) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), m,
                               [](const Entry& e, const MIdx& k) { return e.m < k; });
    if (it != entries.end() && it->m == m) return &it->c;
    return nullptr;
  }

  cplx mean() const {
    const cplx* c = find(midx_zero());
    return c ? *c : cplx(0.0, 0.0);
  }

  double max_abs() const {
    double v = 0.0;
    for (const auto& e : entries) v = std::max(v, std::abs(e.c));
    return v;
  }

  int support_linf() const {
    int v = 0;
    for (const auto& e : entries) v = std::max(v, midx_linf(e.m));
    return v;
  }

  // Largest conjugate-symmetry defect relative to the largest coefficient.
  double symmetry_defect() const {
    double mx = max_abs();
    if (mx == 0.0) return 0.0;
    double worst = 0.0;
    for (const auto& e : entries) {
      const cplx* p = find(midx_neg(e.m));
      cplx partner = p ? *p : cplx(0.0, 0.0);
      worst = std::max(worst, std::abs(e.c - std::conj(partner)));
    }
    return worst / mx;
  }

  void validate() const {
    require(n >= 1 && 2 * n <= kMaxAxes, "torus dimension out of range");
    for (const auto& e : entries)
      for (int a = 2 * n; a < kMaxAxes; ++a)
        require(e.m[a] == 0, "entry uses an axis beyond 2n");
    require(support_linf() <= cutoff, "support exceeds declared cutoff");
    if (real_valued)
      require(symmetry_defect() <= 1e-14, "real_valued field breaks conjugate symmetry");
  }

  // Drops entries below rel_tol of the peak coefficient. Conjugate pairs are
  // kept or dropped together so pruning never strands half a pair.
  void prune(double rel_tol) {
    double bar = rel_tol * max_abs();
    std::vector<Entry> kept;
    kept.reserve(entries.size());
    for (const auto& e : entries) {
      double v = std::abs(e.c);
      if (real_valued && v <= bar) {
        if (const cplx* p = find(midx_neg(e.m))) v = std::max(v, std::abs(*p));
      }
      if (v > bar) kept.push_back(e);
    }
    entries = std::move(kept);
  }

 private:
  // Averages each conjugate pair in place; entries must be sorted by m.
  // Orphaned modes are halved and mirrored so the result is exactly the
  // orthogonal projection onto the conjugate-symmetric subspace.
  void symmetrize_sorted() {
    std::vector<Entry> mirrors;
    for (auto& e : entries) {
      MIdx neg = midx_neg(e.m);
      if (e.m == neg) {
        e.c = cplx(e.c.real(), 0.0);
        continue;
      }
      auto it = std::lower_bound(entries.begin(), entries.end(), neg,
                                 [](const Entry& a, const MIdx& k) { return a.m < k; });
      bool partner = it != entries.end() && it->m == neg;
      if (neg < e.m) {
        if (partner) continue;  // the pair was averaged from its smaller index
        e.c *= 0.5;
        mirrors.push_back({neg, std::conj(e.c)});
      } else if (partner) {
        cplx avg = 0.5 * (e.c + std::conj(it->c));
        e.c = avg;
        it->c = std::conj(avg);
      } else {
        e.c *= 0.5;
        mirrors.push_back({neg, std::conj(e.c)});
      }
    }
    if (!mirrors.empty()) {
      entries.insert(entries.end(), mirrors.begin(), mirrors.end());
      std::sort(entries.begin(), entries.end(),
                [](const Entry& a, const Entry& b) { return a.m < b.m; });
    }
  }
};

inline TorusField field_zero(int n, bool real_valued = true) {
  TorusField f;
  f.n = n;
  f.real_valued = real_valued;
  return f;
}

// Single character exp(2 pi i m.x) scaled by c. Claim real_valued only for
// self-conjugate data (in practice the m = 0 constant with real c).
inline TorusField field_mode(int n, const MIdx& m, cplx c, bool real_valued = false) {
  TorusField f;
  f.n = n;
  f.real_valued = real_valued;
  f.entries.push_back({m, c});
  f.normalize();
  return f;
}

inline TorusField field_add(const TorusField& a, const TorusField& b, cplx wa = 1.0, cplx wb = 1.0) {
  require(a.n == b.n, "field_add: mixed torus dimensions");
  TorusField r;
  r.n = a.n;
  r.real_valued = a.real_valued && b.real_valued && wa.imag() == 0.0 && wb.imag() == 0.0;
  r.entries.reserve(a.entries.size() + b.entries.size());
  std::size_t i = 0, j = 0;
  while (i < a.entries.size() || j < b.entries.size()) {
    if (j >= b.entries.size() || (i < a.entries.size() && a.entries[i].m < b.entries[j].m)) {
      r.entries.push_back({a.entries[i].m, wa * a.entries[i].c});
      ++i;
    } else if (i >= a.entries.size() || b.entries[j].m < a.entries[i].m) {
      r.entries.push_back({b.entries[j].m, wb * b.entries[j].c});
      ++j;
    } else {
      r.entries.push_back({a.entries[i].m, wa * a.entries[i].c + wb * b.entries[j].c});
      ++i;
      ++j;
    }
  }
  std::erase_if(r.entries, [](const TorusField::Entry& e) { return e.c == cplx(0.0, 0.0); });
  r.cutoff = std::max(a.cutoff, b.cutoff);
  return r;
}

inline TorusField field_scale(const TorusField& a, cplx w) {
  TorusField r = a;
  if (w.imag() != 0.0) r.real_valued = false;
  for (auto& e : r.entries) e.c *= w;
  return r;
}

inline double sobolev_weight(const MIdx& m, double s) {
  double base = 1.0 + 4.0 * kPi * kPi * midx_dot(m);
  return s == 0.0 ? 1.0 : std::pow(base, s);
}

inline double sobolev_norm(const TorusField& f, double s) {
  double acc = 0.0;
  for (const auto& e : f.entries) acc += sobolev_weight(e.m, s) * std::norm(e.c);
  return std::sqrt(acc);
}

// f(x) -> f(x + kappa): multiplies f_m by exp(2 pi i m.kappa).
inline TorusField apply_translation_multiplier(const TorusField& f, const std::vector<double>& kappa) {
  require(static_cast<int>(kappa.size()) == f.axes(), "translation vector has wrong dimension");
  TorusField r = f;
  for (auto& e : r.entries) {
    double phase = 0.0;
    for (int a = 0; a < f.axes(); ++a) phase += double(e.m[a]) * kappa[a];
    e.c *= std::polar(1.0, kTwoPi * phase);
  }
  return r;
}

// f(x) -> f(x + kappa) - f(x): multiplies f_m by exp(2 pi i m.kappa) - 1.
// The mean must vanish; a constant cannot lie in the range of a difference.
inline TorusField coboundary_multiplier(const TorusField& f, const std::vector<double>& kappa,
                                        double mean_tol = 1e-12) {
  double scale = std::max(f.max_abs(), 1e-300);
  if (std::abs(f.mean()) > mean_tol * scale)
    throw NonZeroMean("coboundary_multiplier input has mean " + fmt17(std::abs(f.mean())));
  require(static_cast<int>(kappa.size()) == f.axes(), "translation vector has wrong dimension");
  TorusField r = f;
  for (auto& e : r.entries) {
    double phase = 0.0;
    for (int a = 0; a < f.axes(); ++a) phase += double(e.m[a]) * kappa[a];
    e.c *= std::polar(1.0, kTwoPi * phase) - 1.0;
  }
  std::erase_if(r.entries, [](const TorusField::Entry& e) { return e.c == cplx(0.0, 0.0); });
  return r;
}

// Frequency cutoff with a smooth shoulder: pass below t/2, block above t,
// raised cosine in between. Acting on coefficients it commutes with every
// diagonal operator here, and it never touches m = 0, so averages survive.
struct SmoothingProfile {
  double t = 8.0;

  double weight(double r) const {
    require(t > 0.0, "smoothing scale must be positive");
    if (r <= 0.5 * t) return 1.0;
    if (r >= t) return 0.0;
    return 0.5 * (1.0 + std::cos(kPi * (2.0 * r / t - 1.0)));
  }
};

inline TorusField smoothing_apply(const TorusField& f, const SmoothingProfile& profile) {
  TorusField r = f;
  for (auto& e : r.entries) {
    if (e.m == midx_zero()) continue;  // pin the average
    e.c *= profile.weight(std::sqrt(midx_dot(e.m)));
  }
  std::erase_if(r.entries, [](const TorusField::Entry& e) { return e.c == cplx(0.0, 0.0); });
  return r;
}

inline cplx evaluate(const TorusField& f, const std::vector<double>& x) {
  require(static_cast<int>(x.size()) == f.axes(), "evaluation point has wrong dimension");
  cplx acc = 0.0;
  for (const auto& e : f.entries) {
    double phase = 0.0;
    for (int a = 0; a < f.axes(); ++a) phase += double(e.m[a]) * x[a];
    acc += e.c * std::polar(1.0, kTwoPi * phase);
  }
  return acc;
}

inline std::vector<cplx> evaluate(const TorusField& f, const std::vector<std::vector<double>>& pts) {
  std::vector<cplx> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = evaluate(f, pts[i]);
  return out;
}

// ---- dense grid transforms (FFTW) ----------------------------------------
// Planning in FFTW is not thread safe; executions of distinct plans are.

inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

// In-place c2c transform over a uniform rank-d grid, sign = FFTW_FORWARD for
// exp(-2 pi i .) kernels.
inline void fft_inplace(std::vector<cplx>& data, const std::vector<int>& dims, int sign) {
  std::size_t total = 1;
  for (int d : dims) total *= static_cast<std::size_t>(d);
  require(total == data.size(), "fft buffer does not match grid dims");
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(),
                         reinterpret_cast<fftw_complex*>(data.data()),
                         reinterpret_cast<fftw_complex*>(data.data()), sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
}

// Samples on the uniform grid x_j = j/G (row major, axis 0 slowest) of a
// coefficient list, using a zero-padded inverse DFT. G must exceed 2*cutoff
// for the placement to be collision free.
inline std::vector<cplx> grid_samples(const TorusField& f, int G) {
  int d = f.axes();
  require(G >= 2 * f.support_linf() + 1, "grid too thin for the field's support");
  std::vector<int> dims(d, G);
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(G);
  std::vector<cplx> buf(total, cplx(0.0, 0.0));
  for (const auto& e : f.entries) {
    std::size_t idx = 0;
    for (int a = 0; a < d; ++a) {
      int bin = ((int(e.m[a]) % G) + G) % G;
      idx = idx * static_cast<std::size_t>(G) + static_cast<std::size_t>(bin);
    }
    buf[idx] += e.c;
  }
  fft_inplace(buf, dims, FFTW_BACKWARD);
  return buf;
}

struct FitResult {
  TorusField field;
  bool alias_risk = false;  // grid met the identifiability bound with no margin
};

// Least-squares-exact DFT fit of samples on the uniform grid x_j = j/G to the
// coefficient box |m|_inf <= N. Identifiability needs G >= 2N+1; the regular
// choice is G = 2N+2, anything thinner than that is flagged.
inline FitResult fit_from_samples(const std::vector<cplx>& samples, int n, int G, int N,
                                  bool real_valued = false) {
  int d = 2 * n;
  if (G < 2 * N + 1)
    throw BadInput("fit_from_samples: grid " + std::to_string(G) + " per axis cannot resolve cutoff " +
                   std::to_string(N));
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(G);
  require(total == samples.size(), "fit_from_samples: sample count does not match grid");

  std::vector<cplx> buf = samples;
  std::vector<int> dims(d, G);
  fft_inplace(buf, dims, FFTW_FORWARD);
  double inv = 1.0 / static_cast<double>(total);

  FitResult out;
  out.alias_risk = (G < 2 * N + 2);
  out.field.n = n;
  out.field.cutoff = N;
  out.field.real_valued = real_valued;

  MIdx m = midx_zero();
  std::function<void(int)> rec = [&](int axis) {
    if (axis == d) {
      std::size_t idx = 0;
      for (int a = 0; a < d; ++a) {
        int bin = ((int(m[a]) % G) + G) % G;
        idx = idx * static_cast<std::size_t>(G) + static_cast<std::size_t>(bin);
      }
      cplx c = buf[idx] * inv;
      if (c != cplx(0.0, 0.0)) out.field.entries.push_back({m, c});
      return;
    }
    for (int v = -N; v <= N; ++v) {
      m[axis] = static_cast<int16_t>(v);
      rec(axis + 1);
    }
    m[axis] = 0;
  };
  rec(0);
  out.field.normalize();
  if (real_valued) {
    // symmetrize roundoff, then check
    TorusField sym = out.field;
    for (auto& e : sym.entries) {
      const cplx* p = out.field.find(midx_neg(e.m));
      cplx partner = p ? *p : cplx(0.0, 0.0);
      e.c = 0.5 * (e.c + std::conj(partner));
    }
    double defect = out.field.symmetry_defect();
    require(defect <= 1e-10, "fit_from_samples: real_valued requested but samples are not real-symmetric");
    out.field = std::move(sym);
    out.field.real_valued = true;
  }
  out.field.validate();
  return out;
}

// Mean-free real-valued field with independent Gaussian coefficients on one
// half of the coefficient box and mirrored conjugates on the other. The draw
// order is the lexicographic walk, so a fixed seed gives a fixed field.
inline TorusField random_field(DetRng& rng, int n, int cutoff, double amplitude) {
  TorusField f = field_zero(n, true);
  f.cutoff = cutoff;
  int d = 2 * n;
  MIdx m = midx_zero();
  std::function<void(int)> rec = [&](int axis) {
    if (axis == d) {
      MIdx neg = midx_neg(m);
      if (!(neg < m)) return;  // visit each conjugate pair once, skip m = 0
      cplx c = amplitude * rng.gaussian_cplx();
      f.entries.push_back({m, c});
      f.entries.push_back({neg, std::conj(c)});
      return;
    }
    for (int v = -cutoff; v <= cutoff; ++v) {
      m[axis] = static_cast<int16_t>(v);
      rec(axis + 1);
    }
    m[axis] = 0;
  };
  rec(0);
  f.normalize();
  return f;
}

// Pointwise product fg as a coefficient convolution. Dense via FFT when both
// factors are fat, direct convolution when either is thin.
inline TorusField field_product(const TorusField& a, const TorusField& b) {
  require(a.n == b.n, "field_product: mixed torus dimensions");
  int d = a.axes();
  int Nr = a.support_linf() + b.support_linf();
  TorusField r;
  r.n = a.n;
  r.cutoff = Nr;
  r.real_valued = a.real_valued && b.real_valued;
  if (a.entries.empty() || b.entries.empty()) return r;

  double direct_cost = double(a.entries.size()) * double(b.entries.size());
  std::size_t G = static_cast<std::size_t>(2 * Nr + 2);
  double fft_cost = 3.0 * std::pow(double(G), d) * std::log2(double(G) * d + 2.0);
  if (direct_cost <= fft_cost) {
    r.entries.reserve(a.entries.size() * b.entries.size());
    for (const auto& ea : a.entries)
      for (const auto& eb : b.entries) {
        MIdx m = midx_zero();
        for (int ax = 0; ax < d; ++ax) m[ax] = static_cast<int16_t>(ea.m[ax] + eb.m[ax]);
        r.entries.push_back({m, ea.c * eb.c});
      }
    r.normalize();
    return r;
  }

  int Gi = 2 * Nr + 2;
  std::vector<cplx> sa = grid_samples(a, Gi);
  std::vector<cplx> sb = grid_samples(b, Gi);
  for (std::size_t i = 0; i < sa.size(); ++i) sa[i] *= sb[i];
  FitResult fit = fit_from_samples(sa, a.n, Gi, Nr, a.real_valued && b.real_valued);
  r = std::move(fit.field);
  r.prune(1e-300);
  return r;
}

}  // namespace heiskam
