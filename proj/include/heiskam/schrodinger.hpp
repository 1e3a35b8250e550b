#pragma once

// The irreducible picture on L^2(R^n): X_j acts as -d/dy_j, L_j as i y_j,
// Z as -i (unit central parameter). After rotating coordinates by A in SO(n)
// with first row tau_vec/|tau_vec|, the two translations act as
//
//   (L_tau f)(z) = f(z - (tau, 0, ...)) - f(z),
//   (L_eta f)(z) = (exp(i nu2 z_2) - 1) f(z),
//
// so the first is an honest shift in z_1 and the second a multiplier in z_2.
// The obstruction functionals are one-dimensional restrictions:
//
//   pi_{m,tau} f = (F_1 f)(m/tau, z_2..),      (partial Fourier transform)
//   pi_{m,eta} f = f(z_1, 2 pi m/nu2, z_3..),  (hyperplane restriction)
//
// and the shift equation L_tau P = f is solvable exactly on the joint kernel
// of the pi_{m,tau} by the one-sided series P(z) = sum_{m>=1} f(z + m tau e_1),
// which Poisson summation turns into -sum_{m>=0} f(z - m tau e_1).
//
// Everything here is n = 2 on a uniform box [-L, L)^2 with P samples per
// axis; fields must decay below 1e-10 of their peak before they reach the
// boundary shell for the periodic transforms to be trusted.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "heiskam/diophantine.hpp"
#include "heiskam/lattice_fourier.hpp"

namespace heiskam {

// ---- grid container --------------------------------------------------------

struct GridField {
  int n = 2;       // ambient dimension of the representation space
  double L = 20.0; // half box
  int P = 512;     // samples per axis, power of two
  std::vector<cplx> samples;  // row major, axis 0 (z_1) slowest

  double h() const { return 2.0 * L / P; }
  double coord(int i) const { return -L + 2.0 * L * i / P; }
  cplx& at(int i1, int i2) { return samples[static_cast<std::size_t>(i1) * P + i2]; }
  const cplx& at(int i1, int i2) const { return samples[static_cast<std::size_t>(i1) * P + i2]; }

  double max_abs() const {
    double v = 0.0;
    for (const cplx& c : samples) v = std::max(v, std::abs(c));
    return v;
  }

  double l2() const {
    double s = 0.0;
    for (const cplx& c : samples) s += std::norm(c);
    return std::sqrt(s * h() * h());
  }

  // peak over the outermost cell layer on every axis
  double boundary_max() const {
    double v = 0.0;
    for (int i1 = 0; i1 < P; ++i1)
      for (int i2 = 0; i2 < P; ++i2)
        if (i1 == 0 || i1 == P - 1 || i2 == 0 || i2 == P - 1)
          v = std::max(v, std::abs(at(i1, i2)));
    return v;
  }

  // peak over |z_1| <= half_width (all z_2); the region where one-sided
  // series solutions are trustworthy
  double inner_max(double half_width) const {
    double v = 0.0;
    for (int i1 = 0; i1 < P; ++i1) {
      if (std::abs(coord(i1)) > half_width) continue;
      for (int i2 = 0; i2 < P; ++i2) v = std::max(v, std::abs(at(i1, i2)));
    }
    return v;
  }

  // smallest S with |f| below rel_tol * peak outside |z_1| <= S
  double support_radius_z1(double rel_tol = 1e-12) const {
    double bar = rel_tol * max_abs();
    double S = 0.0;
    for (int i1 = 0; i1 < P; ++i1) {
      double row = 0.0;
      for (int i2 = 0; i2 < P; ++i2) row = std::max(row, std::abs(at(i1, i2)));
      if (row > bar) S = std::max(S, std::abs(coord(i1)));
    }
    return S;
  }

  void validate() const {
    require(n == 2, "grid fields are implemented for n = 2");
    require(P >= 4 && (P & (P - 1)) == 0, "P must be a power of two");
    require(samples.size() == static_cast<std::size_t>(P) * P, "sample buffer size mismatch");
    double mx = max_abs();
    if (mx > 0.0)
      require(boundary_max() <= 1e-10 * mx,
              "field does not decay at the box boundary (ratio " +
                  fmt17(boundary_max() / mx) + ")");
  }
};

inline GridField grid_zero(double L = 20.0, int P = 512) {
  GridField f;
  f.L = L;
  f.P = P;
  f.samples.assign(static_cast<std::size_t>(P) * P, cplx(0.0, 0.0));
  return f;
}

template <typename Fn>
GridField grid_from_function(Fn&& fn, double L = 20.0, int P = 512) {
  GridField f = grid_zero(L, P);
  for (int i1 = 0; i1 < P; ++i1)
    for (int i2 = 0; i2 < P; ++i2) f.at(i1, i2) = fn(f.coord(i1), f.coord(i2));
  return f;
}

inline GridField grid_add(const GridField& a, const GridField& b, cplx wa = 1.0, cplx wb = 1.0) {
  require(a.P == b.P && a.L == b.L, "grid mismatch");
  GridField r = a;
  for (std::size_t i = 0; i < r.samples.size(); ++i) r.samples[i] = wa * a.samples[i] + wb * b.samples[i];
  return r;
}

// signed DFT bin -> continuous frequency j/(2L)
inline double grid_freq(int j, int P, double L) {
  int s = j < P / 2 ? j : j - P;
  return s / (2.0 * L);
}

// FFT along one axis of the 2-d grid (sign = FFTW_FORWARD gives the
// exp(-2 pi i .) kernel)
inline void grid_fft_axis(GridField& f, int axis, int sign) {
  int P = f.P;
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_iodim dims, loops;
    if (axis == 0) {
      dims = {P, P, P};   // transform stride P, P repeats of stride 1
      loops = {P, 1, 1};
    } else {
      dims = {P, 1, 1};
      loops = {P, P, P};
    }
    plan = fftw_plan_guru_dft(1, &dims, 1, &loops,
                              reinterpret_cast<fftw_complex*>(f.samples.data()),
                              reinterpret_cast<fftw_complex*>(f.samples.data()), sign,
                              FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
}

// f(z + a e_axis) via the band-limited phase shift (periodic in the box)
inline GridField grid_translate(const GridField& f, int axis, double a) {
  GridField r = f;
  grid_fft_axis(r, axis, FFTW_FORWARD);
  int P = r.P;
  for (int j = 0; j < P; ++j) {
    cplx phase = std::polar(1.0 / P, kTwoPi * grid_freq(j, P, r.L) * a);
    for (int k = 0; k < P; ++k) {
      if (axis == 0)
        r.at(j, k) *= phase;
      else
        r.at(k, j) *= phase;
    }
  }
  grid_fft_axis(r, axis, FFTW_BACKWARD);
  return r;
}

// ---- rotated frame ----------------------------------------------------------

struct RotatedFrame {
  FrequencyPair pair;
  Eigen::MatrixXd A;  // SO(n), first row tau_vec/tau
  double tau = 0.0;   // |tau_vec|
  double nu2 = 0.0;   // second coordinate of A eta_vec (sign set by det = +1)
};

inline RotatedFrame build_frame(const FrequencyPair& pair) {
  int n = pair.n;
  Eigen::VectorXd tv(n), ev(n);
  for (int i = 0; i < n; ++i) tv[i] = pair.tau_vec[i];
  for (int i = 0; i < n; ++i) ev[i] = pair.eta_vec[i];
  if (tv.norm() < 1e-14 || ev.norm() < 1e-14) throw DegeneratePair("zero direction vector");

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  A.row(0) = tv.normalized();
  A.row(1) = ev.normalized();  // orthogonal to row 0 by the pair invariant
  int have = 2;
  for (int k = 0; k < n && have < n; ++k) {
    Eigen::VectorXd cand = Eigen::VectorXd::Unit(n, k);
    for (int r = 0; r < have; ++r) cand -= A.row(r).dot(cand) * A.row(r).transpose();
    if (cand.norm() > 1e-8) A.row(have++) = cand.normalized();
  }
  if (have < n) throw DegeneratePair("could not complete an orthonormal frame");
  if (A.determinant() < 0.0) A.row(n - 1) *= -1.0;

  RotatedFrame frame;
  frame.pair = pair;
  frame.A = A;
  frame.tau = tv.norm();
  Eigen::VectorXd eta_rot = A * ev;
  frame.nu2 = eta_rot[1];

  require((A * A.transpose() - Eigen::MatrixXd::Identity(n, n)).norm() < 1e-12, "frame not orthogonal");
  require(std::abs(A.determinant() - 1.0) < 1e-12, "frame not special orthogonal");
  Eigen::VectorXd tau_rot = A * tv;
  require(std::abs(tau_rot[0] - frame.tau) < 1e-12 * frame.tau, "tau image misaligned");
  for (int i = 1; i < n; ++i)
    require(std::abs(tau_rot[i]) < 1e-12 * frame.tau, "tau image misaligned");
  require(std::abs(eta_rot[0]) < 1e-12 * ev.norm(), "eta image has a first component");
  for (int i = 2; i < n; ++i)
    require(std::abs(eta_rot[i]) < 1e-12 * ev.norm(), "eta image leaves the 2-plane");
  require(std::abs(std::abs(frame.nu2) - ev.norm()) < 1e-12 * ev.norm(), "eta image changed length");
  return frame;
}

// ---- difference / multiplier operators --------------------------------------

inline GridField L_tau_apply(const GridField& f, const RotatedFrame& frame) {
  GridField shifted = grid_translate(f, 0, -frame.tau);
  return grid_add(shifted, f, 1.0, -1.0);
}

inline GridField L_eta_apply(const GridField& f, const RotatedFrame& frame) {
  GridField r = f;
  for (int i2 = 0; i2 < f.P; ++i2) {
    cplx mult = std::polar(1.0, frame.nu2 * f.coord(i2)) - 1.0;
    for (int i1 = 0; i1 < f.P; ++i1) r.at(i1, i2) *= mult;
  }
  return r;
}

// partial Fourier transform along z_1 at frequency m/tau; returns the z_2 profile
inline std::vector<cplx> pi_m_tau(const GridField& f, const RotatedFrame& frame, int m) {
  int P = f.P;
  double omega = m / frame.tau;
  std::vector<cplx> out(P, cplx(0.0, 0.0));
  std::vector<cplx> kernel(P);
  for (int i1 = 0; i1 < P; ++i1) kernel[i1] = std::polar(f.h(), -kTwoPi * omega * f.coord(i1));
  for (int i1 = 0; i1 < P; ++i1) {
    cplx k = kernel[i1];
    const cplx* row = f.samples.data() + static_cast<std::size_t>(i1) * P;
    for (int i2 = 0; i2 < P; ++i2) out[i2] += k * row[i2];
  }
  return out;
}

// restriction to the hyperplane z_2 = 2 pi m / nu2, by Fourier interpolation
inline std::vector<cplx> pi_m_eta(const GridField& f, const RotatedFrame& frame, int m) {
  int P = f.P;
  double z2 = kTwoPi * m / frame.nu2;
  GridField hat = f;
  grid_fft_axis(hat, 1, FFTW_FORWARD);
  // samples sit at z = -L + 2L j/P; the DFT phases count from index 0, so the
  // interpolation phase is exp(2 pi i w (z + L))
  std::vector<cplx> phases(P);
  for (int j = 0; j < P; ++j)
    phases[j] = std::polar(1.0 / P, kTwoPi * grid_freq(j, P, f.L) * (z2 + f.L));
  std::vector<cplx> out(P, cplx(0.0, 0.0));
  for (int i1 = 0; i1 < P; ++i1)
    for (int j = 0; j < P; ++j) out[i1] += hat.at(i1, j) * phases[j];
  return out;
}

inline double profile_l2(const std::vector<cplx>& v, double h) {
  double s = 0.0;
  for (const cplx& c : v) s += std::norm(c);
  return std::sqrt(s * h);
}

// ---- bump window -------------------------------------------------------------

// Compactly supported transform-side profile, value 1 at 0. variant 0 is the
// standard bump, variant 1 a flatter one used when a projection degenerates.
struct BumpProfile {
  double half_width = 0.0;
  int variant = 0;

  double hat(double omega) const {
    double u = omega / half_width;
    double u2 = u * u;
    if (variant == 1) u2 = u2 * u2;
    if (u2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - u2));
  }
};

// The window as actually used on a grid: samples of the inverse transform of
// the profile, gently tapered to zero at the box edge, then discretely
// orthonormalized so that the box quadrature satisfies
//   h sum_i psi(z_i) exp(-2 pi i (j/tau) z_i) = delta_{j0},  |j| <= 2 m_cap,
// which is what makes pi_{k,tau} Pi_{m,tau} = delta_{km} hold to machine
// precision on the lattice the projections actually use.
struct BumpWindow {
  BumpProfile profile;
  double L = 20.0;
  int P = 512;
  int m_cap = 10;
  double tau = 0.0;
  std::vector<double> samples;   // corrected window on the z grid
  double raw_defect = 0.0;       // worst lattice defect before correction
  double correction_size = 0.0;  // sup |correction| / sup |psi|
};

inline double edge_taper(double z, double L) {
  double a = std::abs(z);
  if (a <= 0.80 * L) return 1.0;
  if (a >= 0.95 * L) return 0.0;
  return 0.5 * (1.0 + std::cos(kPi * (a - 0.80 * L) / (0.15 * L)));
}

inline BumpWindow build_bump(const RotatedFrame& frame, double L = 20.0, int P = 512,
                             int m_cap = 10, int variant = 0) {
  BumpWindow w;
  w.profile.half_width = 1.0 / (2.0 * frame.tau);
  w.profile.variant = variant;
  w.L = L;
  w.P = P;
  w.m_cap = m_cap;
  w.tau = frame.tau;

  // inverse transform of the profile by composite trapezoid over its support
  const int M = 8192;
  double wd = w.profile.half_width;
  double dw = 2.0 * wd / M;
  w.samples.assign(P, 0.0);
  for (int i = 0; i < P; ++i) {
    double z = -L + 2.0 * L * i / P;
    double acc = 0.0;
    for (int q = 0; q <= M; ++q) {
      double om = -wd + q * dw;
      double weight = (q == 0 || q == M) ? 0.5 : 1.0;
      acc += weight * w.profile.hat(om) * std::cos(kTwoPi * om * z);
    }
    w.samples[i] = acc * dw * edge_taper(z, L);
  }

  // discrete orthonormalization against the box quadrature
  int J = 2 * m_cap;
  double h = 2.0 * L / P;
  auto lattice_transform = [&](const std::vector<double>& s) {
    Eigen::VectorXcd q(2 * J + 1);
    for (int j = -J; j <= J; ++j) {
      cplx acc = 0.0;
      for (int i = 0; i < P; ++i) {
        double z = -L + 2.0 * L * i / P;
        acc += s[i] * std::polar(h, -kTwoPi * (j / frame.tau) * z);
      }
      q[j + J] = acc;
    }
    return q;
  };

  Eigen::VectorXcd q_raw = lattice_transform(w.samples);
  for (int j = -J; j <= J; ++j) {
    double target = (j == 0) ? 1.0 : 0.0;
    w.raw_defect = std::max(w.raw_defect, std::abs(q_raw[j + J] - cplx(target, 0.0)));
  }

  double sigma = L / 3.0;
  std::vector<std::vector<double>> env(2 * J + 1, std::vector<double>(P));
  Eigen::MatrixXcd M_sys(2 * J + 1, 2 * J + 1);
  std::vector<std::vector<cplx>> basis(2 * J + 1, std::vector<cplx>(P));
  for (int l = -J; l <= J; ++l) {
    for (int i = 0; i < P; ++i) {
      double z = -L + 2.0 * L * i / P;
      double g = std::exp(-(z / sigma) * (z / sigma)) * edge_taper(z, L);
      basis[l + J][i] = g * std::polar(1.0, kTwoPi * (l / frame.tau) * z);
    }
  }
  for (int j = -J; j <= J; ++j)
    for (int l = -J; l <= J; ++l) {
      cplx acc = 0.0;
      for (int i = 0; i < P; ++i) {
        double z = -L + 2.0 * L * i / P;
        acc += basis[l + J][i] * std::polar(h, -kTwoPi * (j / frame.tau) * z);
      }
      M_sys(j + J, l + J) = acc;
    }
  Eigen::VectorXcd rhs(2 * J + 1);
  for (int j = -J; j <= J; ++j) rhs[j + J] = cplx(j == 0 ? 1.0 : 0.0, 0.0) - q_raw[j + J];
  Eigen::VectorXcd alpha = M_sys.partialPivLu().solve(rhs);

  double peak = 0.0, corr_peak = 0.0;
  for (int i = 0; i < P; ++i) {
    cplx corr = 0.0;
    for (int l = -J; l <= J; ++l) corr += alpha[l + J] * basis[l + J][i];
    w.samples[i] += corr.real();
    corr_peak = std::max(corr_peak, std::abs(corr));
    peak = std::max(peak, std::abs(w.samples[i]));
  }
  w.correction_size = peak > 0.0 ? corr_peak / peak : 0.0;

  Eigen::VectorXcd q_post = lattice_transform(w.samples);
  for (int j = -J; j <= J; ++j) {
    double target = (j == 0) ? 1.0 : 0.0;
    require(std::abs(q_post[j + J] - cplx(target, 0.0)) < 1e-11,
            "window orthonormalization failed at offset " + std::to_string(j));
  }
  return w;
}

// rank-one extension e^{2 pi i z_1 m/tau} psi(z_1) profile(z_2)
inline GridField Pi_m_tau(const std::vector<cplx>& profile, const BumpWindow& window, int m) {
  int P = window.P;
  GridField r = grid_zero(window.L, P);
  for (int i1 = 0; i1 < P; ++i1) {
    cplx row = window.samples[i1] * std::polar(1.0, kTwoPi * (m / window.tau) * r.coord(i1));
    for (int i2 = 0; i2 < P; ++i2) r.at(i1, i2) = row * profile[i2];
  }
  return r;
}

struct RPsiReport {
  int terms_used = 0;     // largest |m| that contributed
  bool retried = false;   // window was rebuilt with the alternate profile
};

// R_psi f = f - sum_m Pi_m pi_m f. The sum truncates once the measured
// |pi_m f| falls below 1e-12 of |f| on both sides (the inverse-distance decay
// of smooth decaying fields makes that happen fast). If the result vanishes
// while f does not, the window is perturbed once and the operator reapplied.
inline GridField R_psi_apply(const GridField& f, const RotatedFrame& frame, BumpWindow& window,
                             RPsiReport* report = nullptr) {
  f.validate();
  double fn = f.l2();
  GridField r = f;
  int used = 0;
  for (int side = 0; side < 2; ++side) {
    int dir = side == 0 ? 1 : -1;
    int misses = 0;
    for (int k = (side == 0 ? 0 : 1); k <= window.m_cap; ++k) {
      int m = dir * k;
      std::vector<cplx> prof = pi_m_tau(f, frame, m);
      double pn = profile_l2(prof, f.h());
      if (pn <= 1e-12 * fn) {
        if (++misses >= 2) break;
        continue;
      }
      misses = 0;
      used = std::max(used, std::abs(m));
      GridField proj = Pi_m_tau(prof, window, m);
      r = grid_add(r, proj, 1.0, -1.0);
    }
  }
  if (report) report->terms_used = used;

  if (fn > 0.0 && r.l2() <= 1e-14 * fn) {
    if (window.profile.variant == 0) {
      window = build_bump(frame, window.L, window.P, window.m_cap, 1);
      if (report) report->retried = true;
      RPsiReport inner;
      GridField r2 = R_psi_apply(f, frame, window, &inner);
      if (report) report->terms_used = inner.terms_used;
      if (f.l2() > 0.0 && r2.l2() <= 1e-14 * fn)
        throw DegenerateProjection("projection annihilates the field for both windows");
      return r2;
    }
    throw DegenerateProjection("projection annihilates the field");
  }
  return r;
}

// ---- solvers -----------------------------------------------------------------

struct AnnihilatorCheck {
  double worst = 0.0;
  int worst_m = 0;
};

inline AnnihilatorCheck check_annihilator_tau(const GridField& f, const RotatedFrame& frame,
                                              int m_max = 16) {
  AnnihilatorCheck chk;
  double fn = std::max(f.l2(), 1e-300);
  // frequencies m/tau beyond ~3/4 of the grid Nyquist limit P/(4L) alias and
  // measure spectral tails of f instead of the intended functional
  int cap = static_cast<int>(std::floor(0.75 * frame.tau * f.P / (4.0 * f.L)));
  m_max = std::min(m_max, std::max(cap, 1));
  for (int m = -m_max; m <= m_max; ++m) {
    double pn = profile_l2(pi_m_tau(f, frame, m), f.h()) / fn;
    if (pn > chk.worst) {
      chk.worst = pn;
      chk.worst_m = m;
    }
  }
  return chk;
}

inline AnnihilatorCheck check_annihilator_eta(const GridField& f, const RotatedFrame& frame,
                                              int m_max = 16) {
  AnnihilatorCheck chk;
  double fn = std::max(f.l2(), 1e-300);
  double reach = frame.nu2 == 0.0 ? 0.0 : std::abs(kTwoPi / frame.nu2);
  int cap = reach == 0.0 ? 0 : std::min(m_max, static_cast<int>(std::floor(f.L / reach)));
  for (int m = -cap; m <= cap; ++m) {
    double pn = profile_l2(pi_m_eta(f, frame, m), f.h()) / fn;
    if (pn > chk.worst) {
      chk.worst = pn;
      chk.worst_m = m;
    }
  }
  return chk;
}

// Forward one-sided series P(z) = sum_{m>=1} f(z + m tau e_1), truncated at
// M = floor(2L/tau). The translates are computed on a zero-padded axis of
// length 4L so that wrapped copies stay out of the original box for every
// retained term (they enter only beyond shift 3L - S, while true terms die on
// the box once the shift passes L + S). On the padded grid the partial sum is
// a closed geometric factor per frequency bin. The backward variant is the
// Poisson-summation form P = -sum_{m>=0} f(z - m tau e_1), valid for the same
// reason the forward one is: on the annihilator both one-sided tails agree.
inline GridField solve_L_tau(const GridField& f, const RotatedFrame& frame,
                             double ann_tol = 1e-9, bool backward = false) {
  f.validate();
  AnnihilatorCheck chk = check_annihilator_tau(f, frame);
  if (chk.worst > ann_tol)
    throw NotInAnnihilator("pi_{" + std::to_string(chk.worst_m) + ",tau} f has relative size " +
                           fmt17(chk.worst));

  int P = f.P;
  int Q = 2 * P;
  double Lp = 2.0 * f.L;  // padded half box
  std::vector<cplx> buf(static_cast<std::size_t>(Q) * P, cplx(0.0, 0.0));
  for (int i1 = 0; i1 < P; ++i1)
    for (int i2 = 0; i2 < P; ++i2)
      buf[static_cast<std::size_t>(i1 + P / 2) * P + i2] = f.at(i1, i2);

  auto fft_axis0 = [&](int sign) {
    fftw_plan plan;
    {
      std::lock_guard<std::mutex> lock(fftw_plan_mutex());
      fftw_iodim dims = {Q, P, P};
      fftw_iodim loops = {P, 1, 1};
      plan = fftw_plan_guru_dft(1, &dims, 1, &loops,
                                reinterpret_cast<fftw_complex*>(buf.data()),
                                reinterpret_cast<fftw_complex*>(buf.data()), sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
      std::lock_guard<std::mutex> lock(fftw_plan_mutex());
      fftw_destroy_plan(plan);
    }
  };

  fft_axis0(FFTW_FORWARD);
  int M = static_cast<int>(std::floor(2.0 * f.L / frame.tau));
  for (int j = 0; j < Q; ++j) {
    double w = grid_freq(j, Q, Lp);
    cplx factor;
    if (!backward) {
      cplx r = std::polar(1.0, kTwoPi * w * frame.tau);
      if (std::abs(r - 1.0) < 1e-6) {
        factor = cplx(double(M), 0.0);
      } else {
        cplx rM = std::polar(1.0, kTwoPi * w * frame.tau * M);
        factor = r * (rM - 1.0) / (r - 1.0);
      }
    } else {
      cplx s = std::polar(1.0, -kTwoPi * w * frame.tau);
      if (std::abs(s - 1.0) < 1e-6) {
        factor = cplx(-double(M + 1), 0.0);
      } else {
        cplx sM = std::polar(1.0, -kTwoPi * w * frame.tau * (M + 1));
        factor = -(sM - 1.0) / (s - 1.0);
      }
    }
    factor /= double(Q);
    for (int i2 = 0; i2 < P; ++i2) buf[static_cast<std::size_t>(j) * P + i2] *= factor;
  }
  fft_axis0(FFTW_BACKWARD);

  GridField P_out = grid_zero(f.L, f.P);
  for (int i1 = 0; i1 < P; ++i1)
    for (int i2 = 0; i2 < P; ++i2)
      P_out.at(i1, i2) = buf[static_cast<std::size_t>(i1 + P / 2) * P + i2];
  return P_out;
}

struct LEtaOptions {
  double ann_tol = 1e-9;
  int series_terms = 8;      // shifted-transform terms in the guard band
  double guard_cells = 1.0;  // half width of the guard band, in grid cells
};

// Multiplier equation (exp(i nu2 z_2) - 1) P = f. Division away from the zero
// hyperplanes z_2 = 2 pi k/nu2; inside a guard band around each hyperplane the
// value comes from a transform-side shifted series with s = nu2/(2 pi),
//   forward    (F_2 P)(w) =  sum_{m>=1}  (F_2 f)(w + m s)
//   backward   (F_2 P)(w) = -sum_{m>=0}  (F_2 f)(w - m s),
// synthesized back at the guard points only. The truncated remainder of either
// sum sits at w -+ M s, so each bin takes the side that moves the remainder
// away from the center of the spectrum; one-sided summation would leave an
// O(1) remainder in the bins near +-M s and the synthesis would smear it into
// the guard columns close to the box edge.
inline GridField solve_L_eta(const GridField& f, const RotatedFrame& frame,
                             const LEtaOptions& opt = {}) {
  f.validate();
  require(frame.nu2 != 0.0, "frame has nu2 = 0");
  AnnihilatorCheck chk = check_annihilator_eta(f, frame);
  if (chk.worst > opt.ann_tol)
    throw NotInAnnihilator("pi_{" + std::to_string(chk.worst_m) + ",eta} f has relative size " +
                           fmt17(chk.worst));

  int P = f.P;
  double h = f.h();
  double spacing = std::abs(kTwoPi / frame.nu2);
  double guard = opt.guard_cells * h;

  GridField out = grid_zero(f.L, P);
  std::vector<bool> in_guard(P, false);
  for (int i2 = 0; i2 < P; ++i2) {
    double z2 = out.coord(i2);
    double k = std::nearbyint(z2 / spacing);
    in_guard[i2] = std::abs(z2 - k * spacing) <= guard;
    if (!in_guard[i2]) {
      cplx mult = std::polar(1.0, frame.nu2 * z2) - 1.0;
      for (int i1 = 0; i1 < P; ++i1) out.at(i1, i2) = f.at(i1, i2) / mult;
    }
  }

  std::vector<int> guard_idx;
  for (int i2 = 0; i2 < P; ++i2)
    if (in_guard[i2]) guard_idx.push_back(i2);
  if (!guard_idx.empty()) {
    // each shifted transform is the plain transform of the modulated field
    // f * exp(-+ i m nu2 z_2), so one FFT per term; the modulations stay well
    // inside the representable band for the term counts used here
    double s = frame.nu2 / kTwoPi;
    GridField fwd = grid_zero(f.L, P);
    GridField bwd = grid_zero(f.L, P);
    for (int m = 1; m <= opt.series_terms; ++m) {
      GridField mod = f;
      for (int i2 = 0; i2 < P; ++i2) {
        cplx ph = std::polar(1.0, -m * frame.nu2 * f.coord(i2));
        for (int i1 = 0; i1 < P; ++i1) mod.at(i1, i2) *= ph;
      }
      grid_fft_axis(mod, 1, FFTW_FORWARD);
      for (std::size_t i = 0; i < fwd.samples.size(); ++i) fwd.samples[i] += mod.samples[i];
    }
    for (int m = 0; m < opt.series_terms; ++m) {
      GridField mod = f;
      if (m > 0) {
        for (int i2 = 0; i2 < P; ++i2) {
          cplx ph = std::polar(1.0, m * frame.nu2 * f.coord(i2));
          for (int i1 = 0; i1 < P; ++i1) mod.at(i1, i2) *= ph;
        }
      }
      grid_fft_axis(mod, 1, FFTW_FORWARD);
      for (std::size_t i = 0; i < bwd.samples.size(); ++i) bwd.samples[i] -= mod.samples[i];
    }
    GridField Phat = grid_zero(f.L, P);
    for (int j = 0; j < P; ++j) {
      const GridField& side = grid_freq(j, P, f.L) * s >= 0.0 ? fwd : bwd;
      for (int i1 = 0; i1 < P; ++i1) Phat.at(i1, j) = side.at(i1, j);
    }
    // the DFT phases count from z_2 = -L; convert bin values to the trapezoid
    // transform and synthesize back at the guard points only
    for (int gi : guard_idx) {
      double z2 = out.coord(gi);
      std::vector<cplx> syn(P);
      for (int j = 0; j < P; ++j) {
        double w = grid_freq(j, P, f.L);
        // h e^{+2 pi i w L} turns the DFT bin into the trapezoid transform;
        // synthesis weight is e^{2 pi i w z2} / (2L)
        syn[j] = std::polar(h / (2.0 * f.L), kTwoPi * w * (z2 + f.L));
      }
      for (int i1 = 0; i1 < P; ++i1) {
        cplx acc = 0.0;
        const cplx* row = Phat.samples.data() + static_cast<std::size_t>(i1) * P;
        for (int j = 0; j < P; ++j) acc += row[j] * syn[j];
        out.at(i1, gi) = acc;
      }
    }
  }
  return out;
}

struct TransferResult {
  GridField P;
  double residual_tau = 0.0;  // |L_tau P - f| / |f|
  double residual_eta = 0.0;  // |L_eta P - g| / |g|
};

// Joint solve: f in the tau annihilator and g with L_tau g = L_eta f force a
// common primitive; P is produced from the shift equation and both residuals
// are measured.
inline TransferResult transfer_solve(const GridField& f, const GridField& g,
                                     const RotatedFrame& frame, double compat_tol = 1e-9) {
  f.validate();
  g.validate();
  GridField defect = grid_add(L_tau_apply(g, frame), L_eta_apply(f, frame), 1.0, -1.0);
  double scale = std::max({f.l2(), g.l2(), 1e-300});
  if (defect.l2() > compat_tol * scale)
    throw CompatibilityViolation("L_tau g != L_eta f, defect " + fmt17(defect.l2() / scale));

  TransferResult out;
  out.P = solve_L_tau(f, frame);
  GridField rt = grid_add(L_tau_apply(out.P, frame), f, 1.0, -1.0);
  GridField re = grid_add(L_eta_apply(out.P, frame), g, 1.0, -1.0);
  out.residual_tau = rt.l2() / std::max(f.l2(), 1e-300);
  out.residual_eta = re.l2() / std::max(g.l2(), 1e-300);
  return out;
}

struct SplitInfiniteResult {
  GridField P;
  GridField f_res;  // f - L_tau P
  GridField g_res;  // g - L_eta P
  bool mirrored = false;   // solved through the z_2-window path (f was zero)
  bool window_retried = false;
  double phi_l2 = 0.0;
  double ratio_f = 0.0;  // |f_res| / |phi|
  double ratio_g = 0.0;  // |g_res| / |phi|
};

// Splitting without a compatibility assumption. The defect phi = L_eta f -
// L_tau g controls both residues. The window projection R_psi pushes f into
// the tau annihilator; when f vanishes the roles swap and the projection acts
// through sharp z_2 windows around the multiplier zeros (exact algebra, no
// transform needed).
inline SplitInfiniteResult split_infinite(const GridField& f, const GridField& g,
                                          const RotatedFrame& frame, BumpWindow& window,
                                          const GridField* phi_supplied = nullptr,
                                          double compat_tol = 1e-9) {
  f.validate();
  g.validate();
  GridField phi = grid_add(L_eta_apply(f, frame), L_tau_apply(g, frame), 1.0, -1.0);
  if (phi_supplied) {
    GridField d = grid_add(phi, *phi_supplied, 1.0, -1.0);
    double scale = std::max({f.l2(), g.l2(), phi_supplied->l2(), 1e-300});
    if (d.l2() > compat_tol * scale)
      throw CompatibilityViolation("supplied phi does not match L_eta f - L_tau g");
  }

  SplitInfiniteResult out;
  out.phi_l2 = phi.l2();
  double scale = std::max({f.l2(), g.l2(), 1e-300});

  if (f.l2() > 1e-14 * scale) {
    RPsiReport rep;
    GridField rf = R_psi_apply(f, frame, window, &rep);
    out.window_retried = rep.retried;
    out.P = solve_L_tau(rf, frame);
  } else {
    // mirror: sharp windows in z_2 around the multiplier zeros
    out.mirrored = true;
    int P = f.P;
    double spacing = std::abs(kTwoPi / frame.nu2);
    GridField rg = g;
    int k_max = static_cast<int>(std::floor(f.L / spacing));
    for (int k = -k_max; k <= k_max; ++k) {
      double center = k * spacing * (frame.nu2 > 0 ? 1.0 : -1.0);
      std::vector<cplx> restriction = pi_m_eta(g, frame, k);
      for (int i2 = 0; i2 < P; ++i2) {
        double u = (rg.coord(i2) - center) / (0.5 * spacing);
        double u2 = u * u;
        if (u2 >= 1.0) continue;
        double win = std::exp(1.0 - 1.0 / (1.0 - u2));
        for (int i1 = 0; i1 < P; ++i1) rg.at(i1, i2) -= win * restriction[i1];
      }
    }
    out.P = solve_L_eta(rg, frame);
  }

  out.f_res = grid_add(f, L_tau_apply(out.P, frame), 1.0, -1.0);
  out.g_res = grid_add(g, L_eta_apply(out.P, frame), 1.0, -1.0);
  if (out.phi_l2 > 0.0) {
    out.ratio_f = out.f_res.l2() / out.phi_l2;
    out.ratio_g = out.g_res.l2() / out.phi_l2;
  }
  return out;
}

// ---- Hermite machinery (box norms, synthetic fields) --------------------------

// orthonormal Hermite functions h_0..h_K sampled on the axis grid
inline Eigen::MatrixXd hermite_matrix(int K, int P, double L) {
  Eigen::MatrixXd H(K + 1, P);
  for (int i = 0; i < P; ++i) {
    double z = -L + 2.0 * L * i / P;
    double h0 = std::pow(kPi, -0.25) * std::exp(-0.5 * z * z);
    H(0, i) = h0;
    if (K >= 1) H(1, i) = std::sqrt(2.0) * z * h0;
    for (int k = 2; k <= K; ++k)
      H(k, i) = std::sqrt(2.0 / k) * z * H(k - 1, i) - std::sqrt(double(k - 1) / k) * H(k - 2, i);
  }
  return H;
}

inline int resolvable_level(int P, double L) {
  double by_box = 0.85 * L;                   // classical turning point inside the box
  double by_grid = 0.5 * kPi * P / (2.0 * L); // half the Nyquist in rad/length
  double reach = std::min(by_box, by_grid);
  return std::max(1, static_cast<int>(std::floor(0.5 * (reach * reach - 1.0))));
}

// <f, (1 + sum z_i^2 - d^2/dz_i^2)^s f>^{1/2} through the oscillator
// eigenexpansion: the operator is diagonal on Hermite products with
// eigenvalue 1 + n + 2(k_1 + k_2).
inline double box_norm(const GridField& f, double s, double tail_tol = 1e-9) {
  f.validate();
  int K = resolvable_level(f.P, f.L);
  Eigen::MatrixXd H = hermite_matrix(K, f.P, f.L);
  Eigen::MatrixXcd F(f.P, f.P);
  for (int i1 = 0; i1 < f.P; ++i1)
    for (int i2 = 0; i2 < f.P; ++i2) F(i1, i2) = f.at(i1, i2);
  double h2 = f.h() * f.h();
  Eigen::MatrixXcd C = h2 * (H * F * H.transpose());  // (K+1) x (K+1) coefficients

  // Coefficients at the quadrature roundoff floor carry no information but
  // the weights lam^s would amplify them into the norm; drop them.
  double cmax = 0.0;
  for (int k1 = 0; k1 <= K; ++k1)
    for (int k2 = 0; k2 <= K - k1; ++k2) cmax = std::max(cmax, std::abs(C(k1, k2)));
  double floor_bar = 3e-15 * cmax;

  double total = 0.0, top = 0.0;
  for (int k1 = 0; k1 <= K; ++k1)
    for (int k2 = 0; k2 <= K - k1; ++k2) {  // triangular truncation
      if (std::abs(C(k1, k2)) <= floor_bar) continue;
      double lam = 1.0 + f.n + 2.0 * (k1 + k2);
      double w = std::pow(lam, s) * std::norm(C(k1, k2));
      total += w;
      if (k1 + k2 >= K - 1) top += w;
    }
  if (total > 0.0 && top > tail_tol * total)
    throw ResolutionExceeded("top oscillator shells hold a fraction " + fmt17(top / total) +
                             " of the weighted mass");
  return std::sqrt(total);
}

// band-limited decaying test field: a random combination of low Hermite levels
inline GridField random_hermite_field(DetRng& rng, int max_level = 6, double L = 20.0,
                                      int P = 512, bool real_valued = false) {
  Eigen::MatrixXd H = hermite_matrix(max_level, P, L);
  GridField f = grid_zero(L, P);
  for (int k1 = 0; k1 <= max_level; ++k1)
    for (int k2 = 0; k2 <= max_level; ++k2) {
      cplx a = real_valued ? cplx(rng.gaussian(), 0.0) : rng.gaussian_cplx();
      a /= (1.0 + k1 + k2);
      for (int i1 = 0; i1 < P; ++i1)
        for (int i2 = 0; i2 < P; ++i2) f.at(i1, i2) += a * H(k1, i1) * H(k2, i2);
    }
  return f;
}

}  // namespace heiskam
