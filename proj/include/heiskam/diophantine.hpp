#pragma once

// Frequency data for a pair of commuting translations. The two direction
// vectors tau_vec, eta_vec in R^n are orthogonal and sit inside R^{2n} as
// (tau_vec, 0) and (0, eta_vec). A character m in Z^{2n} sees them only
// through its first / second block, so the small divisor
//
//   zeta(m, kappa) = exp(2 pi i m.kappa) - 1
//
// vanishes exactly on the stratum where the corresponding block is zero.
// Away from that stratum a lower bound
//
//   |tau_vec . m1 - p| > c |m1.m1|^{-gamma}   (p the nearest integer)
//
// is certified by exhaustive search up to a bound; an equivalent form with
// |m.m|^{-gamma} over the full lattice carries the same constant, because
// the left side does not depend on the second block and |m.m| >= |m1.m1|
// with equality on the binding slice m2 = 0.

#include <cmath>
#include <limits>
#include <vector>

#include "heiskam/lattice_fourier.hpp"

namespace heiskam {

struct DiophantineWitness {
  std::vector<int> m;  // block index attaining the minimum
  long long p = 0;     // nearest integer
  double dist = 0.0;   // |kappa.m - p|
  double score = 0.0;  // dist * (m.m)^gamma
};

struct FrequencyPair {
  int n = 2;
  std::vector<double> tau_vec, eta_vec;  // R^n directions
  double gamma = 1.5;
  double c = 0.0;           // certified constant, min over both vectors
  double c_block_form = 0.0;   // constant for the |m1.m1|^{-gamma} form
  double c_full_form = 0.0;    // constant for the |m.m|^{-gamma} form (equal, see header note)
  double tau = 0.0;         // |tau_vec|
  double eta_norm = 0.0;    // |eta_vec|
  int search_bound = 0;
  DiophantineWitness worst_tau, worst_eta;

  std::vector<double> tau_embedded() const {
    std::vector<double> v(2 * n, 0.0);
    for (int i = 0; i < n; ++i) v[i] = tau_vec[i];
    return v;
  }
  std::vector<double> eta_embedded() const {
    std::vector<double> v(2 * n, 0.0);
    for (int i = 0; i < n; ++i) v[n + i] = eta_vec[i];
    return v;
  }

  // first block of m for tau, second block for eta
  double zeta_phase_tau(const MIdx& m) const {
    double x = 0.0;
    for (int i = 0; i < n; ++i) x += double(m[i]) * tau_vec[i];
    return x;
  }
  double zeta_phase_eta(const MIdx& m) const {
    double x = 0.0;
    for (int i = 0; i < n; ++i) x += double(m[n + i]) * eta_vec[i];
    return x;
  }

  bool block_tau_zero(const MIdx& m) const {
    for (int i = 0; i < n; ++i)
      if (m[i] != 0) return false;
    return true;
  }
  bool block_eta_zero(const MIdx& m) const {
    for (int i = 0; i < n; ++i)
      if (m[n + i] != 0) return false;
    return true;
  }

  cplx zeta_tau(const MIdx& m) const {
    if (block_tau_zero(m)) return {0.0, 0.0};
    return std::polar(1.0, kTwoPi * zeta_phase_tau(m)) - 1.0;
  }
  cplx zeta_eta(const MIdx& m) const {
    if (block_eta_zero(m)) return {0.0, 0.0};
    return std::polar(1.0, kTwoPi * zeta_phase_eta(m)) - 1.0;
  }
};

namespace detail {

inline DiophantineWitness scan_block(const std::vector<double>& kappa, double gamma, int bound) {
  int n = static_cast<int>(kappa.size());
  DiophantineWitness best;
  best.score = std::numeric_limits<double>::infinity();
  std::vector<int> m(n, -bound);
  while (true) {
    bool zero = true;
    for (int v : m) zero = zero && (v == 0);
    if (!zero) {
      double x = 0.0, mm = 0.0;
      for (int i = 0; i < n; ++i) {
        x += m[i] * kappa[i];
        mm += double(m[i]) * double(m[i]);
      }
      double p = std::nearbyint(x);
      double dist = std::abs(x - p);
      double score = dist * std::pow(mm, gamma);
      if (score < best.score) {
        best.m = m;
        best.p = static_cast<long long>(p);
        best.dist = dist;
        best.score = score;
      }
    }
    int axis = n - 1;
    while (axis >= 0 && m[axis] == bound) m[axis--] = -bound;
    if (axis < 0) break;
    ++m[axis];
  }
  return best;
}

}  // namespace detail

inline FrequencyPair make_pair(std::vector<double> tau_vec, std::vector<double> eta_vec,
                               double gamma = 1.5, int search_bound = 200,
                               double resonance_tol = 1e-13) {
  FrequencyPair pair;
  pair.n = static_cast<int>(tau_vec.size());
  require(pair.n >= 1 && 2 * pair.n <= kMaxAxes, "frequency dimension out of range");
  require(tau_vec.size() == eta_vec.size(), "direction vectors differ in dimension");
  require(gamma > 0.0 && search_bound >= 1, "bad diophantine parameters");
  pair.tau_vec = std::move(tau_vec);
  pair.eta_vec = std::move(eta_vec);
  pair.gamma = gamma;
  pair.search_bound = search_bound;

  double dot = 0.0, nt = 0.0, ne = 0.0;
  for (int i = 0; i < pair.n; ++i) {
    dot += pair.tau_vec[i] * pair.eta_vec[i];
    nt += pair.tau_vec[i] * pair.tau_vec[i];
    ne += pair.eta_vec[i] * pair.eta_vec[i];
  }
  pair.tau = std::sqrt(nt);
  pair.eta_norm = std::sqrt(ne);
  require(pair.tau > 0.0 && pair.eta_norm > 0.0, "zero direction vector");
  if (std::abs(dot) > 1e-12 * pair.tau * pair.eta_norm)
    throw NotOrthogonal("tau.eta = " + fmt17(dot));

  pair.worst_tau = detail::scan_block(pair.tau_vec, gamma, search_bound);
  pair.worst_eta = detail::scan_block(pair.eta_vec, gamma, search_bound);
  if (pair.worst_tau.dist <= resonance_tol)
    throw DiophantineFailure("resonance on the first block, dist = " + fmt17(pair.worst_tau.dist));
  if (pair.worst_eta.dist <= resonance_tol)
    throw DiophantineFailure("resonance on the second block, dist = " + fmt17(pair.worst_eta.dist));

  pair.c_block_form = std::min(pair.worst_tau.score, pair.worst_eta.score);
  pair.c_full_form = pair.c_block_form;  // binding slice has the other block zero
  pair.c = pair.c_block_form;
  if (!(pair.c > 0.0)) throw DiophantineFailure("certified constant is not positive");
  return pair;
}

struct DivisorEntry {
  MIdx m;
  cplx zeta_tau, zeta_eta;
  bool tau_vanishes = false;  // first block zero
  bool eta_vanishes = false;  // second block zero
};

struct DivisorTable {
  int n = 2;
  int cutoff = 0;
  std::vector<DivisorEntry> entries;  // lexicographic in m, m = 0 included
  // measured sup of |zeta|^{-1} (1 + 4 pi^2 m.m)^{-gamma} over each stratum
  double const_tau = 0.0;
  double const_eta = 0.0;
  double cert_bound = 0.0;  // (4c)^{-1} (4 pi^2)^{-gamma}, an a priori cap on both
};

inline DivisorTable small_divisor_table(const FrequencyPair& pair, int cutoff) {
  require(cutoff >= 1, "table cutoff must be positive");
  require(cutoff <= pair.search_bound,
          "table cutoff exceeds the certified search bound");
  DivisorTable table;
  table.n = pair.n;
  table.cutoff = cutoff;
  table.cert_bound = std::pow(4.0 * kPi * kPi, -pair.gamma) / (4.0 * pair.c);

  int d = 2 * pair.n;
  MIdx m = midx_zero();
  std::function<void(int)> rec = [&](int axis) {
    if (axis == d) {
      DivisorEntry e;
      e.m = m;
      e.tau_vanishes = pair.block_tau_zero(m);
      e.eta_vanishes = pair.block_eta_zero(m);
      e.zeta_tau = pair.zeta_tau(m);
      e.zeta_eta = pair.zeta_eta(m);
      double w = std::pow(1.0 + 4.0 * kPi * kPi * midx_dot(m), pair.gamma);
      if (!e.tau_vanishes) {
        require(std::abs(e.zeta_tau) > 0.0, "divisor vanished off its stratum");
        table.const_tau = std::max(table.const_tau, 1.0 / (std::abs(e.zeta_tau) * w));
      }
      if (e.tau_vanishes && !e.eta_vanishes) {
        require(std::abs(e.zeta_eta) > 0.0, "divisor vanished off its stratum");
        table.const_eta = std::max(table.const_eta, 1.0 / (std::abs(e.zeta_eta) * w));
      }
      table.entries.push_back(e);
      return;
    }
    for (int v = -cutoff; v <= cutoff; ++v) {
      m[axis] = static_cast<int16_t>(v);
      rec(axis + 1);
    }
    m[axis] = 0;
  };
  rec(0);

  require(table.const_tau <= table.cert_bound * (1.0 + 1e-12),
          "measured divisor constant exceeds the certified bound");
  require(table.const_eta <= table.cert_bound * (1.0 + 1e-12),
          "measured divisor constant exceeds the certified bound");
  return table;
}

// The canonical test pair: tau_vec = (sqrt2, sqrt3), eta_vec = (sqrt3, -sqrt2).
inline FrequencyPair default_pair(double gamma = 1.5, int search_bound = 200) {
  return make_pair({std::sqrt(2.0), std::sqrt(3.0)}, {std::sqrt(3.0), -std::sqrt(2.0)}, gamma,
                   search_bound);
}

}  // namespace heiskam
