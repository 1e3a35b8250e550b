#pragma once

// Shared plumbing: error taxonomy with process exit codes, a deterministic
// RNG (stable across platforms and compilers, unlike the std distributions),
// fixed-width numeric formatting, and a small thread pool helper.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace heiskam {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Exit codes used by the CLI: 0 success, 2 bad input, 3 no convergence,
// 4 inadmissible iteration, 5 internal assertion.
enum class ErrorKind : int { Input = 2, NoConvergence = 3, Inadmissible = 4, Internal = 5 };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

private:
  ErrorKind kind_;
};

#define HEISKAM_ERROR_TYPE(NAME, KIND)                                     \
  class NAME : public Error {                                              \
  public:                                                                  \
    explicit NAME(const std::string& what) : Error(ErrorKind::KIND, std::string(#NAME) + ": " + what) {} \
  }

HEISKAM_ERROR_TYPE(NonZeroMean, Input);
HEISKAM_ERROR_TYPE(NotOrthogonal, Input);
HEISKAM_ERROR_TYPE(DiophantineFailure, Input);
HEISKAM_ERROR_TYPE(CocycleViolation, Input);
HEISKAM_ERROR_TYPE(ObstructionNonzero, Input);
HEISKAM_ERROR_TYPE(NotACochain, Input);
HEISKAM_ERROR_TYPE(ConstraintViolated, Input);
HEISKAM_ERROR_TYPE(DegeneratePair, Input);
HEISKAM_ERROR_TYPE(ResolutionExceeded, Input);
HEISKAM_ERROR_TYPE(NotInAnnihilator, Input);
HEISKAM_ERROR_TYPE(CompatibilityViolation, Input);
HEISKAM_ERROR_TYPE(DegenerateProjection, Internal);
HEISKAM_ERROR_TYPE(AliasingExceeded, Internal);
HEISKAM_ERROR_TYPE(InversionDiverged, Internal);
HEISKAM_ERROR_TYPE(NontrivialClass, NoConvergence);
HEISKAM_ERROR_TYPE(StencilTooCoarse, Input);
HEISKAM_ERROR_TYPE(NewtonDiverged, NoConvergence);
HEISKAM_ERROR_TYPE(OutOfBall, NoConvergence);
HEISKAM_ERROR_TYPE(StepInadmissible, Inadmissible);
HEISKAM_ERROR_TYPE(NoConvergence, NoConvergence);
HEISKAM_ERROR_TYPE(BadInput, Input);
HEISKAM_ERROR_TYPE(InternalCheck, Internal);

#undef HEISKAM_ERROR_TYPE

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InternalCheck(what);
}

// splitmix64: tiny, well mixed, fully specified. The std engines are portable
// but the std distributions are not; rolling the whole chain keeps test
// artifacts byte-identical everywhere.
class DetRng {
public:
  explicit DetRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53 mantissa bits
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  // Box-Muller, one value per call (the spare is dropped for simplicity)
  double gaussian() {
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  cplx gaussian_cplx() {
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return {r * std::cos(kTwoPi * u2), r * std::sin(kTwoPi * u2)};
  }

private:
  std::uint64_t state_;
};

// 17 significant digits round-trips IEEE doubles exactly.
inline std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string fmt17(cplx z) { return fmt17(z.real()) + (z.imag() < 0 ? "" : "+") + fmt17(z.imag()) + "i"; }

inline int thread_budget() {
  if (const char* env = std::getenv("HEISKAM_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Static block partition; results land in caller-owned slots, so the merge
// order (and therefore every downstream artifact) is independent of timing.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  int threads = thread_budget();
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::size_t chunk = (count + nthreads - 1) / nthreads;
  for (std::size_t t = 0; t < nthreads; ++t) {
    std::size_t lo = t * chunk, hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace heiskam
