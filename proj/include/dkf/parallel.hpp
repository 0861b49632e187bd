#pragma once

#ifdef DKF_HAVE_OPENMP
#include <omp.h>
#endif

namespace dkf {

// Kernel execution policy. Every parallel kernel in this library has a serial
// reference path selected by Exec::serial; tests compare the two bit-for-bit
// (each output element is an independent dot product with a fixed summation
// order, so thread count must not change results).
enum class Exec { serial, openmp };

inline Exec default_exec() {
#ifdef DKF_HAVE_OPENMP
  return Exec::openmp;
#else
  return Exec::serial;
#endif
}

inline int hardware_threads() {
#ifdef DKF_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// True when already inside a parallel region; nested kernels fall back to
// their serial path.
inline bool in_parallel() {
#ifdef DKF_HAVE_OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

inline bool use_openmp(Exec exec) {
#ifdef DKF_HAVE_OPENMP
  return exec == Exec::openmp && !in_parallel();
#else
  (void)exec;
  return false;
#endif
}

}  // namespace dkf
