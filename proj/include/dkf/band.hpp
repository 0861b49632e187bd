#pragma once

#include <Eigen/Dense>
#include <cassert>
#include <unordered_map>
#include <vector>

#include "dkf/errors.hpp"

namespace dkf {

// Default tolerances for the band machinery, kept in one place.
namespace tol {
inline constexpr double kReconstructRel = 1e-9;   // band round-trip checks
inline constexpr double kCollapseAbs = 1e-8;      // off-band reconstruction
inline constexpr double kSymmetryRel = 1e-12;     // symmetry validation
}  // namespace tol

// Symmetric L-banded profile of an n-by-n matrix: the entries s_ij with
// |i-j| <= L. Only the upper half is stored; (i, j) and (j, i) alias the same
// slot. Used both for bands of covariance matrices and for exactly banded
// information matrices.
class BandProfile {
 public:
  BandProfile() = default;
  BandProfile(int n, int half_width);

  int dim() const { return n_; }
  int half_width() const { return L_; }

  bool in_band(int i, int j) const {
    int d = i < j ? j - i : i - j;
    return d <= L_;
  }

  double& at(int i, int j) {
    assert(in_band(i, j));
    return i <= j ? data_[static_cast<std::size_t>(i) * (L_ + 1) + (j - i)]
                  : data_[static_cast<std::size_t>(j) * (L_ + 1) + (i - j)];
  }
  double at(int i, int j) const { return const_cast<BandProfile*>(this)->at(i, j); }

  // 0 outside the band.
  double get(int i, int j) const { return in_band(i, j) ? at(i, j) : 0.0; }

  Eigen::MatrixXd dense() const;

  // Principal submatrix spanning rows/columns [a, b], zero-filled off band.
  Eigen::MatrixXd window(int a, int b) const;

  // Visit stored entries (upper half, i <= j).
  template <typename F>
  void for_each_upper(F&& f) const {
    for (int i = 0; i < n_; ++i)
      for (int j = i; j <= std::min(n_ - 1, i + L_); ++j) f(i, j, at(i, j));
  }

  std::size_t stored_count() const;

  double max_abs_diff(const BandProfile& other) const;

 private:
  int n_ = 0;
  int L_ = 0;
  std::vector<double> data_;  // slot (i, i+k), k = 0..L at i*(L+1)+k
};

// Keep the entries with |i-j| <= L, discard the rest. A is required to be
// symmetric to kSymmetryRel.
BandProfile band_project(const Eigen::Ref<const Eigen::MatrixXd>& A, int half_width);

// Inverse of S when Z = S^{-1} is known to be L-banded, computed from the
// banded submatrices of S alone as the alternating sum of padded window
// inverses
//
//   Z = sum_i pad[(S_{i..i+L})^{-1}] - sum_i pad[(S_{i+1..i+L})^{-1}].
//
// Each output block touches only three neighboring windows of S, which is
// what makes the distributed variant local. Throws SingularWindowError with
// the offending window index when a window is not positive definite.
BandProfile lband_invert(const BandProfile& band_of_s);

// Lazily reconstructs off-band entries of a matrix whose inverse is L-banded
// from its band. For a query (i, j) with j > i + L the identity
//
//   s_ij = S_{i,M} (S_M)^{-1} S_{M,j},   M = {j-L, ..., j-1},
//
// is applied, recursing on any S_{i,m} that is itself off band (the recursion
// strictly shrinks |i-j| and so always terminates in the band). For L = 1 and
// the distance-2 entries the iterate step needs, this is exactly
// s_ij = s_{i,j-1} s_{j-1,j-1}^{-1} s_{j-1,j}. Factorizations are cached per
// anchor column and results are memoized. Instances are cheap; build one per
// band state (values memoize against the band seen at construction).
class CollapseEvaluator {
 public:
  explicit CollapseEvaluator(const BandProfile& band) : band_(band) {}

  // s_ij for any (i, j); in-band queries read the band directly.
  double value(int i, int j);

  // Multiply-add count spent so far (factorizations + solves + dots).
  long long flops() const { return flops_; }

  // Row span of band entries a query may touch; used for locality audits.
  static std::pair<int, int> reach(int i, int j) {
    return {std::min(i, j), std::max(i, j)};
  }

 private:
  struct Anchor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd w;  // (S_M)^{-1} S_{M,j}
  };
  const Anchor& anchor(int j);

  const BandProfile& band_;
  std::unordered_map<std::int64_t, double> memo_;
  std::unordered_map<int, Anchor> anchors_;
  long long flops_ = 0;
};

// One off-band entry consistent with S^{-1} being L-banded. Fresh evaluator
// per call; use CollapseEvaluator directly when querying many entries.
double collapse_offband(const BandProfile& band, int i, int j);

// Fill every off-band entry of the band via collapse; the result has an
// exactly L-banded inverse when the band is consistent.
Eigen::MatrixXd collapse_complete(const BandProfile& band);

struct DivergenceResult {
  double divergence;   // (1/2) || Zex^{-T/2} (Zap - Zex) Zap^{-1/2} ||_F^2
  double upper_bound;  // eigenvalue bound on the same quantity
};

// Information loss between an exact information matrix and its approximation.
// Matrix square roots are the symmetric ones. Throws on non-SPD input.
DivergenceResult kl_divergence(const Eigen::Ref<const Eigen::MatrixXd>& Z_exact,
                               const Eigen::Ref<const Eigen::MatrixXd>& Z_approx);

// CSV triples "(i, j, value)" restricted to the band, one per stored entry.
std::string band_to_csv(const BandProfile& band);
BandProfile band_from_csv(const std::string& text);

}  // namespace dkf
