#include "dkf/band.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace dkf {

BandProfile::BandProfile(int n, int half_width) : n_(n), L_(half_width) {
  if (n <= 0) throw ConfigError("BandProfile: dimension must be positive");
  if (L_ < 0 || L_ >= n) throw ConfigError("BandProfile: need 0 <= L < n");
  data_.assign(static_cast<std::size_t>(n_) * (L_ + 1), 0.0);
}

Eigen::MatrixXd BandProfile::dense() const {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_, n_);
  for_each_upper([&](int i, int j, double v) {
    A(i, j) = v;
    A(j, i) = v;
  });
  return A;
}

Eigen::MatrixXd BandProfile::window(int a, int b) const {
  assert(0 <= a && a <= b && b < n_);
  const int m = b - a + 1;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      const double v = get(a + i, a + j);
      W(i, j) = v;
      W(j, i) = v;
    }
  return W;
}

std::size_t BandProfile::stored_count() const {
  std::size_t c = 0;
  for (int i = 0; i < n_; ++i) c += static_cast<std::size_t>(std::min(n_ - 1, i + L_) - i + 1);
  return c;
}

double BandProfile::max_abs_diff(const BandProfile& other) const {
  assert(n_ == other.n_ && L_ == other.L_);
  double m = 0.0;
  for_each_upper([&](int i, int j, double v) { m = std::max(m, std::abs(v - other.at(i, j))); });
  return m;
}

BandProfile band_project(const Eigen::Ref<const Eigen::MatrixXd>& A, int half_width) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n) throw ConfigError("band_project: matrix must be square");
  if (half_width >= n) throw ConfigError("band_project: L must be < n");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  BandProfile band(n, half_width);
  for (int i = 0; i < n; ++i)
    for (int j = i; j <= std::min(n - 1, i + half_width); ++j) {
      if (std::abs(A(i, j) - A(j, i)) > tol::kSymmetryRel * scale)
        throw ConfigError("band_project: input is not symmetric");
      band.at(i, j) = 0.5 * (A(i, j) + A(j, i));
    }
  return band;
}

BandProfile lband_invert(const BandProfile& band_of_s) {
  const int n = band_of_s.dim();
  const int L = band_of_s.half_width();
  BandProfile Z(n, L);

  // All window inverses first (independent, and the only O(L^3) work), then a
  // serial scatter-add since neighboring windows overlap in the band.
  const int n_pos = n - L;  // windows [a, a+L]
  std::vector<Eigen::MatrixXd> pos_inv(static_cast<std::size_t>(std::max(0, n_pos)));
  std::vector<Eigen::MatrixXd> neg_inv(static_cast<std::size_t>(std::max(0, n_pos - 1)));
  int bad_window = -1;
#pragma omp parallel for schedule(dynamic)
  for (int a = 0; a < n_pos; ++a) {
    Eigen::MatrixXd W = band_of_s.window(a, a + L);
    Eigen::LLT<Eigen::MatrixXd> llt(W);
    if (llt.info() != Eigen::Success) {
#pragma omp critical
      bad_window = a;
      continue;
    }
    pos_inv[a] = llt.solve(Eigen::MatrixXd::Identity(L + 1, L + 1));
    if (L > 0 && a + 1 < n_pos) {
      Eigen::MatrixXd V = band_of_s.window(a + 1, a + L);
      Eigen::LLT<Eigen::MatrixXd> lltv(V);
      if (lltv.info() != Eigen::Success) {
#pragma omp critical
        bad_window = a + 1;
        continue;
      }
      neg_inv[a] = lltv.solve(Eigen::MatrixXd::Identity(L, L));
    }
  }
  if (bad_window >= 0) throw SingularWindowError(bad_window, "lband_invert");

  for (int a = 0; a < n_pos; ++a) {
    const Eigen::MatrixXd& P = pos_inv[a];
    for (int r = 0; r <= L; ++r)
      for (int c = r; c <= L; ++c) Z.at(a + r, a + c) += P(r, c);
    if (L > 0 && a + 1 < n_pos) {
      const Eigen::MatrixXd& Nn = neg_inv[a];
      for (int r = 0; r < L; ++r)
        for (int c = r; c < L; ++c) Z.at(a + 1 + r, a + 1 + c) -= Nn(r, c);
    }
  }
  return Z;
}

const CollapseEvaluator::Anchor& CollapseEvaluator::anchor(int j) {
  auto it = anchors_.find(j);
  if (it != anchors_.end()) return it->second;
  const int L = band_.half_width();
  const int a = j - L;
  Anchor anc;
  Eigen::MatrixXd M = band_.window(a, j - 1);
  anc.llt.compute(M);
  if (anc.llt.info() != Eigen::Success) throw CollapsePivotError(j, "collapse_offband");
  Eigen::VectorXd rhs(L);
  for (int m = 0; m < L; ++m) rhs(m) = band_.at(a + m, j);
  anc.w = anc.llt.solve(rhs);
  flops_ += static_cast<long long>(L) * L * L / 3 + 2LL * L * L;
  return anchors_.emplace(j, std::move(anc)).first->second;
}

double CollapseEvaluator::value(int i, int j) {
  if (band_.in_band(i, j)) return band_.at(i, j);
  if (i > j) std::swap(i, j);
  const std::int64_t key = static_cast<std::int64_t>(i) * band_.dim() + j;
  auto it = memo_.find(key);
  if (it != memo_.end()) return it->second;

  const int L = band_.half_width();
  double v;
  if (L == 0) {
    v = 0.0;  // diagonal S: all off-band entries vanish
  } else {
    const Anchor& anc = anchor(j);
    const int a = j - L;
    double acc = 0.0;
    for (int m = 0; m < L; ++m) acc += value(i, a + m) * anc.w(m);
    flops_ += 2LL * L;
    v = acc;
  }
  memo_.emplace(key, v);
  return v;
}

double collapse_offband(const BandProfile& band, int i, int j) {
  if (band.in_band(i, j)) throw ConfigError("collapse_offband: entry is inside the band");
  CollapseEvaluator eval(band);
  return eval.value(i, j);
}

Eigen::MatrixXd collapse_complete(const BandProfile& band) {
  const int n = band.dim();
  CollapseEvaluator eval(band);
  Eigen::MatrixXd S = band.dense();
  // Anchors j ascending so every recursive read is already resolved.
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < j - band.half_width(); ++i) {
      const double v = eval.value(i, j);
      S(i, j) = v;
      S(j, i) = v;
    }
  return S;
}

namespace {

Eigen::MatrixXd symmetric_inv_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                   const char* who) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw Error(std::string(who) + ": eigendecomposition failed");
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw Error(std::string(who) + ": matrix is not positive definite");
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

DivergenceResult kl_divergence(const Eigen::Ref<const Eigen::MatrixXd>& Z_exact,
                               const Eigen::Ref<const Eigen::MatrixXd>& Z_approx) {
  if (Z_exact.rows() != Z_approx.rows() || Z_exact.cols() != Z_approx.cols())
    throw ConfigError("kl_divergence: dimension mismatch");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_ex(Z_exact);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_ap(Z_approx);
  if (es_ex.eigenvalues().minCoeff() <= 0.0 || es_ap.eigenvalues().minCoeff() <= 0.0)
    throw Error("kl_divergence: inputs must be symmetric positive definite");

  const Eigen::MatrixXd ex_is = es_ex.eigenvectors() *
                                es_ex.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                es_ex.eigenvectors().transpose();
  const Eigen::MatrixXd ap_is = es_ap.eigenvectors() *
                                es_ap.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                                es_ap.eigenvectors().transpose();

  const Eigen::MatrixXd diff = Z_approx - Z_exact;
  DivergenceResult out;
  out.divergence = 0.5 * (ex_is.transpose() * diff * ap_is).squaredNorm();
  const double sum_ex = es_ex.eigenvalues().cwiseSqrt().cwiseInverse().sum();
  const double sum_ap = es_ap.eigenvalues().cwiseSqrt().cwiseInverse().sum();
  out.upper_bound = 0.5 * sum_ap * sum_ap * sum_ex * sum_ex * diff.squaredNorm();
  return out;
}

std::string band_to_csv(const BandProfile& band) {
  std::ostringstream os;
  os << "i,j,value\n";
  os.precision(17);
  band.for_each_upper([&](int i, int j, double v) { os << i << ',' << j << ',' << v << '\n'; });
  return os.str();
}

BandProfile band_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);  // header
  struct Triple {
    int i, j;
    double v;
  };
  std::vector<Triple> triples;
  int n = 0, L = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Triple t{};
    char c1, c2;
    std::istringstream ls(line);
    if (!(ls >> t.i >> c1 >> t.j >> c2 >> t.v)) throw ConfigError("band_from_csv: bad line: " + line);
    n = std::max(n, std::max(t.i, t.j) + 1);
    L = std::max(L, std::abs(t.i - t.j));
    triples.push_back(t);
  }
  BandProfile band(n, L);
  for (const auto& t : triples) band.at(t.i, t.j) = t.v;
  return band;
}

}  // namespace dkf
