// Eigen-backed versions of the dense BLAS kernels UMFPACK calls during its
// numeric factorization and solves. Linking this object into an executable
// interposes these symbols over the reference BLAS, whose unblocked loops
// dominate the factorization time on the frontal matrices of the saddle
// systems. Only column-major Fortran semantics are implemented; the hidden
// string-length arguments some callers pass are ignored.

#include <Eigen/Core>

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1>;
using MatMap = Eigen::Map<Matrix, 0, Eigen::OuterStride<>>;
using ConstMatMap = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;
using VecMap = Eigen::Map<Vector, 0, Eigen::InnerStride<>>;
using ConstVecMap = Eigen::Map<const Vector, 0, Eigen::InnerStride<>>;

bool is(const char* flag, char c) { return *flag == c || *flag == c + ('a' - 'A'); }
bool transposed(const char* flag) { return is(flag, 'T') || is(flag, 'C'); }

// Strided vector view. A negative increment walks backwards from the far end,
// which a reversed positive-stride view reproduces.
template <typename Map, typename Ptr>
auto strided(Ptr p, int n, int inc) {
  const int step = inc < 0 ? -inc : inc;
  return Map(p, n, Eigen::InnerStride<>(step));
}

template <typename Vec>
auto in_order(Vec v, int inc) {
  return inc < 0 ? Vector(v.reverse()) : Vector(v);
}

template <typename Vec>
void store(Vec v, int inc, const Vector& value) {
  if (inc < 0) v = value.reverse();
  else v = value;
}

template <int Mode, typename Tri, typename Rhs>
void solve_mode(const Tri& a, bool unit, bool left, Rhs& b) {
  constexpr int unit_mode = (Mode == Eigen::Upper) ? Eigen::UnitUpper : Eigen::UnitLower;
  if (left) {
    if (unit) a.template triangularView<unit_mode>().template solveInPlace<Eigen::OnTheLeft>(b);
    else a.template triangularView<Mode>().template solveInPlace<Eigen::OnTheLeft>(b);
  } else {
    if (unit) a.template triangularView<unit_mode>().template solveInPlace<Eigen::OnTheRight>(b);
    else a.template triangularView<Mode>().template solveInPlace<Eigen::OnTheRight>(b);
  }
}

// op(A) X = B (left) or X op(A) = B (right), in place.
template <typename Rhs>
void triangular_solve(const ConstMatMap& a, bool upper, bool trans, bool unit, bool left, Rhs& b) {
  // transposing swaps the stored triangle
  const bool effective_upper = upper != trans;
  if (trans) {
    const auto at = a.transpose();
    if (effective_upper) solve_mode<Eigen::Upper>(at, unit, left, b);
    else solve_mode<Eigen::Lower>(at, unit, left, b);
  } else {
    if (effective_upper) solve_mode<Eigen::Upper>(a, unit, left, b);
    else solve_mode<Eigen::Lower>(a, unit, left, b);
  }
}

}  // namespace

extern "C" {

void dgemm_(const char* transa, const char* transb, const int* m, const int* n, const int* k,
            const double* alpha, const double* a, const int* lda, const double* b, const int* ldb,
            const double* beta, double* c, const int* ldc) {
  if (*m == 0 || *n == 0) return;
  MatMap cm(c, *m, *n, Eigen::OuterStride<>(*ldc));
  if (*beta == 0.0) cm.setZero();
  else if (*beta != 1.0) cm *= *beta;
  if (*k == 0 || *alpha == 0.0) return;
  const bool ta = transposed(transa), tb = transposed(transb);
  const ConstMatMap am(a, ta ? *k : *m, ta ? *m : *k, Eigen::OuterStride<>(*lda));
  const ConstMatMap bm(b, tb ? *n : *k, tb ? *k : *n, Eigen::OuterStride<>(*ldb));
  if (!ta && !tb) cm.noalias() += *alpha * am * bm;
  else if (ta && !tb) cm.noalias() += *alpha * am.transpose() * bm;
  else if (!ta) cm.noalias() += *alpha * am * bm.transpose();
  else cm.noalias() += *alpha * am.transpose() * bm.transpose();
}

void dgemv_(const char* trans, const int* m, const int* n, const double* alpha, const double* a,
            const int* lda, const double* x, const int* incx, const double* beta, double* y,
            const int* incy) {
  if (*m == 0 || *n == 0) return;
  const bool t = transposed(trans);
  const int nx = t ? *m : *n, ny = t ? *n : *m;
  auto yv = strided<VecMap>(y, ny, *incy);
  Vector out = *beta == 0.0 ? Vector::Zero(ny) : Vector(*beta * in_order(yv, *incy));
  if (*alpha != 0.0) {
    const ConstMatMap am(a, *m, *n, Eigen::OuterStride<>(*lda));
    const Vector xv = in_order(strided<ConstVecMap>(x, nx, *incx), *incx);
    if (t) out.noalias() += *alpha * am.transpose() * xv;
    else out.noalias() += *alpha * am * xv;
  }
  store(yv, *incy, out);
}

void dger_(const int* m, const int* n, const double* alpha, const double* x, const int* incx,
           const double* y, const int* incy, double* a, const int* lda) {
  if (*m == 0 || *n == 0 || *alpha == 0.0) return;
  MatMap am(a, *m, *n, Eigen::OuterStride<>(*lda));
  const Vector xv = in_order(strided<ConstVecMap>(x, *m, *incx), *incx);
  const Vector yv = in_order(strided<ConstVecMap>(y, *n, *incy), *incy);
  am.noalias() += (*alpha * xv) * yv.transpose();
}

void dtrsv_(const char* uplo, const char* trans, const char* diag, const int* n, const double* a,
            const int* lda, double* x, const int* incx) {
  if (*n == 0) return;
  const ConstMatMap am(a, *n, *n, Eigen::OuterStride<>(*lda));
  auto xv = strided<VecMap>(x, *n, *incx);
  Vector b = in_order(xv, *incx);
  triangular_solve(am, is(uplo, 'U'), transposed(trans), is(diag, 'U'), true, b);
  store(xv, *incx, b);
}

void dtrsm_(const char* side, const char* uplo, const char* transa, const char* diag, const int* m,
            const int* n, const double* alpha, const double* a, const int* lda, double* b,
            const int* ldb) {
  if (*m == 0 || *n == 0) return;
  MatMap bm(b, *m, *n, Eigen::OuterStride<>(*ldb));
  if (*alpha == 0.0) {
    bm.setZero();
    return;
  }
  if (*alpha != 1.0) bm *= *alpha;
  const bool left = is(side, 'L');
  const int na = left ? *m : *n;
  const ConstMatMap am(a, na, na, Eigen::OuterStride<>(*lda));
  triangular_solve(am, is(uplo, 'U'), transposed(transa), is(diag, 'U'), left, bm);
}

}  // extern "C"
