#include "flowtopo/linear_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <suitesparse/umfpack.h>
#include <Eigen/LU>

#include "flowtopo/errors.hpp"

namespace flowtopo {

struct SparseLu::Impl {
  void* symbolic = nullptr;
  void* numeric = nullptr;
  std::vector<int> col_ptr;
  std::vector<int> row_idx;
  std::vector<double> values;
  int n = 0;
  double control[UMFPACK_CONTROL];

  Impl() {
    umfpack_di_defaults(control);
    // saddle systems have a symmetric pattern; the unsymmetric default
    // ordering multiplies the fill several times
    control[UMFPACK_STRATEGY] = UMFPACK_STRATEGY_SYMMETRIC;
    // refinement is done by the callers against the uncondensed operator
    control[UMFPACK_IRSTEP] = 0;
    // plain AMD on A + A^T; METIS and the CHOLMOD trial cost more than they save here
    control[UMFPACK_ORDERING] = UMFPACK_ORDERING_AMD;
  }
  ~Impl() { release(); }

  void release() {
    if (numeric) umfpack_di_free_numeric(&numeric);
    if (symbolic) umfpack_di_free_symbolic(&symbolic);
    numeric = nullptr;
    symbolic = nullptr;
  }

  // First zero pivot of U mapped back to an original column index.
  long locate_zero_pivot() const {
    int lnz = 0, unz = 0, nrow = 0, ncol = 0, nz_udiag = 0;
    if (umfpack_di_get_lunz(&lnz, &unz, &nrow, &ncol, &nz_udiag, numeric) != UMFPACK_OK) return -1;
    std::vector<double> udiag(static_cast<std::size_t>(n));
    std::vector<int> q(static_cast<std::size_t>(n));
    int do_recip = 0;
    const int status = umfpack_di_get_numeric(nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                                              nullptr, q.data(), udiag.data(), &do_recip, nullptr,
                                              numeric);
    if (status != UMFPACK_OK) return -1;
    for (int k = 0; k < n; ++k) {
      if (udiag[static_cast<std::size_t>(k)] == 0.0 || !std::isfinite(udiag[static_cast<std::size_t>(k)])) {
        return q[static_cast<std::size_t>(k)];
      }
    }
    return -1;
  }
};

SparseLu::SparseLu() : impl_(std::make_unique<Impl>()) {}
SparseLu::~SparseLu() = default;
SparseLu::SparseLu(SparseLu&&) noexcept = default;
SparseLu& SparseLu::operator=(SparseLu&&) noexcept = default;

void SparseLu::factorize(const SparseMatrix& matrix) {
  if (matrix.rows() != matrix.cols()) throw InvalidArgument("LU needs a square matrix");
  if (!matrix.isCompressed()) throw InvalidArgument("LU needs a compressed matrix");
  auto& s = *impl_;
  const int n = static_cast<int>(matrix.rows());
  const int nnz = static_cast<int>(matrix.nonZeros());
  const bool same_pattern =
      s.symbolic != nullptr && n == s.n && static_cast<int>(s.row_idx.size()) == nnz &&
      std::equal(matrix.outerIndexPtr(), matrix.outerIndexPtr() + n + 1, s.col_ptr.begin()) &&
      std::equal(matrix.innerIndexPtr(), matrix.innerIndexPtr() + nnz, s.row_idx.begin());
  if (s.numeric) umfpack_di_free_numeric(&s.numeric);
  s.numeric = nullptr;
  if (!same_pattern) {
    s.release();
    s.n = n;
    s.col_ptr.assign(matrix.outerIndexPtr(), matrix.outerIndexPtr() + n + 1);
    s.row_idx.assign(matrix.innerIndexPtr(), matrix.innerIndexPtr() + nnz);
  }
  s.values.assign(matrix.valuePtr(), matrix.valuePtr() + nnz);
  double info[UMFPACK_INFO];
  if (!s.symbolic) {
    const int status = umfpack_di_symbolic(n, n, s.col_ptr.data(), s.row_idx.data(),
                                           s.values.data(), &s.symbolic, s.control, info);
    if (status != UMFPACK_OK) {
      s.release();
      throw SingularSystemError("symbolic factorization failed (status " + std::to_string(status) + ")",
                                -1);
    }
  }
  const int status = umfpack_di_numeric(s.col_ptr.data(), s.row_idx.data(), s.values.data(),
                                        s.symbolic, &s.numeric, s.control, info);
  if (status == UMFPACK_WARNING_singular_matrix) {
    const long pivot = s.locate_zero_pivot();
    umfpack_di_free_numeric(&s.numeric);
    s.numeric = nullptr;
    throw SingularSystemError("singular matrix, zero pivot at column " + std::to_string(pivot), pivot);
  }
  if (status != UMFPACK_OK) {
    if (s.numeric) umfpack_di_free_numeric(&s.numeric);
    s.numeric = nullptr;
    throw SingularSystemError("numeric factorization failed (status " + std::to_string(status) + ")",
                              -1);
  }
}

Eigen::VectorXd SparseLu::solve(const Eigen::VectorXd& rhs) const {
  const auto& s = *impl_;
  if (!s.numeric) throw InvalidArgument("solve called before factorize");
  if (rhs.size() != s.n) throw InvalidArgument("rhs size mismatch in LU solve");
  Eigen::VectorXd x(rhs.size());
  double info[UMFPACK_INFO];
  const int status = umfpack_di_solve(UMFPACK_A, s.col_ptr.data(), s.row_idx.data(),
                                      s.values.data(), x.data(), rhs.data(), s.numeric, s.control,
                                      info);
  if (status != UMFPACK_OK) throw SingularSystemError("LU solve failed", -1);
  return x;
}

Eigen::VectorXd SparseLu::solve_transposed(const Eigen::VectorXd& rhs) const {
  const auto& s = *impl_;
  if (!s.numeric) throw InvalidArgument("solve called before factorize");
  if (rhs.size() != s.n) throw InvalidArgument("rhs size mismatch in LU solve");
  Eigen::VectorXd x(rhs.size());
  double info[UMFPACK_INFO];
  const int status = umfpack_di_solve(UMFPACK_At, s.col_ptr.data(), s.row_idx.data(),
                                      s.values.data(), x.data(), rhs.data(), s.numeric, s.control,
                                      info);
  if (status != UMFPACK_OK) throw SingularSystemError("transposed LU solve failed", -1);
  return x;
}

void check_residual(const SparseMatrix& matrix, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& rhs, bool transposed) {
  const Eigen::VectorXd r = transposed ? Eigen::VectorXd(matrix.transpose() * x - rhs)
                                       : Eigen::VectorXd(matrix * x - rhs);
  const double bound = 1e-10 * (1.0 + rhs.norm());
  if (!(r.norm() <= bound)) {
    std::ostringstream msg;
    msg << "linear solve residual " << r.norm() << " exceeds " << bound;
    long worst = 0;
    r.cwiseAbs().maxCoeff(&worst);
    throw SingularSystemError(msg.str(), worst);
  }
}

struct CondensedLu::Impl {
  struct Block {
    std::vector<int> dofs;  // system indices of the group
    std::vector<int> rows;  // compact retained rows coupled to the group
    std::vector<int> cols;  // compact retained columns coupled to the group
    std::vector<int> positions;  // of rows x cols in schur, column-major
    Eigen::MatrixXd b;      // K(rows, group)
    Eigen::MatrixXd c;      // K(group, cols)
    Eigen::MatrixXd d_inv;
  };

  std::vector<std::vector<int>> groups;
  Eigen::Index n = -1;
  std::vector<int> outer, inner;
  std::vector<int> group_of, local_of, compact, retained;
  std::vector<Block> blocks;
  // input value index -> schur value index
  std::vector<std::pair<int, int>> rr_map;
  // input value index -> entry of a block matrix
  struct BlockEntry {
    int k;
    int block;
    int kind;  // 0: group block, 1: b, 2: c
    int flat;  // column-major offset
  };
  std::vector<BlockEntry> block_map;
  Eigen::MatrixXd dc, update;  // scratch for D^-1 C and B D^-1 C
  SparseMatrix schur;
  SparseLu lu;
  bool factorized = false;

  bool same_pattern(const SparseMatrix& m) const {
    if (m.rows() != n || static_cast<std::size_t>(m.nonZeros()) != inner.size()) return false;
    return std::equal(m.outerIndexPtr(), m.outerIndexPtr() + n + 1, outer.begin()) &&
           std::equal(m.innerIndexPtr(), m.innerIndexPtr() + m.nonZeros(), inner.begin());
  }

  static int find_sorted(const std::vector<int>& v, int key) {
    return static_cast<int>(std::lower_bound(v.begin(), v.end(), key) - v.begin());
  }

  int schur_position(int row, int col) const {
    const int* begin = schur.innerIndexPtr() + schur.outerIndexPtr()[col];
    const int* end = schur.innerIndexPtr() + schur.outerIndexPtr()[col + 1];
    return static_cast<int>(std::lower_bound(begin, end, row) - schur.innerIndexPtr());
  }

  void analyse(const SparseMatrix& m) {
    n = m.rows();
    outer.assign(m.outerIndexPtr(), m.outerIndexPtr() + n + 1);
    inner.assign(m.innerIndexPtr(), m.innerIndexPtr() + m.nonZeros());
    group_of.assign(static_cast<std::size_t>(n), -1);
    local_of.assign(static_cast<std::size_t>(n), -1);
    blocks.assign(groups.size(), Block{});
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t k = 0; k < groups[g].size(); ++k) {
        const int dof = groups[g][k];
        if (dof < 0 || dof >= n) throw InvalidArgument("condensation group index out of range");
        if (group_of[static_cast<std::size_t>(dof)] >= 0)
          throw InvalidArgument("condensation groups overlap at index " + std::to_string(dof));
        group_of[static_cast<std::size_t>(dof)] = static_cast<int>(g);
        local_of[static_cast<std::size_t>(dof)] = static_cast<int>(k);
      }
      blocks[g].dofs = groups[g];
    }
    compact.assign(static_cast<std::size_t>(n), -1);
    retained.clear();
    for (int i = 0; i < n; ++i) {
      if (group_of[static_cast<std::size_t>(i)] >= 0) continue;
      compact[static_cast<std::size_t>(i)] = static_cast<int>(retained.size());
      retained.push_back(i);
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(inner.size());
    for (int j = 0; j < n; ++j) {
      const int gj = group_of[static_cast<std::size_t>(j)];
      for (int k = outer[static_cast<std::size_t>(j)]; k < outer[static_cast<std::size_t>(j) + 1]; ++k) {
        const int i = inner[static_cast<std::size_t>(k)];
        const int gi = group_of[static_cast<std::size_t>(i)];
        if (gi >= 0 && gj >= 0 && gi != gj)
          throw InvalidArgument("condensation groups " + std::to_string(gi) + " and " +
                                std::to_string(gj) + " are coupled");
        if (gi < 0 && gj < 0) triplets.emplace_back(compact[static_cast<std::size_t>(i)], compact[static_cast<std::size_t>(j)], 0.0);
        else if (gi >= 0 && gj < 0) blocks[static_cast<std::size_t>(gi)].cols.push_back(compact[static_cast<std::size_t>(j)]);
        else if (gi < 0 && gj >= 0) blocks[static_cast<std::size_t>(gj)].rows.push_back(compact[static_cast<std::size_t>(i)]);
      }
    }
    for (auto& b : blocks) {
      for (auto* v : {&b.rows, &b.cols}) {
        std::sort(v->begin(), v->end());
        v->erase(std::unique(v->begin(), v->end()), v->end());
      }
      for (int c : b.cols)
        for (int r : b.rows) triplets.emplace_back(r, c, 0.0);
    }
    const auto nr = static_cast<Eigen::Index>(retained.size());
    schur = SparseMatrix(nr, nr);
    schur.setFromTriplets(triplets.begin(), triplets.end());
    schur.makeCompressed();

    rr_map.clear();
    for (int j = 0; j < n; ++j) {
      if (group_of[static_cast<std::size_t>(j)] >= 0) continue;
      for (int k = outer[static_cast<std::size_t>(j)]; k < outer[static_cast<std::size_t>(j) + 1]; ++k) {
        const int i = inner[static_cast<std::size_t>(k)];
        if (group_of[static_cast<std::size_t>(i)] >= 0) continue;
        rr_map.emplace_back(k, schur_position(compact[static_cast<std::size_t>(i)], compact[static_cast<std::size_t>(j)]));
      }
    }
    for (auto& b : blocks) {
      b.positions.clear();
      for (int c : b.cols)
        for (int r : b.rows) b.positions.push_back(schur_position(r, c));
      const auto g = static_cast<Eigen::Index>(b.dofs.size());
      b.b.resize(static_cast<Eigen::Index>(b.rows.size()), g);
      b.c.resize(g, static_cast<Eigen::Index>(b.cols.size()));
      b.d_inv.resize(g, g);
    }

    block_map.clear();
    for (int j = 0; j < n; ++j) {
      const int gj = group_of[static_cast<std::size_t>(j)];
      for (int k = outer[static_cast<std::size_t>(j)]; k < outer[static_cast<std::size_t>(j) + 1]; ++k) {
        const int i = inner[static_cast<std::size_t>(k)];
        const int gi = group_of[static_cast<std::size_t>(i)];
        const int li = local_of[static_cast<std::size_t>(i)], lj = local_of[static_cast<std::size_t>(j)];
        if (gi >= 0 && gj >= 0) {
          const auto& b = blocks[static_cast<std::size_t>(gi)];
          block_map.push_back({k, gi, 0, li + lj * static_cast<int>(b.dofs.size())});
        } else if (gi >= 0) {
          const auto& b = blocks[static_cast<std::size_t>(gi)];
          const int col = find_sorted(b.cols, compact[static_cast<std::size_t>(j)]);
          block_map.push_back({k, gi, 2, li + col * static_cast<int>(b.dofs.size())});
        } else if (gj >= 0) {
          const auto& b = blocks[static_cast<std::size_t>(gj)];
          const int row = find_sorted(b.rows, compact[static_cast<std::size_t>(i)]);
          block_map.push_back({k, gj, 1, row + lj * static_cast<int>(b.rows.size())});
        }
      }
    }
  }

  template <typename Small>
  static bool invert(Eigen::MatrixXd& block) {
    const Eigen::FullPivLU<Small> lu(block);
    if (!lu.isInvertible()) return false;
    block = lu.inverse();
    return true;
  }

  void numeric(const SparseMatrix& m) {
    for (auto& b : blocks) {
      b.b.setZero();
      b.c.setZero();
      b.d_inv.setZero();  // holds the block itself until inverted
    }
    double* sv = schur.valuePtr();
    std::fill(sv, sv + schur.nonZeros(), 0.0);
    const double* v = m.valuePtr();
    for (const auto& [k, pos] : rr_map) sv[pos] += v[k];
    for (const auto& e : block_map) {
      auto& b = blocks[static_cast<std::size_t>(e.block)];
      double* dst = e.kind == 0 ? b.d_inv.data() : e.kind == 1 ? b.b.data() : b.c.data();
      dst[e.flat] = v[e.k];
    }
    for (auto& b : blocks) {
      // stack storage for the usual bubble pairs
      using Small = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;
      const bool ok = b.d_inv.rows() <= 4 ? invert<Small>(b.d_inv) : invert<Eigen::MatrixXd>(b.d_inv);
      if (!ok)
        throw SingularSystemError("singular condensation block at index " + std::to_string(b.dofs.front()),
                                  b.dofs.front());
      dc.noalias() = b.d_inv * b.c;
      update.noalias() = b.b * dc;
      const auto nr = static_cast<Eigen::Index>(b.rows.size());
      for (std::size_t q = 0; q < b.positions.size(); ++q)
        sv[b.positions[q]] -= update(static_cast<Eigen::Index>(q) % nr, static_cast<Eigen::Index>(q) / nr);
    }
    try {
      lu.factorize(schur);
    } catch (const SingularSystemError& e) {
      const long col = e.pivot() >= 0 ? retained[static_cast<std::size_t>(e.pivot())] : -1;
      throw SingularSystemError(e.what(), col);
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, bool transposed) const {
    const auto nr = static_cast<Eigen::Index>(retained.size());
    Eigen::VectorXd br(nr);
    for (Eigen::Index k = 0; k < nr; ++k) br[k] = rhs[retained[static_cast<std::size_t>(k)]];
    std::vector<Eigen::VectorXd> local(blocks.size());
    for (std::size_t g = 0; g < blocks.size(); ++g) {
      const auto& b = blocks[g];
      Eigen::VectorXd bg(static_cast<Eigen::Index>(b.dofs.size()));
      for (std::size_t q = 0; q < b.dofs.size(); ++q) bg[static_cast<Eigen::Index>(q)] = rhs[b.dofs[q]];
      const Eigen::VectorXd y = transposed ? Eigen::VectorXd(b.d_inv.transpose() * bg) : Eigen::VectorXd(b.d_inv * bg);
      const Eigen::VectorXd push = transposed ? Eigen::VectorXd(b.c.transpose() * y) : Eigen::VectorXd(b.b * y);
      const auto& target = transposed ? b.cols : b.rows;
      for (std::size_t q = 0; q < target.size(); ++q) br[target[q]] -= push[static_cast<Eigen::Index>(q)];
      local[g] = std::move(bg);
    }
    const Eigen::VectorXd xr = transposed ? lu.solve_transposed(br) : lu.solve(br);
    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < nr; ++k) x[retained[static_cast<std::size_t>(k)]] = xr[k];
    for (std::size_t g = 0; g < blocks.size(); ++g) {
      const auto& b = blocks[g];
      const auto& source = transposed ? b.rows : b.cols;
      Eigen::VectorXd xs(static_cast<Eigen::Index>(source.size()));
      for (std::size_t q = 0; q < source.size(); ++q) xs[static_cast<Eigen::Index>(q)] = xr[source[q]];
      const Eigen::VectorXd rest = transposed ? Eigen::VectorXd(local[g] - b.b.transpose() * xs)
                                              : Eigen::VectorXd(local[g] - b.c * xs);
      const Eigen::VectorXd xg = transposed ? Eigen::VectorXd(b.d_inv.transpose() * rest) : Eigen::VectorXd(b.d_inv * rest);
      for (std::size_t q = 0; q < b.dofs.size(); ++q) x[b.dofs[q]] = xg[static_cast<Eigen::Index>(q)];
    }
    return x;
  }
};

CondensedLu::CondensedLu(std::vector<std::vector<int>> groups) : impl_(std::make_unique<Impl>()) {
  impl_->groups = std::move(groups);
}
CondensedLu::~CondensedLu() = default;
CondensedLu::CondensedLu(CondensedLu&&) noexcept = default;
CondensedLu& CondensedLu::operator=(CondensedLu&&) noexcept = default;

void CondensedLu::factorize(const SparseMatrix& matrix) {
  if (matrix.rows() != matrix.cols()) throw InvalidArgument("LU needs a square matrix");
  if (!matrix.isCompressed()) throw InvalidArgument("LU needs a compressed matrix");
  auto& s = *impl_;
  s.factorized = false;
  if (!s.same_pattern(matrix)) s.analyse(matrix);
  s.numeric(matrix);
  s.factorized = true;
  ++factorizations_;
}

Eigen::VectorXd CondensedLu::solve(const Eigen::VectorXd& rhs, bool transposed) const {
  if (!impl_->factorized) throw InvalidArgument("solve called before factorize");
  if (rhs.size() != impl_->n) throw InvalidArgument("rhs size mismatch in LU solve");
  return impl_->solve(rhs, transposed);
}

namespace {

Eigen::VectorXd residual(const SparseMatrix& m, const Eigen::VectorXd& x, const Eigen::VectorXd& rhs,
                         bool transposed) {
  return transposed ? Eigen::VectorXd(rhs - m.transpose() * x) : Eigen::VectorXd(rhs - m * x);
}

}  // namespace

Eigen::VectorXd CondensedLu::solve(const SparseMatrix& matrix, const Eigen::VectorXd& rhs,
                                   bool transposed) {
  factorize(matrix);
  Eigen::VectorXd x = solve(rhs, transposed);
  // Results feed finite differences; polish well below the acceptance bound.
  const double target = 1e-14 * (1.0 + rhs.norm());
  for (int sweep = 0; sweep < 3; ++sweep) {
    const Eigen::VectorXd r = residual(matrix, x, rhs, transposed);
    if (r.norm() <= target) break;
    x += solve(r, transposed);
  }
  check_residual(matrix, x, rhs, transposed);
  return x;
}

Eigen::VectorXd solve_linear(const SaddleSystem& system) {
  CondensedLu solver;
  return solver.solve(system.matrix, system.rhs);
}

}  // namespace flowtopo
