#pragma once

#include <vesselmode/core.hpp>

#include <Eigen/SparseLU>

namespace vesselmode {

struct SolveDiagnostics {
  double residual = 0.0;  // ‖b − Ax‖ / ‖b‖ after refinement
  int refinement_steps = 0;
};

// Sparse LU with a reusable symbolic analysis and iterative refinement.
// The symbolic pattern survives refactorization as long as the sparsity
// structure of the matrix does not change.
template <class Scalar>
class DirectSolver {
 public:
  using Mat = Eigen::SparseMatrix<Scalar>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  void factorize(const Mat& A) {
    if (!analyzed_ || A.rows() != rows_ || A.nonZeros() != nnz_) {
      lu_.analyzePattern(A);
      analyzed_ = true;
      rows_ = A.rows();
      nnz_ = A.nonZeros();
    }
    lu_.factorize(A);
    if (lu_.info() != Eigen::Success) throw Error(ErrorKind::mesh, "sparse factorization failed: " + lu_.lastErrorMessage());
    A_ = &A;
  }

  bool ok() const { return analyzed_ && lu_.info() == Eigen::Success; }

  Vec solve(const Vec& b, SolveDiagnostics* diag = nullptr, double tol = 1e-13, int max_steps = 3) const {
    Vec x = lu_.solve(b);
    const double nb = b.norm();
    int steps = 0;
    double rel = 0.0;
    if (nb > 0) {
      Vec r = b - (*A_) * x;
      rel = r.norm() / nb;
      while (rel > tol && steps < max_steps) {
        x += lu_.solve(r);
        r = b - (*A_) * x;
        const double nrel = r.norm() / nb;
        ++steps;
        if (nrel >= rel) {
          rel = nrel;
          break;
        }
        rel = nrel;
      }
    }
    if (diag) *diag = {rel, steps};
    return x;
  }

  // Solves Aᴴ x = b.
  Vec solve_adjoint(const Vec& b) const { return lu_.adjoint().solve(b); }

  // Plain solves without refinement (inner loops of inverse iteration).
  Vec raw_solve(const Vec& b) const { return lu_.solve(b); }

  const Mat& matrix() const { return *A_; }

 private:
  mutable Eigen::SparseLU<Mat, Eigen::COLAMDOrdering<int>> lu_;  // adjoint() is non-const in Eigen
  const Mat* A_ = nullptr;
  bool analyzed_ = false;
  Eigen::Index rows_ = 0, nnz_ = 0;
};

}  // namespace vesselmode
