#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace tsdr::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

/// C(m,n) = A(m,k) * B(k,n), optionally accumulating into C.
inline void gemm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                    std::int64_t n, bool accumulate = false) {
  ConstMatMap ma(a, m, k), mb(b, k, n);
  MatMap mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma * mb;
  else
    mc.noalias() = ma * mb;
}

/// C(m,n) = A(m,k) * B(n,k)^T.
inline void gemm_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                    std::int64_t n, bool accumulate = false) {
  ConstMatMap ma(a, m, k), mb(b, n, k);
  MatMap mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma * mb.transpose();
  else
    mc.noalias() = ma * mb.transpose();
}

/// C(m,n) = A(k,m)^T * B(k,n).
inline void gemm_tn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                    std::int64_t n, bool accumulate = false) {
  ConstMatMap ma(a, k, m), mb(b, k, n);
  MatMap mc(c, m, n);
  if (accumulate)
    mc.noalias() += ma.transpose() * mb;
  else
    mc.noalias() = ma.transpose() * mb;
}

}  // namespace tsdr::nn
