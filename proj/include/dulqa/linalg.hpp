#pragma once

#include <Eigen/Dense>

namespace dulqa {

// Reductions used in energies and costs. All accumulate in ascending index
// order so that results are reproducible bit-for-bit: Eigen's own dot/sum
// kernels may reassociate, these loops never do. The column-AXPY matvec keeps
// ascending-j accumulation per output element while still vectorizing.

inline double dot(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double sum(const Eigen::ArrayXd& a) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a[i];
  return acc;
}

// r = J * v for symmetric column-major J; r_i accumulates over j ascending.
inline void matvec(const Eigen::MatrixXd& J, const Eigen::ArrayXd& v,
                   Eigen::ArrayXd& r) {
  r.setZero(J.rows());
  for (Eigen::Index j = 0; j < J.cols(); ++j) {
    const double vj = v[j];
    if (vj != 0.0) r += J.col(j).array() * vj;
  }
}

inline Eigen::ArrayXd matvec(const Eigen::MatrixXd& J, const Eigen::ArrayXd& v) {
  Eigen::ArrayXd r;
  matvec(J, v, r);
  return r;
}

}  // namespace dulqa
