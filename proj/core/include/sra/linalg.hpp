#pragma once

#include <Eigen/Dense>

#include "sra/tensor.hpp"

namespace sra {

/// Copies a [rows, cols] tensor into a column-major Eigen matrix.
Eigen::MatrixXd to_eigen(const Tensor& t);
Tensor from_eigen(const Eigen::MatrixXd& m);

/// Unbiased sample covariance of the rows of X.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& X);

/// Principal square root of a symmetric positive semi-definite matrix.
/// Throws std::runtime_error if the eigensolver fails or the matrix has a
/// clearly negative eigenvalue.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& M);

/// A matrix S with S S = A B for symmetric positive definite A and
/// symmetric positive semi-definite B: A^{1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}.
Eigen::MatrixXd sqrtm_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace sra
