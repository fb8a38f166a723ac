#include "sra/linalg.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sra {
namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_symmetric(const Eigen::MatrixXd& M, const char* what) {
    if (M.rows() != M.cols()) throw std::invalid_argument(std::string(what) + ": matrix is not square");
    if (!M.allFinite()) throw std::runtime_error(std::string(what) + ": matrix has non-finite entries");
    const Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << what << ": eigendecomposition did not converge (n=" << M.rows()
            << ", max|entry|=" << M.cwiseAbs().maxCoeff() << ")";
        throw std::runtime_error(msg.str());
    }
    return es;
}

Eigen::VectorXd clamp_spectrum(const Eigen::VectorXd& ev, const char* what) {
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    const double tol = 1e-10 * scale;
    Eigen::VectorXd out = ev;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) < -tol) {
            std::ostringstream msg;
            msg << what << ": matrix is not positive semi-definite (eigenvalue " << ev(i) << ")";
            throw std::runtime_error(msg.str());
        }
        out(i) = std::max(0.0, ev(i));
    }
    return out;
}

}  // namespace

Eigen::MatrixXd to_eigen(const Tensor& t) {
    if (t.rank() != 2) throw std::invalid_argument("to_eigen expects a rank-2 tensor, got " + shape_string(t.shape()));
    return as_matrix(t, t.dim(1));
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
    Tensor out({m.rows(), m.cols()});
    as_matrix(out, m.cols()) = m;
    return out;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& X) {
    if (X.rows() < 2) throw std::invalid_argument("covariance needs at least two samples");
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd C = X.rowwise() - mean;
    return (C.transpose() * C) / static_cast<double>(X.rows() - 1);
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& M) {
    const auto es = eigen_symmetric(M, "sqrtm");
    const Eigen::VectorXd root = clamp_spectrum(es.eigenvalues(), "sqrtm").cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd sqrtm_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const auto es = eigen_symmetric(A, "sqrtm_product");
    const Eigen::VectorXd ev = es.eigenvalues();
    if (ev.minCoeff() <= 0.0) throw std::runtime_error("sqrtm_product: first matrix is not positive definite");
    const Eigen::MatrixXd& V = es.eigenvectors();
    const Eigen::MatrixXd a_half = V * ev.cwiseSqrt().asDiagonal() * V.transpose();
    const Eigen::MatrixXd a_inv_half = V * ev.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
    return a_half * sqrtm_psd(a_half * B * a_half) * a_inv_half;
}

}  // namespace sra
