#include "bgm/gaussian.hpp"

#include <cmath>
#include <string>

namespace bgm {

namespace {

constexpr double kMaxCondition = 1e12;

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const std::size_t> rows,
                       std::span<const std::size_t> cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          m(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
  return out;
}

Vector gather(const Vector& v, std::span<const std::size_t> idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(idx[i])];
  return out;
}

}  // namespace

ConditionalGaussian conditional_gaussian_general(const Vector& mu, const Eigen::MatrixXd& sigma,
                                                 const Vector& x_a,
                                                 std::span<const std::size_t> a_idx,
                                                 std::span<const std::size_t> b_idx) {
  const auto p = static_cast<std::size_t>(mu.size());
  if (static_cast<std::size_t>(sigma.rows()) != p || static_cast<std::size_t>(sigma.cols()) != p)
    throw ConfigError("conditional_gaussian_general: covariance must be p x p");
  if (static_cast<std::size_t>(x_a.size()) != a_idx.size())
    throw ConfigError("conditional_gaussian_general: x_a length does not match the A set");
  for (std::size_t i : a_idx)
    if (i >= p) throw ConfigError("conditional_gaussian_general: A index out of range");
  for (std::size_t i : b_idx)
    if (i >= p) throw ConfigError("conditional_gaussian_general: B index out of range");

  const Eigen::MatrixXd s_aa = gather(sigma, a_idx, a_idx);
  const Eigen::MatrixXd s_ba = gather(sigma, b_idx, a_idx);
  const Eigen::MatrixXd s_bb = gather(sigma, b_idx, b_idx);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s_aa, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxCondition)
    throw NumericError("conditional_gaussian_general: Sigma_AA is singular or ill-conditioned "
                       "(eigenvalue range [" + std::to_string(lo) + ", " + std::to_string(hi) + "])");

  const Eigen::LLT<Eigen::MatrixXd> llt(s_aa);
  const Vector resid = x_a - gather(mu, a_idx);
  ConditionalGaussian out;
  out.mean = gather(mu, b_idx) + s_ba * llt.solve(resid);
  out.cov = s_bb - s_ba * llt.solve(s_ba.transpose());
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

double gaussian_log_density(const Vector& x, const Vector& mu, const Eigen::MatrixXd& sigma) {
  const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericError("gaussian_log_density: covariance is not SPD");
  const Vector r = x - mu;
  const Vector w = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * 3.14159265358979323846) + logdet +
                 w.squaredNorm());
}

}  // namespace bgm
