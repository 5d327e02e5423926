#include "platoon/lqr.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace platoon {

double spectral_radius(const Eigen::MatrixXd& M) {
  const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues();
  double rho = 0.0;
  for (int i = 0; i < eig.size(); ++i) rho = std::max(rho, std::abs(eig[i]));
  return rho;
}

DareSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R, double tol,
                        int max_iter) {
  const auto n = A.rows();
  const auto m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m ||
      R.cols() != m) {
    throw SimError("solve_dare: inconsistent dimensions");
  }
  if (R.determinant() <= 0.0) throw SimError("solve_dare: R must be positive definite");

  Eigen::MatrixXd P = Q;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Eigen::MatrixXd BtPB = R + B.transpose() * P * B;
    const Eigen::MatrixXd next =
        A.transpose() * P * A -
        A.transpose() * P * B * BtPB.inverse() * B.transpose() * P * A + Q;
    // scale-aware residual: large P plateaus at its floating-point resolution
    const double residual = (next - P).norm() / std::max(1.0, P.norm());
    P = next;
    if (residual < tol) break;
  }
  if (it == max_iter) throw SimError("solve_dare: no convergence within max_iter");

  DareSolution sol;
  sol.P = P;
  sol.K = (R + B.transpose() * P * B).inverse() * (B.transpose() * P * A);
  sol.iterations = it + 1;

  if (spectral_radius(A - B * sol.K) >= 1.0)
    throw SimError("solve_dare: closed loop not stable (pair may not be stabilizable)");
  return sol;
}

LqrDesign LqrDesign::make(const LqrConfig& cfg, double dt) {
  LqrDesign d;
  d.dt = dt;
  d.A << 1.0, dt, 0.0, 1.0;
  d.B << 0.5 * dt * dt, dt;
  d.Q = Eigen::Matrix2d::Zero();
  d.Q(0, 0) = cfg.q_spacing;
  d.Q(1, 1) = cfg.q_speed;
  d.R = cfg.r_control;

  Eigen::MatrixXd Rm(1, 1);
  Rm(0, 0) = cfg.r_control;
  const DareSolution sol = solve_dare(d.A, d.B, d.Q, Rm);
  d.K = sol.K.row(0);
  return d;
}

double lqr_gap_command(const LqrDesign& design, double spacing_error, double speed_error) {
  // plant uses u as gap-closing input (B > 0); physical follower accel is +Kx
  return design.K(0) * spacing_error + design.K(1) * speed_error;
}

std::vector<double> lqr_follow(const std::vector<VehicleState>& platoon, const LqrDesign& design,
                               const LqrConfig& cfg, const ActuatorLimits& limits) {
  if (platoon.empty()) throw SimError("lqr_follow: empty platoon");
  const int lane = platoon.front().lane;
  for (size_t k = 1; k < platoon.size(); ++k) {
    if (platoon[k].lane != lane) throw SimError("lqr_follow: platoon is not single-lane");
    if (platoon[k].s > platoon[k - 1].s) throw SimError("lqr_follow: platoon not ordered front to back");
  }

  std::vector<double> cmds(platoon.size(), 0.0);
  cmds[0] = std::clamp(0.6 * (cfg.cruise_speed - platoon[0].v), limits.accel_min, limits.accel_max);
  for (size_t k = 1; k < platoon.size(); ++k) {
    const double e_s = bumper_gap(platoon[k - 1], platoon[k]) - cfg.h_target;
    const double e_v = platoon[k - 1].v - platoon[k].v;
    cmds[k] = std::clamp(lqr_gap_command(design, e_s, e_v), limits.accel_min, limits.accel_max);
  }
  return cmds;
}

}  // namespace platoon
