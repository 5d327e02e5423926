#pragma once

#include <Eigen/Dense>
#include <vector>

#include "platoon/types.hpp"

namespace platoon {

struct DareSolution {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;  // u = K x stabilizes x' = A x - B u (sign handled by caller)
  int iterations = 0;
};

// Fixed-point iteration for the discrete algebraic Riccati equation:
//   P = A'PA - A'PB (R + B'PB)^-1 B'PA + Q,   K = (R + B'PB)^-1 B'PA.
// Throws on dimension mismatch, non-convergence, or an unstable closed loop.
DareSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                        double tol = 1e-12, int max_iter = 100000);

double spectral_radius(const Eigen::MatrixXd& M);

struct LqrConfig {
  double q_spacing = 1.0;
  double q_speed = 0.5;
  double r_control = 1.0;
  double h_target = 8.0;      // desired bumper-to-bumper gap, m
  double cruise_speed = 28.0;  // lead vehicle speed setpoint
};

// Gap-regulation design over the spacing/relative-speed error state at the
// control rate; gain computed once and cached by the caller.
struct LqrDesign {
  Eigen::Matrix2d A;
  Eigen::Vector2d B;
  Eigen::Matrix2d Q;
  double R = 1.0;
  Eigen::RowVector2d K;
  double dt = kDt;

  static LqrDesign make(const LqrConfig& cfg, double dt = kDt);
};

// Acceleration command for one follower: u = K [e_s, e_v]'.
double lqr_gap_command(const LqrDesign& design, double spacing_error, double speed_error);

// Per-platoon-vehicle acceleration commands, ordered like `platoon` (which must
// be sorted front to back and single-lane). The leader gets a cruise-speed
// proportional command; followers regulate the gap to their predecessor.
std::vector<double> lqr_follow(const std::vector<VehicleState>& platoon, const LqrDesign& design,
                               const LqrConfig& cfg, const ActuatorLimits& limits);

}  // namespace platoon
