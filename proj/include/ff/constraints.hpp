#pragma once

#include <Eigen/Dense>

#include "ff/geometry.hpp"

namespace ff {

/// Ordered agent triple of one constraint; k is the dependent (or joining)
/// agent, i and j are the anchors.
struct Triplet {
    AgentId i = 0;
    AgentId j = 0;
    AgentId k = 0;
};

/// Matrix-valued weights of a single triplet constraint.
/// w_jk = diag(R^T (ptilde_j - ptilde_k)) R^T, w_ki likewise, w_kk = w_jk + w_ki.
struct TripletWeights {
    Eigen::MatrixXd w_jk;
    Eigen::MatrixXd w_ki;
    Eigen::MatrixXd w_kk;
};

/// R^T (a - b): the offset expressed in the scaling axes.
Eigen::VectorXd rotated_offset(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                               const RotationMatrix& R);

/// Default genericity tolerance, relative to the anchor offset magnitude.
double genericity_eps(const Eigen::VectorXd& rotated_anchor_offset);

/// True iff every component of R^T (j_pos - i_pos) exceeds eps in magnitude,
/// i.e. the anchor pair admits a well-posed constraint along every axis.
bool genericity_check(const Eigen::VectorXd& i_pos, const Eigen::VectorXd& j_pos,
                      const RotationMatrix& R, double eps);
bool genericity_check(const Eigen::VectorXd& i_pos, const Eigen::VectorXd& j_pos,
                      const RotationMatrix& R);

/// Weights from raw nominal positions (p_k is the dependent agent).
TripletWeights constraint_weights_at(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_j,
                                     const Eigen::VectorXd& p_k, const RotationMatrix& R);

TripletWeights constraint_weights(const Triplet& t, const NominalFormation& F);

/// w_jk (p_i - p_k) + w_ki (p_j - p_k). Vanishes on the whole shape space of
/// the nominal configuration the weights were built from.
Eigen::VectorXd constraint_residual(const TripletWeights& w, const Eigen::VectorXd& p_i,
                                    const Eigen::VectorXd& p_j, const Eigen::VectorXd& p_k);

/// Dependent-agent position w_kk^{-1} (w_jk p_i + w_ki p_j).
/// Throws SingularWeightError when the smallest singular value of w_kk is
/// at or below eps (default: 1e-8 * sigma_max, the rank cutoff).
Eigen::VectorXd resolve_dependent(const TripletWeights& w, const Eigen::VectorXd& p_i,
                                  const Eigen::VectorXd& p_j, double eps = -1.0);

}  // namespace ff
