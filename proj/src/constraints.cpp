#include "ff/constraints.hpp"

#include <cmath>

namespace ff {

Eigen::VectorXd rotated_offset(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                               const RotationMatrix& R) {
    if (a.size() != b.size() || a.size() != R.dimension()) {
        throw DimensionError("rotated_offset: dimension mismatch");
    }
    return R.entries().transpose() * (a - b);
}

double genericity_eps(const Eigen::VectorXd& rotated_anchor_offset) {
    return 1e-9 * (1.0 + rotated_anchor_offset.norm());
}

bool genericity_check(const Eigen::VectorXd& i_pos, const Eigen::VectorXd& j_pos,
                      const RotationMatrix& R, double eps) {
    if (eps <= 0.0) throw Error("genericity_check: eps must be positive");
    const Eigen::VectorXd off = rotated_offset(j_pos, i_pos, R);
    return (off.cwiseAbs().array() > eps).all();
}

bool genericity_check(const Eigen::VectorXd& i_pos, const Eigen::VectorXd& j_pos,
                      const RotationMatrix& R) {
    const Eigen::VectorXd off = rotated_offset(j_pos, i_pos, R);
    return (off.cwiseAbs().array() > genericity_eps(off)).all();
}

TripletWeights constraint_weights_at(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_j,
                                     const Eigen::VectorXd& p_k, const RotationMatrix& R) {
    const Eigen::MatrixXd Rt = R.entries().transpose();
    TripletWeights w;
    w.w_jk = rotated_offset(p_j, p_k, R).asDiagonal() * Rt;
    w.w_ki = rotated_offset(p_k, p_i, R).asDiagonal() * Rt;
    w.w_kk = w.w_jk + w.w_ki;

    // Identity behind the rank condition: w_kk = diag(R^T (p_j - p_i)) R^T.
    const Eigen::MatrixXd direct = rotated_offset(p_j, p_i, R).asDiagonal() * Rt;
    const double scale = 1.0 + direct.cwiseAbs().maxCoeff();
    if ((w.w_kk - direct).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw Error("constraint_weights: w_kk identity violated beyond tolerance");
    }
    return w;
}

TripletWeights constraint_weights(const Triplet& t, const NominalFormation& F) {
    if (t.i == t.j || t.j == t.k || t.i == t.k) {
        throw Error("triplet agents must be pairwise distinct");
    }
    return constraint_weights_at(F.nominalOf(t.i), F.nominalOf(t.j), F.nominalOf(t.k),
                                 F.rotation());
}

Eigen::VectorXd constraint_residual(const TripletWeights& w, const Eigen::VectorXd& p_i,
                                    const Eigen::VectorXd& p_j, const Eigen::VectorXd& p_k) {
    return w.w_jk * (p_i - p_k) + w.w_ki * (p_j - p_k);
}

Eigen::VectorXd resolve_dependent(const TripletWeights& w, const Eigen::VectorXd& p_i,
                                  const Eigen::VectorXd& p_j, double eps) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w.w_kk, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    const double smallest = sigma(sigma.size() - 1);
    const double cutoff = eps >= 0.0 ? eps : 1e-8 * sigma(0);
    if (smallest <= cutoff) {
        throw SingularWeightError(
            "dependent agent underdetermined: smallest singular value " + std::to_string(smallest),
            smallest);
    }
    return svd.solve(w.w_jk * p_i + w.w_ki * p_j);
}

}  // namespace ff
