#include "ff/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace ff {

namespace {

constexpr double kRotationTol = 1e-12;
constexpr double kRankRelTol = 1e-8;

}  // namespace

RotationMatrix::RotationMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() == 0) {
        throw DimensionError("rotation matrix must be square and non-empty");
    }
    const auto d = entries_.rows();
    const double ortho_err =
        (entries_.transpose() * entries_ - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff();
    if (ortho_err > kRotationTol) {
        throw Error("rotation matrix violates R^T R = I (error " + std::to_string(ortho_err) + ")");
    }
    const double det_err = std::abs(entries_.determinant() - 1.0);
    if (det_err > kRotationTol) {
        throw Error("rotation matrix violates det(R) = 1 (error " + std::to_string(det_err) + ")");
    }
}

RotationMatrix RotationMatrix::identity(int d) {
    return RotationMatrix(Eigen::MatrixXd::Identity(d, d));
}

RotationMatrix RotationMatrix::rotation2d(double angle_rad) {
    const double c = std::cos(angle_rad);
    const double s = std::sin(angle_rad);
    Eigen::MatrixXd m(2, 2);
    m << c, s, -s, c;
    return RotationMatrix(m);
}

NominalFormation::NominalFormation(int d, std::vector<AgentId> agent_ids, Eigen::VectorXd ptilde,
                                   RotationMatrix rotation, std::set<AgentId> leaders)
    : d_(d),
      agent_ids_(std::move(agent_ids)),
      ptilde_(std::move(ptilde)),
      rotation_(std::move(rotation)),
      leaders_(std::move(leaders)) {
    if (d_ <= 0) throw DimensionError("dimension must be positive");
    if (rotation_.dimension() != d_) throw DimensionError("rotation dimension mismatch");
    const auto n = agent_ids_.size();
    if (n == 0) throw Error("formation needs at least one agent");
    if (ptilde_.size() != static_cast<Eigen::Index>(d_ * n)) {
        throw DimensionError("stacked nominal positions must have length d*n");
    }
    if (!ptilde_.allFinite()) throw Error("nominal positions must be finite");
    index_.reserve(n);
    for (std::size_t k = 0; k < n; ++k) index_.emplace_back(agent_ids_[k], static_cast<int>(k));
    std::sort(index_.begin(), index_.end());
    for (std::size_t k = 1; k < n; ++k) {
        if (index_[k].first == index_[k - 1].first) {
            throw DuplicateAgentError("duplicate agent id " + std::to_string(index_[k].first));
        }
    }
    if (leaders_.empty()) throw Error("leader set must be non-empty");
    for (AgentId id : leaders_) {
        if (!hasAgent(id)) throw UnknownAgentError("leader id " + std::to_string(id) + " unknown");
    }
    // Followers may be absent only in the two-agent seed stage of an
    // incremental build; operational scenarios require at least one.
}

bool NominalFormation::hasAgent(AgentId id) const {
    auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(id, 0));
    return it != index_.end() && it->first == id;
}

int NominalFormation::indexOf(AgentId id) const {
    auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(id, 0));
    if (it == index_.end() || it->first != id) {
        throw UnknownAgentError("unknown agent id " + std::to_string(id));
    }
    return it->second;
}

Eigen::VectorXd NominalFormation::nominalOf(AgentId id) const {
    return ptilde_.segment(static_cast<Eigen::Index>(d_) * indexOf(id), d_);
}

NominalFormation NominalFormation::withAgent(AgentId id, const Eigen::VectorXd& nominal) const {
    if (hasAgent(id)) throw DuplicateAgentError("agent id " + std::to_string(id) + " already present");
    if (nominal.size() != d_) throw DimensionError("nominal position must have length d");
    std::vector<AgentId> ids = agent_ids_;
    ids.push_back(id);
    Eigen::VectorXd pt(ptilde_.size() + d_);
    pt << ptilde_, nominal;
    return NominalFormation(d_, std::move(ids), std::move(pt), rotation_, leaders_);
}

Eigen::MatrixXd scaling_transform(const Eigen::VectorXd& s, const RotationMatrix& R) {
    if (s.size() != R.dimension()) throw DimensionError("scaling vector / rotation dimension mismatch");
    return R.entries() * s.asDiagonal() * R.entries().transpose();
}

Eigen::VectorXd apply_maneuver(const NominalFormation& F, const ManeuverParams& m) {
    const int d = F.dimension();
    if (m.scale.size() != d || m.translation.size() != d) {
        throw DimensionError("maneuver parameters must have length d");
    }
    if (!m.scale.allFinite() || !m.translation.allFinite()) {
        throw Error("maneuver parameters must be finite");
    }
    const Eigen::MatrixXd S = scaling_transform(m.scale, F.rotation());
    const Eigen::VectorXd& pt = F.stackedNominal();
    Eigen::VectorXd out(pt.size());
    for (int k = 0; k < F.agentCount(); ++k) {
        out.segment(static_cast<Eigen::Index>(d) * k, d) =
            S * pt.segment(static_cast<Eigen::Index>(d) * k, d) + m.translation;
    }
    return out;
}

ShapeSpaceBasis shape_space_basis(const Eigen::VectorXd& ptilde, const RotationMatrix& R) {
    const int d = R.dimension();
    if (ptilde.size() % d != 0 || ptilde.size() == 0) {
        throw DimensionError("stacked positions must have length d*n");
    }
    const int n = static_cast<int>(ptilde.size() / d);

    // Generators: translations 1_n (x) e_l and per-axis scalings
    // (I_n (x) R E_l R^T) ptilde, with E_l = e_l e_l^T.
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(ptilde.size(), 2 * d);
    for (int l = 0; l < d; ++l) {
        for (int k = 0; k < n; ++k) G(static_cast<Eigen::Index>(d) * k + l, l) = 1.0;
        const Eigen::VectorXd axis = R.entries().col(l);
        for (int k = 0; k < n; ++k) {
            const auto seg = ptilde.segment(static_cast<Eigen::Index>(d) * k, d);
            G.block(static_cast<Eigen::Index>(d) * k, d + l, d, 1) = axis.dot(seg) * axis;
        }
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeThinU);
    const auto& sigma = svd.singularValues();
    const double cutoff = kRankRelTol * sigma(0);
    int rank = 0;
    while (rank < sigma.size() && sigma(rank) > cutoff) ++rank;

    ShapeSpaceBasis basis;
    basis.rank = rank;
    basis.columns = svd.matrixU().leftCols(rank);
    return basis;
}

ShapeSpaceBasis shape_space_basis(const NominalFormation& F) {
    return shape_space_basis(F.stackedNominal(), F.rotation());
}

double distance_to_shape_space(const Eigen::VectorXd& p, const ShapeSpaceBasis& B) {
    if (p.size() != B.columns.rows()) throw DimensionError("position / basis dimension mismatch");
    return (p - B.columns * (B.columns.transpose() * p)).norm();
}

}  // namespace ff
