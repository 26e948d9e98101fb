#pragma once

#include <Eigen/Dense>

#include <set>
#include <vector>

#include "ff/errors.hpp"

namespace ff {

using AgentId = int;

/// Element of SO(d): orthonormal columns, determinant +1. Defines the axes
/// along which per-axis scaling acts.
class RotationMatrix {
public:
    explicit RotationMatrix(Eigen::MatrixXd entries);

    static RotationMatrix identity(int d);

    /// 2-D rotation with rows [cos a, sin a; -sin a, cos a].
    static RotationMatrix rotation2d(double angle_rad);

    int dimension() const { return static_cast<int>(entries_.rows()); }
    const Eigen::MatrixXd& entries() const { return entries_; }

private:
    Eigen::MatrixXd entries_;
};

/// Per-axis scaling ratios s plus common translation tau. No sign restriction
/// on s; zero and negative ratios are legal maneuvers.
struct ManeuverParams {
    Eigen::VectorXd scale;
    Eigen::VectorXd translation;
};

/// Reference shape of the team: ordered agents, stacked nominal positions,
/// the scaling axes R, and the leader subset.
class NominalFormation {
public:
    NominalFormation(int d, std::vector<AgentId> agent_ids, Eigen::VectorXd ptilde,
                     RotationMatrix rotation, std::set<AgentId> leaders);

    int dimension() const { return d_; }
    int agentCount() const { return static_cast<int>(agent_ids_.size()); }
    const std::vector<AgentId>& agentIds() const { return agent_ids_; }
    const Eigen::VectorXd& stackedNominal() const { return ptilde_; }
    const RotationMatrix& rotation() const { return rotation_; }
    const std::set<AgentId>& leaders() const { return leaders_; }

    bool isLeader(AgentId id) const { return leaders_.count(id) > 0; }
    bool hasAgent(AgentId id) const;
    int indexOf(AgentId id) const;  // throws UnknownAgentError
    Eigen::VectorXd nominalOf(AgentId id) const;

    /// Copy with one more (follower) agent appended.
    NominalFormation withAgent(AgentId id, const Eigen::VectorXd& nominal) const;

private:
    int d_;
    std::vector<AgentId> agent_ids_;
    Eigen::VectorXd ptilde_;
    RotationMatrix rotation_;
    std::set<AgentId> leaders_;
    std::vector<std::pair<AgentId, int>> index_;  // sorted id -> position
};

/// Orthonormal basis of the space of configurations reachable by per-axis
/// scaling plus translation. rank <= 2d; less for degenerate shapes.
struct ShapeSpaceBasis {
    Eigen::MatrixXd columns;  // dn x rank
    int rank = 0;
};

/// S(s, R) = R diag(s) R^T. Symmetric; eigenvalues are the entries of s.
Eigen::MatrixXd scaling_transform(const Eigen::VectorXd& s, const RotationMatrix& R);

/// Per-agent map p_i = S(s, R) ptilde_i + tau over the whole stacked vector.
Eigen::VectorXd apply_maneuver(const NominalFormation& F, const ManeuverParams& m);

/// Basis from the 2d generators: d translations and d per-axis scalings of
/// the nominal shape. Rank decided by singular values <= 1e-8 * sigma_max.
ShapeSpaceBasis shape_space_basis(const Eigen::VectorXd& ptilde, const RotationMatrix& R);
ShapeSpaceBasis shape_space_basis(const NominalFormation& F);

/// || p - B B^T p ||; zero exactly when p lies in the spanned subspace.
double distance_to_shape_space(const Eigen::VectorXd& p, const ShapeSpaceBasis& B);

}  // namespace ff
