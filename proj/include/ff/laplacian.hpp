#pragma once

#include <Eigen/Dense>

#include <map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ff/constraints.hpp"
#include "ff/geometry.hpp"

namespace ff {

/// Strictly positive diagonal design matrix weighting one triplet constraint.
class DesignWeight {
public:
    explicit DesignWeight(Eigen::VectorXd diag_entries);
    static DesignWeight identity(int d);

    int dimension() const { return static_cast<int>(diag_.size()); }
    const Eigen::VectorXd& diagonal() const { return diag_; }

private:
    Eigen::VectorXd diag_;
};

/// Symmetric block matrix with d x d edge blocks and derived diagonal
/// blocks L_aa = -sum_b L_ab, so block rows sum to zero by construction.
/// Immutable value: builders return new instances.
class BlockLaplacian {
public:
    using EdgeKey = std::pair<AgentId, AgentId>;  // canonical: first < second
    using EdgeMap = std::map<EdgeKey, Eigen::MatrixXd>;

    /// Edgeless Laplacian (the zero matrix).
    BlockLaplacian(int d, std::vector<AgentId> agent_ids);
    BlockLaplacian(int d, std::vector<AgentId> agent_ids, EdgeMap edges);

    int dimension() const { return d_; }
    int agentCount() const { return static_cast<int>(agent_ids_.size()); }
    const std::vector<AgentId>& agentIds() const { return agent_ids_; }
    const EdgeMap& edges() const { return edges_; }

    bool hasAgent(AgentId id) const;
    bool hasEdge(AgentId a, AgentId b) const;
    std::vector<AgentId> neighborsOf(AgentId a) const;  // ascending id

    /// Off-diagonal block L_ab (zero when no edge); derived diagonal for a == b.
    Eigen::MatrixXd block(AgentId a, AgentId b) const;

    /// Dense dn x dn assembly in agent-id list order.
    Eigen::MatrixXd assemble() const;

    static EdgeKey canonicalKey(AgentId a, AgentId b);

private:
    int indexOf(AgentId id) const;

    int d_;
    std::vector<AgentId> agent_ids_;
    EdgeMap edges_;
};

/// One embedded constraint L^t = M^T D M with M = [w_jk, w_ki, -w_kk];
/// positive semi-definite of rank <= d, block order (i, j, k).
struct TripletStamp {
    Triplet triplet;
    Eigen::MatrixXd blocks;  // 3d x 3d

    Eigen::MatrixXd block(int row, int col) const;
};

TripletStamp triplet_stamp(const Triplet& t, const NominalFormation& F, const DesignWeight& D);

/// Same agents plus isolated newcomers (zero rows/columns appended).
BlockLaplacian pad(const BlockLaplacian& L, const std::vector<AgentId>& new_ids);

/// The three off-diagonal increments a join contributes; the diagonal
/// adjustments follow from the zero-row-sum convention.
struct JoinIncrements {
    Eigen::MatrixXd dL_ij;
    Eigen::MatrixXd dL_iv;
    Eigen::MatrixXd dL_jv;
};

/// Increment blocks for joining agent v against anchors i, j. All call sites
/// (centralized builder and per-agent protocol updates) share this routine so
/// their arithmetic agrees bit for bit.
JoinIncrements join_increments(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_j,
                               const Eigen::VectorXd& p_v, const RotationMatrix& R,
                               const DesignWeight& D);

struct EdgeDelta {
    AgentId a = 0;
    AgentId b = 0;
    Eigen::MatrixXd increment;  // added to L_ab
};

struct JoinResult {
    BlockLaplacian laplacian;
    NominalFormation formation;
    std::vector<EdgeDelta> deltas;  // {i,j}, {i,v}, {j,v}
};

/// Pad with v and add the triplet stamp of (i, j, v). Spectral properties are
/// preserved whenever the anchors pass the genericity check.
JoinResult join_update(const BlockLaplacian& L, const NominalFormation& F, AgentId v_id,
                       const Eigen::VectorXd& v_pos, AgentId i, AgentId j,
                       const DesignWeight& D);

struct SeedPair {
    AgentId a = 0;
    AgentId b = 0;
    Eigen::VectorXd a_pos;
    Eigen::VectorXd b_pos;
};

struct BuildStep {
    AgentId v_id = 0;
    Eigen::VectorXd v_pos;
    AgentId i = 0;
    AgentId j = 0;
    DesignWeight D;
};

/// Fold join_update over the steps starting from the two-agent zero
/// Laplacian (whose kernel is the full space, equal to the shape space of a
/// generic pair). Seed agents become the leaders.
std::pair<BlockLaplacian, NominalFormation> build_incremental(int d, const RotationMatrix& R,
                                                              const SeedPair& seed,
                                                              const std::vector<BuildStep>& steps);

struct SpectralTolerances {
    double psd = 1e-9;     // relative floor on the smallest eigenvalue
    double kernel = 1e-8;  // relative cutoff for kernel eigenvalues
    double angle = 1e-6;   // radians, principal-angle match
};

/// Outcome of checking positive semi-definiteness, kernel = shape space, and
/// positive definiteness of the follower submatrix.
struct SpectralReport {
    bool psd = false;
    double min_eig = 0.0;
    int kernel_dim = 0;
    bool kernel_matches_shape_space = false;
    double max_principal_angle = 0.0;
    double lff_min_eig = 0.0;
    int rank = 0;

    bool pass() const { return psd && kernel_matches_shape_space && lff_min_eig > 0.0; }
};

SpectralReport validate_spectral(const BlockLaplacian& L, const NominalFormation& F,
                                 const SpectralTolerances& tol = {});

/// Solve L_ff p_f = -L_fl p_l. Leader positions stacked in agent-id list
/// order of the leaders; result stacked over followers the same way.
Eigen::VectorXd follower_equilibrium(const BlockLaplacian& L, const NominalFormation& F,
                                     const Eigen::VectorXd& leader_positions);

/// Edge-difference product (L p)_a = sum_{b in N_a} L_ab (p_b - p_a).
Eigen::VectorXd laplacian_apply(const BlockLaplacian& L, const Eigen::VectorXd& p);

/// Structured-text form {d, agent_ids, edges:[{a,b,block}]}; doubles survive
/// a round trip bit-exactly.
nlohmann::ordered_json laplacian_to_json(const BlockLaplacian& L);
BlockLaplacian laplacian_from_json(const nlohmann::json& j);

}  // namespace ff
