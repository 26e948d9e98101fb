#include "ff/laplacian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ff {

namespace {

constexpr double kSymmetryTol = 1e-10;

Eigen::Index seg(int d, int k) { return static_cast<Eigen::Index>(d) * k; }

}  // namespace

DesignWeight::DesignWeight(Eigen::VectorXd diag_entries) : diag_(std::move(diag_entries)) {
    if (diag_.size() == 0) throw DimensionError("design weight must be non-empty");
    if (!(diag_.array() > 0.0).all()) {
        throw Error("design weight diagonal must be strictly positive");
    }
}

DesignWeight DesignWeight::identity(int d) {
    return DesignWeight(Eigen::VectorXd::Ones(d));
}

BlockLaplacian::BlockLaplacian(int d, std::vector<AgentId> agent_ids)
    : BlockLaplacian(d, std::move(agent_ids), EdgeMap{}) {}

BlockLaplacian::BlockLaplacian(int d, std::vector<AgentId> agent_ids, EdgeMap edges)
    : d_(d), agent_ids_(std::move(agent_ids)), edges_(std::move(edges)) {
    if (d_ <= 0) throw DimensionError("dimension must be positive");
    std::vector<AgentId> sorted = agent_ids_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw DuplicateAgentError("duplicate agent id in Laplacian");
    }
    for (const auto& [key, blk] : edges_) {
        if (key.first >= key.second) throw Error("edge key must be canonical (a < b)");
        if (!hasAgent(key.first) || !hasAgent(key.second)) {
            throw UnknownAgentError("edge references unknown agent id");
        }
        if (blk.rows() != d_ || blk.cols() != d_) {
            throw DimensionError("edge block must be d x d");
        }
        if (!blk.allFinite()) throw Error("edge block must be finite");
    }
    // Derived diagonals must keep the assembled matrix symmetric.
    for (AgentId a : agent_ids_) {
        const Eigen::MatrixXd diag = block(a, a);
        const double scale = 1.0 + diag.cwiseAbs().maxCoeff();
        if ((diag - diag.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
            throw Error("derived diagonal block of agent " + std::to_string(a) +
                        " is not symmetric");
        }
    }
}

BlockLaplacian::EdgeKey BlockLaplacian::canonicalKey(AgentId a, AgentId b) {
    return a < b ? EdgeKey{a, b} : EdgeKey{b, a};
}

bool BlockLaplacian::hasAgent(AgentId id) const {
    return std::find(agent_ids_.begin(), agent_ids_.end(), id) != agent_ids_.end();
}

int BlockLaplacian::indexOf(AgentId id) const {
    auto it = std::find(agent_ids_.begin(), agent_ids_.end(), id);
    if (it == agent_ids_.end()) throw UnknownAgentError("unknown agent id " + std::to_string(id));
    return static_cast<int>(it - agent_ids_.begin());
}

bool BlockLaplacian::hasEdge(AgentId a, AgentId b) const {
    return edges_.count(canonicalKey(a, b)) > 0;
}

std::vector<AgentId> BlockLaplacian::neighborsOf(AgentId a) const {
    std::vector<AgentId> out;
    for (const auto& [key, blk] : edges_) {
        if (key.first == a) out.push_back(key.second);
        else if (key.second == a) out.push_back(key.first);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Eigen::MatrixXd BlockLaplacian::block(AgentId a, AgentId b) const {
    if (!hasAgent(a) || !hasAgent(b)) {
        throw UnknownAgentError("block: unknown agent id");
    }
    if (a == b) {
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d_, d_);
        for (AgentId nb : neighborsOf(a)) sum += block(a, nb);
        return -sum;
    }
    auto it = edges_.find(canonicalKey(a, b));
    if (it == edges_.end()) return Eigen::MatrixXd::Zero(d_, d_);
    return a < b ? it->second : it->second.transpose();
}

Eigen::MatrixXd BlockLaplacian::assemble() const {
    const int n = agentCount();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(seg(d_, n), seg(d_, n));
    for (const auto& [key, blk] : edges_) {
        const int ia = indexOf(key.first);
        const int ib = indexOf(key.second);
        A.block(seg(d_, ia), seg(d_, ib), d_, d_) = blk;
        A.block(seg(d_, ib), seg(d_, ia), d_, d_) = blk.transpose();
    }
    for (int k = 0; k < n; ++k) {
        A.block(seg(d_, k), seg(d_, k), d_, d_) = block(agent_ids_[k], agent_ids_[k]);
    }
    return A;
}

Eigen::MatrixXd TripletStamp::block(int row, int col) const {
    const int d = static_cast<int>(blocks.rows()) / 3;
    return blocks.block(seg(d, row), seg(d, col), d, d);
}

TripletStamp triplet_stamp(const Triplet& t, const NominalFormation& F, const DesignWeight& D) {
    const int d = F.dimension();
    if (D.dimension() != d) throw DimensionError("design weight dimension mismatch");
    const Eigen::VectorXd pi = F.nominalOf(t.i);
    const Eigen::VectorXd pj = F.nominalOf(t.j);
    if (!genericity_check(pi, pj, F.rotation())) {
        const Eigen::VectorXd off = rotated_offset(pj, pi, F.rotation());
        throw SingularWeightError("anchor pair (" + std::to_string(t.i) + "," +
                                      std::to_string(t.j) + ") fails the genericity condition",
                                  off.cwiseAbs().minCoeff());
    }
    const TripletWeights w = constraint_weights(t, F);
    Eigen::MatrixXd M(d, 3 * d);
    M << w.w_jk, w.w_ki, -w.w_kk;
    TripletStamp stamp;
    stamp.triplet = t;
    stamp.blocks = M.transpose() * D.diagonal().asDiagonal() * M;
    return stamp;
}

BlockLaplacian pad(const BlockLaplacian& L, const std::vector<AgentId>& new_ids) {
    std::vector<AgentId> ids = L.agentIds();
    for (AgentId id : new_ids) {
        if (L.hasAgent(id) ||
            std::count(new_ids.begin(), new_ids.end(), id) > 1) {
            throw DuplicateAgentError("pad: agent id " + std::to_string(id) + " already present");
        }
        ids.push_back(id);
    }
    return BlockLaplacian(L.dimension(), std::move(ids), L.edges());
}

JoinIncrements join_increments(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_j,
                               const Eigen::VectorXd& p_v, const RotationMatrix& R,
                               const DesignWeight& D) {
    // Triplet (i, j, v) with v dependent: w_jk = W_jv, w_ki = W_vi, w_kk = W_vv.
    const TripletWeights w = constraint_weights_at(p_i, p_j, p_v, R);
    const auto Dd = D.diagonal().asDiagonal();
    JoinIncrements inc;
    inc.dL_ij = w.w_jk.transpose() * Dd * w.w_ki;
    inc.dL_iv = -(w.w_jk.transpose() * Dd * w.w_kk);
    inc.dL_jv = -(w.w_ki.transpose() * Dd * w.w_kk);
    return inc;
}

JoinResult join_update(const BlockLaplacian& L, const NominalFormation& F, AgentId v_id,
                       const Eigen::VectorXd& v_pos, AgentId i, AgentId j,
                       const DesignWeight& D) {
    if (!L.hasAgent(i) || !F.hasAgent(i) || !L.hasAgent(j) || !F.hasAgent(j)) {
        throw UnknownAgentError("join_update: unknown anchor id");
    }
    if (i == j) throw Error("join_update: anchors must be distinct");
    if (L.hasAgent(v_id)) {
        throw DuplicateAgentError("join_update: agent id " + std::to_string(v_id) +
                                  " already present");
    }
    if (v_pos.size() != F.dimension()) throw DimensionError("join_update: position length != d");

    const Eigen::VectorXd pi = F.nominalOf(i);
    const Eigen::VectorXd pj = F.nominalOf(j);
    if (!genericity_check(pi, pj, F.rotation())) {
        const Eigen::VectorXd off = rotated_offset(pj, pi, F.rotation());
        throw SingularWeightError("join_update: anchor pair (" + std::to_string(i) + "," +
                                      std::to_string(j) + ") fails the genericity condition",
                                  off.cwiseAbs().minCoeff());
    }

    const JoinIncrements inc = join_increments(pi, pj, v_pos, F.rotation(), D);

    BlockLaplacian::EdgeMap edges = L.edges();
    auto add = [&](AgentId a, AgentId b, const Eigen::MatrixXd& delta) {
        const auto key = BlockLaplacian::canonicalKey(a, b);
        const Eigen::MatrixXd oriented = (a < b) ? delta : Eigen::MatrixXd(delta.transpose());
        auto it = edges.find(key);
        if (it == edges.end()) edges.emplace(key, oriented);
        else it->second += oriented;
    };
    add(i, j, inc.dL_ij);
    add(i, v_id, inc.dL_iv);
    add(j, v_id, inc.dL_jv);

    std::vector<AgentId> ids = L.agentIds();
    ids.push_back(v_id);

    JoinResult out{BlockLaplacian(L.dimension(), std::move(ids), std::move(edges)),
                   F.withAgent(v_id, v_pos),
                   {}};
    out.deltas = {{i, j, inc.dL_ij}, {i, v_id, inc.dL_iv}, {j, v_id, inc.dL_jv}};
    return out;
}

std::pair<BlockLaplacian, NominalFormation> build_incremental(int d, const RotationMatrix& R,
                                                              const SeedPair& seed,
                                                              const std::vector<BuildStep>& steps) {
    if (!genericity_check(seed.a_pos, seed.b_pos, R)) {
        const Eigen::VectorXd off = rotated_offset(seed.b_pos, seed.a_pos, R);
        throw SingularWeightError("seed pair fails the genericity condition",
                                  off.cwiseAbs().minCoeff());
    }
    Eigen::VectorXd pt(2 * d);
    pt << seed.a_pos, seed.b_pos;
    NominalFormation F(d, {seed.a, seed.b}, std::move(pt), R, {seed.a, seed.b});
    BlockLaplacian L(d, {seed.a, seed.b});

    int step_no = 0;
    for (const auto& s : steps) {
        ++step_no;
        const std::string ctx = "step " + std::to_string(step_no) + ": ";
        try {
            JoinResult r = join_update(L, F, s.v_id, s.v_pos, s.i, s.j, s.D);
            L = std::move(r.laplacian);
            F = std::move(r.formation);
        } catch (const SingularWeightError& e) {
            throw SingularWeightError(ctx + e.what(), e.smallestSingularValue());
        } catch (const DuplicateAgentError& e) {
            throw DuplicateAgentError(ctx + e.what());
        } catch (const UnknownAgentError& e) {
            throw UnknownAgentError(ctx + e.what());
        } catch (const Error& e) {
            throw Error(ctx + e.what());
        }
    }
    return {std::move(L), std::move(F)};
}

SpectralReport validate_spectral(const BlockLaplacian& L, const NominalFormation& F,
                                 const SpectralTolerances& tol) {
    if (L.dimension() != F.dimension() || L.agentIds() != F.agentIds()) {
        throw Error("validate_spectral: Laplacian and formation disagree on agents");
    }
    const int d = L.dimension();
    const Eigen::MatrixXd A = L.assemble();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double norm = lambda.cwiseAbs().maxCoeff();

    SpectralReport rep;
    rep.min_eig = lambda(0);
    rep.psd = rep.min_eig >= -tol.psd * norm;

    std::vector<int> kernel_cols;
    for (int k = 0; k < lambda.size(); ++k) {
        if (std::abs(lambda(k)) <= tol.kernel * norm) kernel_cols.push_back(k);
    }
    rep.kernel_dim = static_cast<int>(kernel_cols.size());
    rep.rank = static_cast<int>(lambda.size()) - rep.kernel_dim;

    const ShapeSpaceBasis basis = shape_space_basis(F);
    if (rep.kernel_dim == 0 || basis.rank == 0) {
        rep.max_principal_angle = (rep.kernel_dim == basis.rank) ? 0.0 : M_PI / 2.0;
    } else {
        Eigen::MatrixXd K(A.rows(), rep.kernel_dim);
        for (int c = 0; c < rep.kernel_dim; ++c) K.col(c) = eig.eigenvectors().col(kernel_cols[c]);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis.columns.transpose() * K);
        const auto& cosines = svd.singularValues();
        const double c = std::clamp(cosines(cosines.size() - 1), -1.0, 1.0);
        rep.max_principal_angle = std::acos(c);
    }
    rep.kernel_matches_shape_space =
        rep.kernel_dim == basis.rank && rep.max_principal_angle <= tol.angle;

    // Follower principal submatrix.
    std::vector<int> follower_rows;
    for (int k = 0; k < F.agentCount(); ++k) {
        if (!F.isLeader(F.agentIds()[k])) {
            for (int l = 0; l < d; ++l) follower_rows.push_back(d * k + l);
        }
    }
    if (follower_rows.empty()) {
        rep.lff_min_eig = std::numeric_limits<double>::infinity();
    } else {
        Eigen::MatrixXd Lff(follower_rows.size(), follower_rows.size());
        for (std::size_t r = 0; r < follower_rows.size(); ++r) {
            for (std::size_t c = 0; c < follower_rows.size(); ++c) {
                Lff(r, c) = A(follower_rows[r], follower_rows[c]);
            }
        }
        rep.lff_min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Lff).eigenvalues()(0);
    }
    return rep;
}

Eigen::VectorXd follower_equilibrium(const BlockLaplacian& L, const NominalFormation& F,
                                     const Eigen::VectorXd& leader_positions) {
    if (L.dimension() != F.dimension() || L.agentIds() != F.agentIds()) {
        throw Error("follower_equilibrium: Laplacian and formation disagree on agents");
    }
    const int d = L.dimension();
    std::vector<int> lead_rows, fol_rows;
    for (int k = 0; k < F.agentCount(); ++k) {
        auto& rows = F.isLeader(F.agentIds()[k]) ? lead_rows : fol_rows;
        for (int l = 0; l < d; ++l) rows.push_back(d * k + l);
    }
    if (leader_positions.size() != static_cast<Eigen::Index>(lead_rows.size())) {
        throw DimensionError("follower_equilibrium: leader position length mismatch");
    }
    if (fol_rows.empty()) return Eigen::VectorXd(0);

    const Eigen::MatrixXd A = L.assemble();
    Eigen::MatrixXd Lff(fol_rows.size(), fol_rows.size());
    Eigen::MatrixXd Lfl(fol_rows.size(), lead_rows.size());
    for (std::size_t r = 0; r < fol_rows.size(); ++r) {
        for (std::size_t c = 0; c < fol_rows.size(); ++c) Lff(r, c) = A(fol_rows[r], fol_rows[c]);
        for (std::size_t c = 0; c < lead_rows.size(); ++c) Lfl(r, c) = A(fol_rows[r], lead_rows[c]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Lff);
    if (eig.eigenvalues()(0) <= 0.0) {
        throw SingularFollowerBlockError("follower block is not positive definite (min eig " +
                                         std::to_string(eig.eigenvalues()(0)) + ")");
    }
    return Eigen::LLT<Eigen::MatrixXd>(Lff).solve(-(Lfl * leader_positions));
}

Eigen::VectorXd laplacian_apply(const BlockLaplacian& L, const Eigen::VectorXd& p) {
    const int d = L.dimension();
    const int n = L.agentCount();
    if (p.size() != seg(d, n)) throw DimensionError("laplacian_apply: dimension mismatch");

    std::map<AgentId, int> idx;
    for (int k = 0; k < n; ++k) idx[L.agentIds()[k]] = k;

    Eigen::VectorXd out = Eigen::VectorXd::Zero(p.size());
    for (const auto& [key, blk] : L.edges()) {
        const int ia = idx.at(key.first);
        const int ib = idx.at(key.second);
        const auto pa = p.segment(seg(d, ia), d);
        const auto pb = p.segment(seg(d, ib), d);
        out.segment(seg(d, ia), d) += blk * (pb - pa);
        out.segment(seg(d, ib), d) += blk.transpose() * (pa - pb);
    }
    return out;
}

nlohmann::ordered_json laplacian_to_json(const BlockLaplacian& L) {
    nlohmann::ordered_json j;
    j["d"] = L.dimension();
    j["agent_ids"] = L.agentIds();
    auto& edges = j["edges"] = nlohmann::ordered_json::array();
    for (const auto& [key, blk] : L.edges()) {
        nlohmann::ordered_json e;
        e["a"] = key.first;
        e["b"] = key.second;
        auto& rows = e["block"] = nlohmann::ordered_json::array();
        for (int r = 0; r < blk.rows(); ++r) {
            nlohmann::ordered_json row = nlohmann::ordered_json::array();
            for (int c = 0; c < blk.cols(); ++c) row.push_back(blk(r, c));
            rows.push_back(std::move(row));
        }
        edges.push_back(std::move(e));
    }
    return j;
}

BlockLaplacian laplacian_from_json(const nlohmann::json& j) {
    try {
        const int d = j.at("d").get<int>();
        const auto ids = j.at("agent_ids").get<std::vector<AgentId>>();
        BlockLaplacian::EdgeMap edges;
        for (const auto& e : j.at("edges")) {
            const AgentId a = e.at("a").get<AgentId>();
            const AgentId b = e.at("b").get<AgentId>();
            const auto& rows = e.at("block");
            Eigen::MatrixXd blk(d, d);
            if (static_cast<int>(rows.size()) != d) throw DimensionError("block row count != d");
            for (int r = 0; r < d; ++r) {
                if (static_cast<int>(rows[r].size()) != d) {
                    throw DimensionError("block column count != d");
                }
                for (int c = 0; c < d; ++c) blk(r, c) = rows[r][c].get<double>();
            }
            const auto key = BlockLaplacian::canonicalKey(a, b);
            if (edges.count(key)) throw Error("duplicate edge in document");
            edges.emplace(key, a < b ? blk : Eigen::MatrixXd(blk.transpose()));
        }
        return BlockLaplacian(d, ids, std::move(edges));
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("laplacian document malformed: ") + e.what());
    }
}

}  // namespace ff
