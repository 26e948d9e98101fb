#include "ff/protocol.hpp"

#include <algorithm>
#include <sstream>

namespace ff {

namespace {

nlohmann::ordered_json vec_json(const Eigen::VectorXd& v) {
    auto j = nlohmann::ordered_json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) j.push_back(v(k));
    return j;
}

nlohmann::ordered_json mat_json(const Eigen::MatrixXd& m) {
    auto j = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = nlohmann::ordered_json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(std::move(row));
    }
    return j;
}

const AgentState& find_agent(const std::vector<AgentState>& world, AgentId id) {
    for (const auto& a : world) {
        if (a.id == id) return a;
    }
    throw UnknownAgentError("unknown agent id " + std::to_string(id));
}

}  // namespace

std::string to_string(Role r) { return r == Role::leader ? "leader" : "follower"; }

const char* variant_name(const Message& m) {
    switch (m.payload.index()) {
        case 0: return "join_request";
        case 1: return "candidate_info";
        case 2: return "pair_selection";
        case 3: return "block_delta";
        default: return "join_ack";
    }
}

std::uint64_t Bus::send(Message m) {
    const std::uint64_t seq = ++next_seq_[m.src];
    m.seq = seq;
    pending_[m.src].push_back(std::move(m));
    return seq;
}

bool Bus::idle() const {
    for (const auto& [id, q] : pending_) {
        if (!q.empty()) return false;
    }
    return true;
}

std::optional<Message> Bus::deliverNext() {
    if (pending_.empty()) return std::nullopt;
    // Next non-empty sender strictly after the last served one, wrapping.
    auto pick = [&]() -> std::deque<Message>* {
        auto it = last_sender_ ? pending_.upper_bound(*last_sender_) : pending_.begin();
        for (auto cur = it; cur != pending_.end(); ++cur) {
            if (!cur->second.empty()) {
                last_sender_ = cur->first;
                return &cur->second;
            }
        }
        for (auto cur = pending_.begin(); cur != it; ++cur) {
            if (!cur->second.empty()) {
                last_sender_ = cur->first;
                return &cur->second;
            }
        }
        return nullptr;
    };
    auto* q = pick();
    if (q == nullptr) return std::nullopt;
    Message m = std::move(q->front());
    q->pop_front();
    trace_.push_back({m, time_});
    return m;
}

std::string trace_to_jsonl(const std::vector<Bus::Delivered>& trace) {
    std::ostringstream out;
    for (const auto& rec : trace) {
        nlohmann::ordered_json j;
        j["seq"] = rec.msg.seq;
        j["time"] = rec.time;
        j["src"] = rec.msg.src;
        if (rec.msg.dst) j["dst"] = *rec.msg.dst;
        else j["dst"] = "broadcast";
        j["variant"] = variant_name(rec.msg);
        nlohmann::ordered_json payload;
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, JoinRequest>) {
                    payload["v_id"] = p.v_id;
                    payload["v_nominal"] = vec_json(p.v_nominal);
                } else if constexpr (std::is_same_v<T, CandidateInfo>) {
                    payload["id"] = p.id;
                    payload["nominal"] = vec_json(p.nominal);
                    payload["role"] = to_string(p.role);
                } else if constexpr (std::is_same_v<T, PairSelection>) {
                    payload["i"] = p.i;
                    payload["j"] = p.j;
                    payload["D"] = vec_json(p.D_diag);
                    payload["i_nominal"] = vec_json(p.i_nominal);
                    payload["j_nominal"] = vec_json(p.j_nominal);
                } else if constexpr (std::is_same_v<T, BlockDelta>) {
                    payload["from"] = p.from;
                    payload["about_pair"] = {p.about_pair.first, p.about_pair.second};
                    payload["increment"] = mat_json(p.increment);
                } else {
                    payload = nlohmann::ordered_json::object();
                }
            },
            rec.msg.payload);
        j["payload"] = std::move(payload);
        out << j.dump() << '\n';
    }
    return out.str();
}

std::vector<AgentId> discover_candidates(const Eigen::VectorXd& v_pos,
                                         const std::vector<AgentState>& world, double radius) {
    if (radius <= 0.0) throw Error("discover_candidates: radius must be positive");
    std::vector<AgentId> out;
    for (const auto& a : world) {
        if (a.nominal_pos.size() != v_pos.size()) {
            throw DimensionError("discover_candidates: dimension mismatch");
        }
        if ((a.nominal_pos - v_pos).norm() <= radius) out.push_back(a.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::pair<AgentId, AgentId> select_pair(const std::vector<CandidateInfo>& candidates,
                                        const Eigen::VectorXd& v_nominal,
                                        const RotationMatrix& R, double eps) {
    (void)v_nominal;  // the condition constrains the anchor pair only
    if (candidates.size() < 2) {
        throw NoCandidatesError("select_pair: need at least two candidates");
    }
    std::vector<CandidateInfo> sorted = candidates;
    std::sort(sorted.begin(), sorted.end(),
              [](const CandidateInfo& a, const CandidateInfo& b) { return a.id < b.id; });

    bool found = false;
    double best = -1.0;
    std::pair<AgentId, AgentId> pair{0, 0};
    for (std::size_t a = 0; a < sorted.size(); ++a) {
        for (std::size_t b = a + 1; b < sorted.size(); ++b) {
            const Eigen::VectorXd off = rotated_offset(sorted[b].nominal, sorted[a].nominal, R);
            const double cut = eps > 0.0 ? eps : genericity_eps(off);
            const double min_comp = off.cwiseAbs().minCoeff();
            if (min_comp <= cut) continue;
            if (min_comp > best) {  // lexicographic scan: first max wins ties
                best = min_comp;
                pair = {sorted[a].id, sorted[b].id};
                found = true;
            }
        }
    }
    if (!found) {
        throw NoGenericPairError("no candidate pair satisfies the genericity condition");
    }
    return pair;
}

namespace {

// Single-threaded deterministic kernel for one join exchange. Mutates only
// the working copy handed to it; the caller commits on success.
class JoinKernel {
public:
    JoinKernel(Bus& bus, std::vector<AgentState>& world, const RotationMatrix& R,
               const DesignWeight& D, AgentState v_seed, std::vector<AgentId> candidates)
        : bus_(bus),
          world_(world),
          rot_(R),
          design_(D),
          v_(std::move(v_seed)),
          candidates_(std::move(candidates)) {}

    std::pair<AgentId, AgentId> run() {
        bus_.send({JoinRequest{v_.id, v_.nominal_pos}, v_.id, std::nullopt, 0});
        while (auto m = bus_.deliverNext()) dispatch(*m);
        if (!selected_) throw Error("join exchange ended before pair selection");
        // Commit v's state into the world.
        world_.push_back(std::move(v_));
        return *selected_;
    }

private:
    AgentState& agent(AgentId id) {
        for (auto& a : world_) {
            if (a.id == id) return a;
        }
        throw UnknownAgentError("unknown agent id " + std::to_string(id));
    }

    void dispatch(const Message& m) {
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, JoinRequest>) {
                    for (AgentId c : candidates_) onJoinRequest(c, p);
                } else if constexpr (std::is_same_v<T, CandidateInfo>) {
                    onCandidateInfo(p);
                } else if constexpr (std::is_same_v<T, PairSelection>) {
                    onPairSelection(*m.dst, p);
                } else if constexpr (std::is_same_v<T, BlockDelta>) {
                    onBlockDelta(p);
                }
                // JoinAck closes the exchange; nothing to do.
            },
            m.payload);
    }

    void onJoinRequest(AgentId c, const JoinRequest& req) {
        heard_v_nominal_[c] = req.v_nominal;
        const AgentState& a = agent(c);
        bus_.send({CandidateInfo{a.id, a.nominal_pos, a.role}, c, v_.id, 0});
    }

    void onCandidateInfo(const CandidateInfo& info) {
        infos_.push_back(info);
        if (infos_.size() < candidates_.size()) return;

        const auto [i, j] = select_pair(infos_, v_.nominal_pos, rot_, -1.0);
        selected_ = {i, j};
        const Eigen::VectorXd pi = nominalOfCandidate(i);
        const Eigen::VectorXd pj = nominalOfCandidate(j);

        // v's own blocks toward the anchors.
        const JoinIncrements inc = join_increments(pi, pj, v_.nominal_pos, rot_, design_);
        v_.local_blocks[i] = inc.dL_iv.transpose();
        v_.local_blocks[j] = inc.dL_jv.transpose();
        v_.neighbors = {i, j};

        PairSelection sel{i, j, design_.diagonal(), pi, pj};
        bus_.send({sel, v_.id, i, 0});
        bus_.send({sel, v_.id, j, 0});
    }

    void onPairSelection(AgentId self, const PairSelection& sel) {
        AgentState& a = agent(self);
        const bool is_i = (self == sel.i);
        const Eigen::VectorXd pi = is_i ? a.nominal_pos : sel.i_nominal;
        const Eigen::VectorXd pj = is_i ? sel.j_nominal : a.nominal_pos;
        const JoinIncrements inc =
            join_increments(pi, pj, heard_v_nominal_.at(self), rot_, DesignWeight(sel.D_diag));

        const AgentId other = is_i ? sel.j : sel.i;
        const Eigen::MatrixXd to_other = is_i ? inc.dL_ij : Eigen::MatrixXd(inc.dL_ij.transpose());
        auto it = a.local_blocks.find(other);
        if (it == a.local_blocks.end()) a.local_blocks[other] = to_other;
        else it->second += to_other;
        a.neighbors.insert(other);

        const Eigen::MatrixXd to_v = is_i ? inc.dL_iv : inc.dL_jv;
        a.local_blocks[v_.id] = to_v;
        a.neighbors.insert(v_.id);

        bus_.send({BlockDelta{self, {self, v_.id}, to_v}, self, v_.id, 0});
    }

    void onBlockDelta(const BlockDelta& bd) {
        const Eigen::MatrixXd& mine = v_.local_blocks.at(bd.from);
        if ((bd.increment.transpose() - mine).cwiseAbs().maxCoeff() > 1e-12) {
            throw InconsistentBlocksError("anchor " + std::to_string(bd.from) +
                                          " announced a block inconsistent with the joiner's");
        }
        if (++deltas_seen_ == 2) {
            bus_.send({JoinAck{}, v_.id, selected_->first, 0});
            bus_.send({JoinAck{}, v_.id, selected_->second, 0});
        }
    }

    Eigen::VectorXd nominalOfCandidate(AgentId id) const {
        for (const auto& c : infos_) {
            if (c.id == id) return c.nominal;
        }
        throw UnknownAgentError("candidate " + std::to_string(id) + " never responded");
    }

    Bus& bus_;
    std::vector<AgentState>& world_;
    const RotationMatrix& rot_;
    const DesignWeight& design_;
    AgentState v_;
    std::vector<AgentId> candidates_;
    std::vector<CandidateInfo> infos_;
    std::map<AgentId, Eigen::VectorXd> heard_v_nominal_;
    std::optional<std::pair<AgentId, AgentId>> selected_;
    int deltas_seen_ = 0;
};

}  // namespace

JoinOutcome execute_join(Bus& bus, const std::vector<AgentState>& world,
                         const RotationMatrix& R, const AgentState& v_seed,
                         const DesignWeight& D, double sensing_radius) {
    for (const auto& a : world) {
        if (a.id == v_seed.id) {
            throw DuplicateAgentError("joining agent id " + std::to_string(v_seed.id) +
                                      " already present");
        }
    }
    const auto candidates = discover_candidates(v_seed.nominal_pos, world, sensing_radius);
    if (candidates.size() < 2) {
        throw NoCandidatesError("join needs at least two candidates in sensing range, found " +
                                std::to_string(candidates.size()));
    }

    JoinOutcome out;
    out.world = world;  // working copy; discarded if anything below throws
    JoinKernel kernel(bus, out.world, R, D, v_seed, candidates);
    std::tie(out.anchor_i, out.anchor_j) = kernel.run();
    return out;
}

BlockLaplacian assemble_global(const std::vector<AgentState>& world) {
    if (world.empty()) throw Error("assemble_global: empty world");
    const int d = static_cast<int>(world.front().nominal_pos.size());

    std::vector<AgentId> ids;
    ids.reserve(world.size());
    for (const auto& a : world) {
        ids.push_back(a.id);
        std::set<AgentId> keys;
        for (const auto& [b, blk] : a.local_blocks) keys.insert(b);
        if (keys != a.neighbors) {
            throw Error("agent " + std::to_string(a.id) +
                        ": local blocks and neighbor set disagree");
        }
    }

    BlockLaplacian::EdgeMap edges;
    for (const auto& a : world) {
        for (const auto& [b, blk] : a.local_blocks) {
            const AgentState& peer = find_agent(world, b);
            auto back = peer.local_blocks.find(a.id);
            if (back == peer.local_blocks.end()) {
                throw InconsistentBlocksError("edge (" + std::to_string(a.id) + "," +
                                              std::to_string(b) + ") has no reciprocal block");
            }
            if ((blk - back->second.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
                throw InconsistentBlocksError("edge (" + std::to_string(a.id) + "," +
                                              std::to_string(b) +
                                              ") endpoints disagree beyond 1e-12");
            }
            if (a.id < b) edges.emplace(BlockLaplacian::EdgeKey{a.id, b}, blk);
        }
    }
    return BlockLaplacian(d, std::move(ids), std::move(edges));
}

std::vector<AgentState> world_from_laplacian(const BlockLaplacian& L, const NominalFormation& F) {
    if (L.agentIds() != F.agentIds() || L.dimension() != F.dimension()) {
        throw Error("world_from_laplacian: Laplacian and formation disagree on agents");
    }
    std::vector<AgentState> world;
    world.reserve(L.agentCount());
    for (AgentId id : L.agentIds()) {
        AgentState a;
        a.id = id;
        a.nominal_pos = F.nominalOf(id);
        a.role = F.isLeader(id) ? Role::leader : Role::follower;
        for (AgentId nb : L.neighborsOf(id)) {
            a.neighbors.insert(nb);
            a.local_blocks[nb] = L.block(id, nb);
        }
        world.push_back(std::move(a));
    }
    return world;
}

}  // namespace ff
