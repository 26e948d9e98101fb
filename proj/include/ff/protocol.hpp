#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ff/laplacian.hpp"

// Distributed joining over a simulated bus.
//
// Flow for one join of agent v:
//   v senses candidates in range and broadcasts a JoinRequest; candidates
//   reply with CandidateInfo; v picks the anchor pair and sends each anchor a
//   PairSelection carrying the other anchor's nominal; anchors and v compute
//   their increment blocks locally, the anchors announce their new (anchor,v)
//   blocks back to v as BlockDelta for a consistency check, and v closes the
//   exchange with JoinAck. The kernel is single-threaded and deterministic:
//   per-sender FIFO delivery, round-robin across senders by ascending id.

namespace ff {

enum class Role { leader, follower };

std::string to_string(Role r);

/// What one agent knows: its own nominal, its neighbor set, and the Laplacian
/// blocks for exactly those neighbors.
struct AgentState {
    AgentId id = 0;
    Eigen::VectorXd nominal_pos;
    Role role = Role::follower;
    std::set<AgentId> neighbors;
    std::map<AgentId, Eigen::MatrixXd> local_blocks;
};

struct JoinRequest {
    AgentId v_id = 0;
    Eigen::VectorXd v_nominal;
};

struct CandidateInfo {
    AgentId id = 0;
    Eigen::VectorXd nominal;
    Role role = Role::follower;  // carried for logging only, never used to select
};

struct PairSelection {
    AgentId i = 0;
    AgentId j = 0;
    Eigen::VectorXd D_diag;
    // Relayed candidate data so each anchor can compute its blocks locally.
    Eigen::VectorXd i_nominal;
    Eigen::VectorXd j_nominal;
};

struct BlockDelta {
    AgentId from = 0;
    std::pair<AgentId, AgentId> about_pair;
    Eigen::MatrixXd increment;
};

struct JoinAck {};

struct Message {
    std::variant<JoinRequest, CandidateInfo, PairSelection, BlockDelta, JoinAck> payload;
    AgentId src = 0;
    std::optional<AgentId> dst;  // nullopt = broadcast
    std::uint64_t seq = 0;       // per-sender, stamped by the bus
};

const char* variant_name(const Message& m);

/// Lossless in-order bus with per-sender FIFO queues. Delivery walks sender
/// ids round-robin, so identical send sequences yield identical traces.
class Bus {
public:
    struct Delivered {
        Message msg;
        double time = 0.0;
    };

    void setTime(double t) { time_ = t; }
    double time() const { return time_; }

    std::uint64_t send(Message m);
    std::optional<Message> deliverNext();
    bool idle() const;

    const std::vector<Delivered>& trace() const { return trace_; }
    void clearTrace() { trace_.clear(); }

private:
    std::map<AgentId, std::deque<Message>> pending_;
    std::map<AgentId, std::uint64_t> next_seq_;
    std::optional<AgentId> last_sender_;
    std::vector<Delivered> trace_;
    double time_ = 0.0;
};

/// Line-delimited records {seq, time, src, dst, variant, payload} in stable
/// field order.
std::string trace_to_jsonl(const std::vector<Bus::Delivered>& trace);

/// Agents within sensing radius of v_pos (nominal positions), ascending id.
std::vector<AgentId> discover_candidates(const Eigen::VectorXd& v_pos,
                                         const std::vector<AgentState>& world, double radius);

/// Anchor pair maximizing the smallest rotated-offset component among all
/// generic candidate pairs; ties broken by smallest (i, j).
std::pair<AgentId, AgentId> select_pair(const std::vector<CandidateInfo>& candidates,
                                        const Eigen::VectorXd& v_nominal,
                                        const RotationMatrix& R, double eps);

struct JoinOutcome {
    std::vector<AgentState> world;
    AgentId anchor_i = 0;
    AgentId anchor_j = 0;
};

/// Run the full exchange for one joining agent. The input world is left
/// untouched; on success the updated world (with v appended) is returned.
JoinOutcome execute_join(Bus& bus, const std::vector<AgentState>& world,
                         const RotationMatrix& R, const AgentState& v_seed,
                         const DesignWeight& D, double sensing_radius);

/// Collect all local blocks into one Laplacian; the two endpoints of every
/// edge must store mutually transposed blocks.
BlockLaplacian assemble_global(const std::vector<AgentState>& world);

/// Distribute a Laplacian back onto per-agent states (inverse of
/// assemble_global); roles from the formation's leader set.
std::vector<AgentState> world_from_laplacian(const BlockLaplacian& L, const NominalFormation& F);

}  // namespace ff
