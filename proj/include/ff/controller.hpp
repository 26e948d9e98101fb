#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "ff/protocol.hpp"

namespace ff {

/// Control gains. boundary_layer smooths the signum term of the follower law
/// within a band of the given width; nullopt selects the ideal signum with
/// sgn(0) = 0.
struct Gains {
    double alpha1 = 1.0;
    double alpha2 = 2.0;
    double beta1 = 8.0;
    double beta2 = 0.2;
    std::optional<double> boundary_layer = 1e-3;
};

void validate(const Gains& g);

/// One linear ramp of the maneuver parameters.
struct SchedulePhase {
    double t_start = 0.0;
    double t_end = 0.0;
    Eigen::VectorXd s_start, s_end;
    Eigen::VectorXd tau_start, tau_end;
};

/// Piecewise-linear s(t), tau(t). Before the first phase s = 1, tau = the
/// first phase's start value (zero when empty); values hold between and after
/// phases. Continuity across boundaries is validated at construction.
class ManeuverSchedule {
public:
    ManeuverSchedule(int d, std::vector<SchedulePhase> phases);
    static ManeuverSchedule identity(int d) { return ManeuverSchedule(d, {}); }

    struct Sample {
        Eigen::VectorXd s, s_rate, tau, tau_rate;
    };

    /// Values and right-derivative rates at time t.
    Sample sample(double t) const;

    int dimension() const { return d_; }
    const std::vector<SchedulePhase>& phases() const { return phases_; }

private:
    int d_;
    std::vector<SchedulePhase> phases_;
};

/// Reference position and feedforward velocity for one agent.
std::pair<Eigen::VectorXd, Eigen::VectorXd> reference(const Eigen::VectorXd& ptilde_i,
                                                      const ManeuverSchedule& sched,
                                                      const RotationMatrix& R, double t);

/// u = -alpha1 tanh(alpha2 (p - p*)) + dp*.
Eigen::VectorXd leader_control(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_star,
                               const Eigen::VectorXd& dp_star, const Gains& g);

/// u = -beta1 z - beta2 sgn(z) with z = sum_j L_ij (p_j - p_i); uses only the
/// agent's stored blocks and neighbor-relative positions.
Eigen::VectorXd follower_control(const AgentState& agent,
                                 const std::map<AgentId, Eigen::VectorXd>& neighbor_positions,
                                 const Eigen::VectorXd& own_position, const Gains& g);

struct LogRow {
    double t = 0.0;
    Eigen::VectorXd positions;
    Eigen::VectorXd errors;  // per-agent tracking error
    double max_error = 0.0;
};

struct SimState {
    double t = 0.0;
    Eigen::VectorXd positions;
    NominalFormation formation;
    BlockLaplacian laplacian;
    std::vector<AgentState> world;  // same order as formation.agentIds()
    std::vector<LogRow> log;
};

/// Fresh state at t = 0 with the given positions and an initial log row.
SimState make_sim_state(NominalFormation F, BlockLaplacian L, std::vector<AgentState> world,
                        Eigen::VectorXd positions, const ManeuverSchedule& sched);

/// One explicit-Euler step p <- p + dt u(p, t); appends a log row at the new
/// time. Throws InstabilityError if the state leaves the finite range.
SimState step(SimState state, const ManeuverSchedule& sched, const Gains& g, double dt);

struct TrackingError {
    Eigen::VectorXd per_agent;
    double max_error = 0.0;
};

/// Distance of every agent to its maneuver reference at state.t (followers
/// included, for metrics only).
TrackingError tracking_error(const SimState& state, const ManeuverSchedule& sched);

}  // namespace ff
