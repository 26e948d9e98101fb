#include "ff/controller.hpp"

#include <cmath>

namespace ff {

void validate(const Gains& g) {
    if (!(g.alpha1 > 0.0 && g.alpha2 > 0.0 && g.beta1 > 0.0 && g.beta2 > 0.0)) {
        throw Error("control gains must be strictly positive");
    }
    if (g.boundary_layer && !(*g.boundary_layer > 0.0)) {
        throw Error("boundary layer width must be strictly positive");
    }
}

ManeuverSchedule::ManeuverSchedule(int d, std::vector<SchedulePhase> phases)
    : d_(d), phases_(std::move(phases)) {
    if (d_ <= 0) throw DimensionError("schedule dimension must be positive");
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d_);
    const SchedulePhase* prev = nullptr;
    for (std::size_t k = 0; k < phases_.size(); ++k) {
        const auto& ph = phases_[k];
        if (ph.s_start.size() != d_ || ph.s_end.size() != d_ || ph.tau_start.size() != d_ ||
            ph.tau_end.size() != d_) {
            throw DimensionError("schedule phase vectors must have length d");
        }
        if (!(ph.t_start < ph.t_end)) throw Error("schedule phase must have t_start < t_end");
        if (prev && ph.t_start < prev->t_end) throw Error("schedule phases must not overlap");
        const Eigen::VectorXd& s_prev = prev ? prev->s_end : ones;
        if ((ph.s_start - s_prev).cwiseAbs().maxCoeff() > 0.0) {
            throw Error("schedule: s must be continuous across phase boundaries");
        }
        if (prev && (ph.tau_start - prev->tau_end).cwiseAbs().maxCoeff() > 0.0) {
            throw Error("schedule: tau must be continuous across phase boundaries");
        }
        prev = &ph;
    }
}

ManeuverSchedule::Sample ManeuverSchedule::sample(double t) const {
    Sample out;
    out.s_rate = Eigen::VectorXd::Zero(d_);
    out.tau_rate = Eigen::VectorXd::Zero(d_);
    if (phases_.empty()) {
        out.s = Eigen::VectorXd::Ones(d_);
        out.tau = Eigen::VectorXd::Zero(d_);
        return out;
    }
    if (t < phases_.front().t_start) {
        out.s = Eigen::VectorXd::Ones(d_);
        out.tau = phases_.front().tau_start;
        return out;
    }
    for (const auto& ph : phases_) {
        if (t >= ph.t_start && t < ph.t_end) {
            const double a = (t - ph.t_start) / (ph.t_end - ph.t_start);
            const double inv = 1.0 / (ph.t_end - ph.t_start);
            out.s = ph.s_start + a * (ph.s_end - ph.s_start);
            out.tau = ph.tau_start + a * (ph.tau_end - ph.tau_start);
            out.s_rate = inv * (ph.s_end - ph.s_start);
            out.tau_rate = inv * (ph.tau_end - ph.tau_start);
            return out;
        }
        if (t < ph.t_start) break;  // inside a gap: hold the previous end values
    }
    // Held value: end of the last phase that started at or before t.
    const SchedulePhase* last = nullptr;
    for (const auto& ph : phases_) {
        if (ph.t_end <= t) last = &ph;
    }
    out.s = last ? last->s_end : Eigen::VectorXd::Ones(d_);
    out.tau = last ? last->tau_end : phases_.front().tau_start;
    return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> reference(const Eigen::VectorXd& ptilde_i,
                                                      const ManeuverSchedule& sched,
                                                      const RotationMatrix& R, double t) {
    if (t < 0.0) throw Error("reference: time must be non-negative");
    const auto s = sched.sample(t);
    const Eigen::VectorXd p_star = scaling_transform(s.s, R) * ptilde_i + s.tau;
    const Eigen::VectorXd dp_star = scaling_transform(s.s_rate, R) * ptilde_i + s.tau_rate;
    return {p_star, dp_star};
}

Eigen::VectorXd leader_control(const Eigen::VectorXd& p_i, const Eigen::VectorXd& p_star,
                               const Eigen::VectorXd& dp_star, const Gains& g) {
    return -g.alpha1 * (g.alpha2 * (p_i - p_star)).array().tanh().matrix() + dp_star;
}

Eigen::VectorXd follower_control(const AgentState& agent,
                                 const std::map<AgentId, Eigen::VectorXd>& neighbor_positions,
                                 const Eigen::VectorXd& own_position, const Gains& g) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(own_position.size());
    for (const auto& [nb, blk] : agent.local_blocks) {
        auto it = neighbor_positions.find(nb);
        if (it == neighbor_positions.end()) {
            throw UnknownAgentError("follower_control: missing position of neighbor " +
                                    std::to_string(nb));
        }
        z += blk * (it->second - own_position);
    }
    Eigen::VectorXd sg(z.size());
    if (g.boundary_layer) {
        const double phi = *g.boundary_layer;
        for (Eigen::Index k = 0; k < z.size(); ++k) sg(k) = z(k) / std::max(std::abs(z(k)), phi);
    } else {
        for (Eigen::Index k = 0; k < z.size(); ++k) {
            sg(k) = z(k) > 0.0 ? 1.0 : (z(k) < 0.0 ? -1.0 : 0.0);
        }
    }
    return -g.beta1 * z - g.beta2 * sg;
}

namespace {

LogRow make_log_row(const SimState& state, const ManeuverSchedule& sched) {
    const TrackingError err = tracking_error(state, sched);
    return LogRow{state.t, state.positions, err.per_agent, err.max_error};
}

}  // namespace

SimState make_sim_state(NominalFormation F, BlockLaplacian L, std::vector<AgentState> world,
                        Eigen::VectorXd positions, const ManeuverSchedule& sched) {
    if (positions.size() != F.stackedNominal().size()) {
        throw DimensionError("positions length must be d*n");
    }
    if (world.size() != static_cast<std::size_t>(F.agentCount())) {
        throw Error("world size must match the formation");
    }
    for (int k = 0; k < F.agentCount(); ++k) {
        if (world[k].id != F.agentIds()[k]) {
            throw Error("world must list agents in formation order");
        }
    }
    SimState st{0.0, std::move(positions), std::move(F), std::move(L), std::move(world), {}};
    st.log.push_back(make_log_row(st, sched));
    return st;
}

SimState step(SimState state, const ManeuverSchedule& sched, const Gains& g, double dt) {
    if (!(dt > 0.0)) throw Error("step: dt must be positive");
    validate(g);
    const int d = state.formation.dimension();
    const int n = state.formation.agentCount();

    Eigen::VectorXd u(state.positions.size());
    for (int k = 0; k < n; ++k) {
        const AgentId id = state.formation.agentIds()[k];
        const auto own = state.positions.segment(static_cast<Eigen::Index>(d) * k, d);
        if (state.formation.isLeader(id)) {
            const auto [p_star, dp_star] =
                reference(state.formation.nominalOf(id), sched, state.formation.rotation(),
                          state.t);
            u.segment(static_cast<Eigen::Index>(d) * k, d) =
                leader_control(own, p_star, dp_star, g);
        } else {
            const AgentState& a = state.world[k];
            std::map<AgentId, Eigen::VectorXd> nbp;
            for (AgentId nb : a.neighbors) {
                const int kn = state.formation.indexOf(nb);
                nbp[nb] = state.positions.segment(static_cast<Eigen::Index>(d) * kn, d);
            }
            u.segment(static_cast<Eigen::Index>(d) * k, d) = follower_control(a, nbp, own, g);
        }
    }

    state.positions += dt * u;
    state.t += dt;
    if (!state.positions.allFinite()) {
        throw InstabilityError("non-finite state at t = " + std::to_string(state.t) +
                               "; reduce dt or gains");
    }
    state.log.push_back(make_log_row(state, sched));
    return state;
}

TrackingError tracking_error(const SimState& state, const ManeuverSchedule& sched) {
    const int d = state.formation.dimension();
    const int n = state.formation.agentCount();
    const auto s = sched.sample(state.t);
    const Eigen::MatrixXd S = scaling_transform(s.s, state.formation.rotation());

    TrackingError out;
    out.per_agent.resize(n);
    for (int k = 0; k < n; ++k) {
        const auto pt = state.formation.stackedNominal().segment(static_cast<Eigen::Index>(d) * k, d);
        const Eigen::VectorXd target = S * pt + s.tau;
        out.per_agent(k) =
            (state.positions.segment(static_cast<Eigen::Index>(d) * k, d) - target).norm();
    }
    out.max_error = n > 0 ? out.per_agent.maxCoeff() : 0.0;
    return out;
}

}  // namespace ff
