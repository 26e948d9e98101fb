// Acceptance suite: every release criterion as one pass/fail line.
//
// Each criterion runs the stated check at its stated tolerance and is also
// held to its runtime budget. The binary exits non-zero if any line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "ff/scenario.hpp"
#include "test_helpers.hpp"

using namespace ff;

namespace {

struct Criterion {
    std::string name;
    double budget_seconds;
    std::function<void()> body;
};

struct Failure {
    std::string detail;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure{what};
}

// --- 1. Golden weight computation -----------------------------------------

void golden_weights() {
    const auto F7 = fft::ring6_formation().withAgent(7, fft::agent7_nominal());
    const TripletWeights w = constraint_weights({5, 6, 7}, F7);
    require((w.w_jk - fft::diag2(-1.0, -0.9)).cwiseAbs().maxCoeff() <= 1e-12, "W_jv");
    require((w.w_ki - fft::diag2(-1.0, -0.1)).cwiseAbs().maxCoeff() <= 1e-12, "W_vi");
    require((w.w_kk - fft::diag2(-2.0, -1.0)).cwiseAbs().maxCoeff() <= 1e-12, "W_vv");

    const JoinIncrements inc = join_increments(F7.nominalOf(5), F7.nominalOf(6),
                                               F7.nominalOf(7), F7.rotation(),
                                               DesignWeight::identity(2));
    require((inc.dL_ij - fft::diag2(1.0, 0.09)).cwiseAbs().maxCoeff() <= 1e-12, "dL_56");
    require((inc.dL_iv - fft::diag2(-2.0, -0.9)).cwiseAbs().maxCoeff() <= 1e-12, "dL_57");
    require((inc.dL_jv - fft::diag2(-2.0, -0.1)).cwiseAbs().maxCoeff() <= 1e-12, "dL_67");
}

// --- 2. Spectral preservation under one join --------------------------------

void join_preserves_spectrum() {
    const auto L = fft::ring6_laplacian();
    const auto F = fft::ring6_formation();
    const SpectralReport before = validate_spectral(L, F);
    require(before.pass(), "six-agent fixture must pass");

    const JoinResult r =
        join_update(L, F, 7, fft::agent7_nominal(), 5, 6, DesignWeight::identity(2));
    const Eigen::MatrixXd A = r.laplacian.assemble();
    const double norm = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A)
                            .eigenvalues()
                            .cwiseAbs()
                            .maxCoeff();
    const SpectralReport rep = validate_spectral(r.laplacian, r.formation);

    require(rep.min_eig >= -1e-9 * norm, "min eigenvalue above -1e-9 * norm");
    require(rep.kernel_dim == 4, "kernel dimension 4");
    require(rep.max_principal_angle <= 1e-6, "principal angles within 1e-6 rad");
    require(rep.lff_min_eig > 0.0, "follower block positive definite");
    require(rep.rank == before.rank + 2, "rank grows by d");
    require((r.laplacian.block(5, 6) - fft::diag2(-14.0, -5.91)).cwiseAbs().maxCoeff() <= 1e-12,
            "merged (5,6) edge block");
}

// --- 3. Distributed equals centralized --------------------------------------

void distributed_equals_centralized() {
    const auto world = world_from_laplacian(fft::ring6_laplacian(), fft::ring6_formation());
    AgentState seed;
    seed.id = 7;
    seed.nominal_pos = fft::agent7_nominal();
    const auto R = RotationMatrix::identity(2);

    Bus bus;
    const JoinOutcome out = execute_join(bus, world, R, seed, DesignWeight::identity(2), 1.5);
    const JoinResult central = join_update(fft::ring6_laplacian(), fft::ring6_formation(), 7,
                                           fft::agent7_nominal(), out.anchor_i, out.anchor_j,
                                           DesignWeight::identity(2));
    const double gap =
        (assemble_global(out.world).assemble() - central.laplacian.assemble())
            .cwiseAbs()
            .maxCoeff();
    require(gap <= 1e-12, "element-wise agreement within 1e-12");

    const auto candidates = discover_candidates(seed.nominal_pos, world, 1.5);
    std::set<AgentId> allowed(candidates.begin(), candidates.end());
    allowed.insert(7);
    for (const auto& rec : bus.trace()) {
        require(allowed.count(rec.msg.src) == 1, "trace src stays local");
        if (rec.msg.dst) require(allowed.count(*rec.msg.dst) == 1, "trace dst stays local");
    }

    Bus bus2;
    execute_join(bus2, world, R, seed, DesignWeight::identity(2), 1.5);
    require(trace_to_jsonl(bus.trace()) == trace_to_jsonl(bus2.trace()),
            "identical traces across runs");
}

// --- 4. Constraint invariance under maneuvers --------------------------------

void constraint_invariance() {
    Rng rng(2024);
    const int dims[] = {2, 3, 4};
    for (int it = 0; it < 1000; ++it) {
        const int d = dims[it % 3];
        const auto R = fft::random_rotation(d, rng);
        const Eigen::VectorXd pi = fft::random_vector(d, rng);
        const Eigen::VectorXd pj = fft::random_vector(d, rng);
        const Eigen::VectorXd pk = fft::random_vector(d, rng);
        const TripletWeights w = constraint_weights_at(pi, pj, pk, R);

        const Eigen::VectorXd s = fft::random_vector(d, rng, -3.0, 3.0);
        const Eigen::VectorXd tau = fft::random_vector(d, rng, -10.0, 10.0);
        const Eigen::MatrixXd S = scaling_transform(s, R);
        const double res =
            constraint_residual(w, S * pi + tau, S * pj + tau, S * pk + tau).norm();
        const double bound = 1e-9 * (1.0 + s.cwiseAbs().maxCoeff()) *
                             std::max({pi.norm(), pj.norm(), pk.norm()});
        require(res <= bound, "residual bound at draw " + std::to_string(it));
    }
}

// --- 5. Incremental construction in several dimensions -----------------------

void incremental_builds() {
    const int dims[] = {2, 3, 5};
    for (const int d : dims) {
        Rng rng(5000 + d);
        for (int build = 0; build < 50; ++build) {
            const auto R =
                (build % 2 == 0) ? RotationMatrix::identity(d) : fft::random_rotation(d, rng);
            // Fold manually so every epoch is validated.
            Eigen::VectorXd a = fft::random_vector(d, rng);
            Eigen::VectorXd b;
            for (;;) {
                b = fft::random_vector(d, rng);
                if (genericity_check(a, b, R, 0.1)) break;
            }
            Eigen::VectorXd pt(2 * d);
            pt << a, b;
            NominalFormation F(d, {1, 2}, pt, R, {1, 2});
            BlockLaplacian L(d, {1, 2});
            for (int n = 2; n <= 12; ++n) {
                const SpectralReport rep = validate_spectral(L, F);
                require(rep.pass(),
                        "epoch pass (d=" + std::to_string(d) + ", n=" + std::to_string(n) +
                            ", build=" + std::to_string(build) +
                            ": psd=" + std::to_string(rep.psd) +
                            " kdim=" + std::to_string(rep.kernel_dim) +
                            " angle=" + std::to_string(rep.max_principal_angle) +
                            " lff=" + std::to_string(rep.lff_min_eig) + ")");
                require(rep.kernel_dim == 2 * d, "kernel dimension 2d");
                if (n == 12) break;
                const Eigen::VectorXd vp = fft::random_vector(d, rng);
                std::vector<CandidateInfo> cands;
                for (AgentId a = 1; a <= n; ++a) {
                    cands.push_back({a, F.nominalOf(a), Role::follower});
                }
                const auto [i, j] = select_pair(cands, vp, R, -1.0);
                const JoinResult r =
                    join_update(L, F, n + 1, vp, i, j, DesignWeight::identity(d));
                L = r.laplacian;
                F = r.formation;
            }
        }
    }
}

// --- 6. Follower equilibrium reproduces maneuvered targets --------------------

void follower_equilibrium_targets() {
    const JoinResult r = join_update(fft::ring6_laplacian(), fft::ring6_formation(), 7,
                                     fft::agent7_nominal(), 5, 6, DesignWeight::identity(2));
    Rng rng(61);
    for (int it = 0; it < 20; ++it) {
        ManeuverParams m{fft::random_vector(2, rng, -2.0, 2.0),
                         fft::random_vector(2, rng, -5.0, 5.0)};
        const Eigen::VectorXd p = apply_maneuver(r.formation, m);
        Eigen::VectorXd leaders(4);
        leaders << p.segment(0, 2), p.segment(2, 2);
        const Eigen::VectorXd pf = follower_equilibrium(r.laplacian, r.formation, leaders);
        require((pf - p.segment(4, 10)).cwiseAbs().maxCoeff() <= 1e-8,
                "equilibrium within 1e-8 at draw " + std::to_string(it));
    }
}

// --- 7. Closed-loop corridor scenario ----------------------------------------

void corridor_run() {
    const auto cfg =
        load_scenario(std::filesystem::path(FF_SCENARIO_DIR) / "corridor_compression.json");
    const auto out = std::filesystem::temp_directory_path() / "ff_acceptance_run";
    std::filesystem::remove_all(out);
    const RunArtifacts art = run(cfg, out);

    auto error_at = [&](double t) {
        double best = 1e9, err = 0.0;
        for (const auto& row : art.log) {
            if (std::abs(row.t - t) < best) {
                best = std::abs(row.t - t);
                err = row.max_error;
            }
        }
        return err;
    };
    require(error_at(9.9) < 0.05, "max error below 0.05 at t = 9.9");
    require(error_at(19.9) < 0.05, "max error below 0.05 at t = 19.9");
    require(error_at(30.0) < 0.05, "max error below 0.05 at t = 30");

    // y-extent across 25..30 s sits at half the initial extent, within 2%.
    const auto& first = art.log.front();
    double y_min = 1e9, y_max = -1e9;
    for (int k = 0; k * 2 + 1 < first.positions.size(); ++k) {
        y_min = std::min(y_min, first.positions(2 * k + 1));
        y_max = std::max(y_max, first.positions(2 * k + 1));
    }
    const double initial_extent = y_max - y_min;
    for (const auto& row : art.log) {
        if (row.t < 25.0) continue;
        double lo = 1e9, hi = -1e9;
        for (int k = 0; k * 2 + 1 < row.positions.size(); ++k) {
            lo = std::min(lo, row.positions(2 * k + 1));
            hi = std::max(hi, row.positions(2 * k + 1));
        }
        const double ratio = (hi - lo) / initial_extent;
        require(ratio >= 0.48 && ratio <= 0.52,
                "y-extent ratio " + std::to_string(ratio) + " at t = " + std::to_string(row.t));
    }

    // Join transients die down: error 3 s after each join is below 20% of
    // the transient peak.
    for (const double tj : {10.0, 20.0}) {
        double peak = 0.0;
        for (const auto& row : art.log) {
            if (row.t >= tj && row.t <= tj + 3.0) peak = std::max(peak, row.max_error);
        }
        const double settled = error_at(tj + 3.0);
        require(settled < 0.2 * peak, "error at join+3s below 20% of the peak (t=" +
                                          std::to_string(tj) + ")");
    }
}

// --- 8. Rank condition boundary ----------------------------------------------

void rank_boundary() {
    Rng rng(88);
    for (int it = 0; it < 200; ++it) {
        const int d = 2 + it % 3;
        const auto R = fft::random_rotation(d, rng);
        const Eigen::VectorXd pi = fft::random_vector(d, rng);
        const Eigen::VectorXd pj = fft::random_vector(d, rng);
        const Eigen::VectorXd pk = fft::random_vector(d, rng);
        const TripletWeights w = constraint_weights_at(pi, pj, pk, R);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(w.w_kk);
        int rank = 0;
        for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
            if (svd.singularValues()(k) > 1e-8 * svd.singularValues()(0)) ++rank;
        }
        require((rank == d) == genericity_check(pi, pj, R),
                "rank equivalence at draw " + std::to_string(it));
    }

    // Constructed degenerate pairs must surface as SingularWeight.
    for (int axis = 0; axis < 2; ++axis) {
        const auto R = RotationMatrix::identity(2);
        Eigen::VectorXd pi = fft::v2(0.5, -1.0);
        Eigen::VectorXd pj = pi;
        pj(1 - axis) += 2.0;  // offset vanishes along `axis`
        const TripletWeights w = constraint_weights_at(pi, pj, fft::v2(3, 3), R);
        bool raised = false;
        try {
            resolve_dependent(w, pi, pj);
        } catch (const SingularWeightError&) {
            raised = true;
        }
        require(raised, "degenerate pair raises SingularWeight");
    }
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"golden weights of the ring join", 0.1, golden_weights},
        {"one join preserves the spectral conditions", 1.0, join_preserves_spectrum},
        {"distributed join equals centralized update", 5.0, distributed_equals_centralized},
        {"constraint invariance over 1000 random maneuvers", 5.0, constraint_invariance},
        {"incremental builds stay valid (d = 2, 3, 5; n up to 12)", 30.0, incremental_builds},
        {"follower equilibrium matches maneuvered targets", 5.0, follower_equilibrium_targets},
        {"closed-loop corridor scenario", 60.0, corridor_run},
        {"rank condition boundary", 5.0, rank_boundary},
    };

    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto& c = criteria[k];
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            c.body();
        } catch (const Failure& f) {
            ok = false;
            detail = f.detail;
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("exception: ") + e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && elapsed > c.budget_seconds) {
            ok = false;
            detail = "runtime " + std::to_string(elapsed) + " s exceeds budget " +
                     std::to_string(c.budget_seconds) + " s";
        }
        std::printf("%s criterion %zu: %s (%.2f s)%s%s\n", ok ? "PASS" : "FAIL", k + 1,
                    c.name.c_str(), elapsed, detail.empty() ? "" : " - ", detail.c_str());
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
