// ffsim: scenario driver for the formation-maneuver engine.
//
// Subcommands:
//   validate <config> | validate --random d=3 n=10   spectral checks only
//   run <config> --out <dir>                         full closed-loop run
//   join-demo                                        annotated single join
//
// Exit codes: 0 ok, 2 config error, 3 spectral/protocol violation,
// 4 numerical instability.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "ff/log.hpp"
#include "ff/scenario.hpp"

namespace {

void print_report(const ff::EpochRecord& rec) {
    const auto& r = rec.report;
    std::printf("epoch %d: %d agents", rec.epoch, rec.agents);
    if (rec.joined) {
        std::printf(" (agent %d via (%d,%d))", *rec.joined, rec.anchors->first,
                    rec.anchors->second);
    }
    std::printf("\n  psd=%s  min_eig=%.3e  kernel_dim=%d  rank=%d\n",
                r.psd ? "yes" : "no", r.min_eig, r.kernel_dim, r.rank);
    std::printf("  kernel==shape_space=%s  max_principal_angle=%.3e rad\n",
                r.kernel_matches_shape_space ? "yes" : "no", r.max_principal_angle);
    std::printf("  lff_min_eig=%.6g  =>  %s\n", r.lff_min_eig, r.pass() ? "PASS" : "FAIL");
}

int do_validate(const std::string& config_path, const std::vector<std::string>& random_kv,
                std::uint64_t seed) {
    ff::ScenarioConfig cfg;
    if (!random_kv.empty()) {
        int d = 0, n = 0;
        for (const auto& kv : random_kv) {
            if (kv.rfind("d=", 0) == 0) d = std::stoi(kv.substr(2));
            else if (kv.rfind("n=", 0) == 0) n = std::stoi(kv.substr(2));
            else throw ff::ConfigError("--random expects d=<dim> n=<agents>, got '" + kv + "'");
        }
        if (d < 1 || n < 3) throw ff::ConfigError("--random needs d >= 1 and n >= 3");
        cfg = ff::random_scenario(d, n, seed);
        std::printf("random scenario: d=%d n=%d seed=%llu\n", d, n,
                    static_cast<unsigned long long>(seed));
    } else if (!config_path.empty()) {
        cfg = ff::load_scenario(config_path);
    } else {
        throw ff::ConfigError("validate needs a config path or --random");
    }

    const auto records = ff::validate_scenario(cfg);
    bool all_pass = true;
    for (const auto& rec : records) {
        print_report(rec);
        all_pass = all_pass && rec.report.pass();
    }
    if (!all_pass) {
        std::fprintf(stderr, "validation failed: at least one epoch violates the conditions\n");
        return 3;
    }
    std::printf("all %zu epoch(s) pass\n", records.size());
    return 0;
}

int do_run(const std::string& config_path, const std::string& out_dir, ff::RunOverrides ov) {
    const auto cfg = ff::load_scenario(config_path);
    const auto art = ff::run(cfg, out_dir, ov);
    std::printf("run complete: %zu epoch(s), final max tracking error %.3e\n", art.epochs.size(),
                art.final_max_error);
    std::printf("  %s\n  %s\n  %s\n", art.trajectory_csv.c_str(), art.events_jsonl.c_str(),
                art.metrics_json.c_str());
    return 0;
}

void print_block(const char* name, const Eigen::MatrixXd& m) {
    std::printf("  %s =\n", name);
    for (int r = 0; r < m.rows(); ++r) {
        std::printf("    [");
        for (int c = 0; c < m.cols(); ++c) std::printf(" %10.4g", m(r, c));
        std::printf(" ]\n");
    }
}

// Walk through one join onto the bundled six-agent ring, printing every
// intermediate quantity of the weight construction.
int do_join_demo() {
    using namespace ff;
    const int d = 2;
    const RotationMatrix R = RotationMatrix::identity(d);
    std::vector<AgentId> ids{1, 2, 3, 4, 5, 6};
    Eigen::VectorXd pt(12);
    pt << -3, 3, 3, 2, 2, 0, 1, -1, 0, -2, -2, -3;
    NominalFormation F(d, ids, pt, R, {1, 2});

    BlockLaplacian::EdgeMap edges;
    auto diag2 = [](double x, double y) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
        m(0, 0) = x;
        m(1, 1) = y;
        return m;
    };
    edges[{1, 2}] = diag2(5, -6);
    edges[{2, 3}] = diag2(-30, -3);
    edges[{3, 4}] = diag2(-30, -6);
    edges[{4, 5}] = diag2(-30, -6);
    edges[{5, 6}] = diag2(-15, -6);
    edges[{1, 6}] = diag2(-30, 1);
    BlockLaplacian L(d, ids, edges);

    Eigen::VectorXd pv(2);
    pv << -1, -2.1;
    const AgentId v = 7, i = 5, j = 6;
    std::printf("joining agent %d at [%g, %g] onto anchors (%d, %d), D = I\n", v, pv(0), pv(1), i,
                j);

    const Eigen::VectorXd off_jv = rotated_offset(F.nominalOf(j), pv, R);
    const Eigen::VectorXd off_vi = rotated_offset(pv, F.nominalOf(i), R);
    std::printf("rotated offsets: j-v = [%g, %g], v-i = [%g, %g]\n", off_jv(0), off_jv(1),
                off_vi(0), off_vi(1));

    const TripletWeights w = constraint_weights_at(F.nominalOf(i), F.nominalOf(j), pv, R);
    print_block("W_jv", w.w_jk);
    print_block("W_vi", w.w_ki);
    print_block("W_vv (= W_jv + W_vi)", w.w_kk);

    const DesignWeight D = DesignWeight::identity(d);
    const JoinIncrements inc = join_increments(F.nominalOf(i), F.nominalOf(j), pv, R, D);
    std::printf("edge increments:\n");
    print_block("dL_ij", inc.dL_ij);
    print_block("dL_iv", inc.dL_iv);
    print_block("dL_jv", inc.dL_jv);

    const JoinResult r = join_update(L, F, v, pv, i, j, D);
    std::printf("merged edge (%d,%d):\n", i, j);
    print_block("L_ij + dL_ij", r.laplacian.block(i, j));

    const SpectralReport rep = validate_spectral(r.laplacian, r.formation);
    std::printf("spectral report after the join:\n");
    print_report({1, r.formation.agentCount(), rep, v, std::make_pair(i, j)});
    return rep.pass() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"formation-maneuver engine: dynamic Laplacian construction, spectral "
                 "validation, and leader-follower scaling maneuvers"};
    app.require_subcommand(1);

    auto* validate = app.add_subcommand("validate", "spectral + genericity checks, no simulation");
    std::string v_config;
    std::vector<std::string> random_kv;
    std::uint64_t v_seed = 0;
    validate->add_option("config", v_config, "scenario file (JSON)");
    validate->add_option("--random", random_kv, "generate a random scenario, e.g. --random d=3 n=10")
        ->expected(2);
    validate->add_option("--seed", v_seed, "seed for --random");

    auto* runcmd = app.add_subcommand("run", "closed-loop run with join events and artifacts");
    std::string r_config, r_out;
    double r_dt = 0.0;
    int r_sample = 0;
    std::uint64_t r_seed = 0;
    bool r_seed_set = false;
    runcmd->add_option("config", r_config, "scenario file (JSON)")->required();
    runcmd->add_option("--out", r_out, "output directory")->required();
    runcmd->add_option("--dt", r_dt, "integration step override");
    runcmd->add_option("--sample-every", r_sample, "trajectory sampling stride override");
    runcmd->add_option("--seed", r_seed, "recorded in metrics")->each([&](const std::string&) {
        r_seed_set = true;
    });

    auto* demo = app.add_subcommand("join-demo", "walk through one join step by step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed()) return do_validate(v_config, random_kv, v_seed);
        if (runcmd->parsed()) {
            ff::RunOverrides ov;
            if (r_dt > 0.0) ov.dt = r_dt;
            if (r_sample > 0) ov.sample_every = r_sample;
            if (r_seed_set) ov.seed = r_seed;
            return do_run(r_config, r_out, ov);
        }
        if (demo->parsed()) return do_join_demo();
    } catch (const ff::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ff::InstabilityError& e) {
        std::fprintf(stderr, "numerical instability: %s\n", e.what());
        return 4;
    } catch (const ff::SpectralViolationError& e) {
        std::fprintf(stderr, "spectral violation: %s\n", e.what());
        return 3;
    } catch (const ff::SingularWeightError& e) {
        std::fprintf(stderr, "protocol violation: %s\n", e.what());
        return 3;
    } catch (const ff::NoGenericPairError& e) {
        std::fprintf(stderr, "protocol violation: %s\n", e.what());
        return 3;
    } catch (const ff::NoCandidatesError& e) {
        std::fprintf(stderr, "protocol violation: %s\n", e.what());
        return 3;
    } catch (const ff::InconsistentBlocksError& e) {
        std::fprintf(stderr, "protocol violation: %s\n", e.what());
        return 3;
    } catch (const ff::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
