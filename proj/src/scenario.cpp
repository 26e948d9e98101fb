#include "ff/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ff/log.hpp"
#include "ff/rng.hpp"

namespace ff {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void check_keys(const json& obj, const char* ctx, std::initializer_list<const char*> known) {
    if (!obj.is_object()) throw ConfigError(std::string(ctx) + " must be an object");
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* k : known) {
            if (item.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError("unknown field '" + item.key() + "' in " + ctx);
        }
    }
}

const json& require(const json& obj, const char* key, const char* ctx) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ConfigError(std::string("missing field '") + key + "' in " + ctx);
    }
    return *it;
}

double as_number(const json& j, const std::string& ctx) {
    if (!j.is_number()) throw ConfigError(ctx + " must be a number");
    return j.get<double>();
}

int as_int(const json& j, const std::string& ctx) {
    if (!j.is_number_integer()) throw ConfigError(ctx + " must be an integer");
    return j.get<int>();
}

Eigen::VectorXd as_vector(const json& j, int len, const std::string& ctx) {
    if (!j.is_array() || static_cast<int>(j.size()) != len) {
        throw ConfigError(ctx + " must be an array of length " + std::to_string(len));
    }
    Eigen::VectorXd v(len);
    for (int k = 0; k < len; ++k) v(k) = as_number(j[k], ctx + "[" + std::to_string(k) + "]");
    return v;
}

Eigen::MatrixXd as_matrix(const json& j, int rows, int cols, const std::string& ctx) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows) {
        throw ConfigError(ctx + " must be an array of " + std::to_string(rows) + " rows");
    }
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        m.row(r) = as_vector(j[r], cols, ctx + " row " + std::to_string(r)).transpose();
    }
    return m;
}

Role as_role(const json& j, const std::string& ctx) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "leader") return Role::leader;
        if (s == "follower") return Role::follower;
    }
    throw ConfigError(ctx + " must be \"leader\" or \"follower\"");
}

Gains parse_gains(const json& j) {
    Gains g;
    check_keys(j, "gains", {"alpha1", "alpha2", "beta1", "beta2", "smoothing"});
    if (j.contains("alpha1")) g.alpha1 = as_number(j["alpha1"], "gains.alpha1");
    if (j.contains("alpha2")) g.alpha2 = as_number(j["alpha2"], "gains.alpha2");
    if (j.contains("beta1")) g.beta1 = as_number(j["beta1"], "gains.beta1");
    if (j.contains("beta2")) g.beta2 = as_number(j["beta2"], "gains.beta2");
    if (j.contains("smoothing")) {
        const auto& s = j["smoothing"];
        check_keys(s, "gains.smoothing", {"type", "width"});
        const auto type = require(s, "type", "gains.smoothing").get<std::string>();
        if (type == "none") {
            if (s.contains("width")) throw ConfigError("gains.smoothing: 'none' takes no width");
            g.boundary_layer.reset();
        } else if (type == "boundary_layer") {
            g.boundary_layer = as_number(require(s, "width", "gains.smoothing"),
                                         "gains.smoothing.width");
        } else {
            throw ConfigError("gains.smoothing.type must be \"none\" or \"boundary_layer\"");
        }
    }
    try {
        validate(g);
    } catch (const Error& e) {
        throw ConfigError(std::string("gains: ") + e.what());
    }
    return g;
}

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string format_time(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", t);
    return buf;
}

}  // namespace

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        // Translate the byte offset into a line/column position.
        std::size_t line = 1, col = 1;
        for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(path.string() + ": parse error at line " + std::to_string(line) +
                          ", column " + std::to_string(col) + ": " + e.what());
    }
    return parse_scenario(doc);
}

ScenarioConfig parse_scenario(const json& doc) {
    check_keys(doc, "scenario",
               {"dimension", "rotation", "agents", "laplacian", "schedule", "join_events",
                "gains", "dt", "duration", "sample_every", "output_dir"});

    ScenarioConfig cfg;
    cfg.dimension = as_int(require(doc, "dimension", "scenario"), "dimension");
    if (cfg.dimension <= 0) throw ConfigError("dimension must be positive");
    const int d = cfg.dimension;

    if (doc.contains("rotation")) {
        try {
            cfg.rotation = RotationMatrix(as_matrix(doc["rotation"], d, d, "rotation"));
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(std::string("rotation: ") + e.what());
        }
    } else {
        cfg.rotation = RotationMatrix::identity(d);
    }

    const auto& agents = require(doc, "agents", "scenario");
    if (!agents.is_array() || agents.empty()) throw ConfigError("agents must be a non-empty array");
    std::set<AgentId> ids;
    int leader_count = 0;
    for (const auto& a : agents) {
        check_keys(a, "agent", {"id", "nominal", "role"});
        AgentSpec spec;
        spec.id = as_int(require(a, "id", "agent"), "agent.id");
        spec.nominal = as_vector(require(a, "nominal", "agent"), d, "agent.nominal");
        spec.role = as_role(require(a, "role", "agent"), "agent.role");
        if (!ids.insert(spec.id).second) {
            throw ConfigError("duplicate agent id " + std::to_string(spec.id));
        }
        if (spec.role == Role::leader) ++leader_count;
        cfg.agents.push_back(std::move(spec));
    }
    if (leader_count == 0) throw ConfigError("at least one leader required");
    if (leader_count == static_cast<int>(cfg.agents.size())) {
        throw ConfigError("at least one follower required");
    }

    const auto& lap = require(doc, "laplacian", "scenario");
    const auto source = require(lap, "source", "laplacian").get<std::string>();
    if (source == "fixture") {
        check_keys(lap, "laplacian", {"source", "edges"});
        std::set<BlockLaplacian::EdgeKey> seen;
        for (const auto& e : require(lap, "edges", "laplacian")) {
            check_keys(e, "laplacian edge", {"a", "b", "block"});
            FixtureEdge fe;
            fe.a = as_int(require(e, "a", "edge"), "edge.a");
            fe.b = as_int(require(e, "b", "edge"), "edge.b");
            fe.block = as_matrix(require(e, "block", "edge"), d, d, "edge.block");
            if (fe.a == fe.b) throw ConfigError("edge endpoints must differ");
            if (!ids.count(fe.a) || !ids.count(fe.b)) {
                throw ConfigError("edge references unknown agent id");
            }
            if (!seen.insert(BlockLaplacian::canonicalKey(fe.a, fe.b)).second) {
                throw ConfigError("duplicate edge (" + std::to_string(fe.a) + "," +
                                  std::to_string(fe.b) + ")");
            }
            cfg.laplacian.edges.push_back(std::move(fe));
        }
    } else if (source == "incremental") {
        check_keys(lap, "laplacian", {"source", "seed", "steps"});
        cfg.laplacian.incremental = true;
        const auto& seed = require(lap, "seed", "laplacian");
        if (!seed.is_array() || seed.size() != 2) {
            throw ConfigError("laplacian.seed must list exactly two agent ids");
        }
        cfg.laplacian.seed = {as_int(seed[0], "seed[0]"), as_int(seed[1], "seed[1]")};
        std::set<AgentId> placed{cfg.laplacian.seed.first, cfg.laplacian.seed.second};
        if (cfg.laplacian.seed.first == cfg.laplacian.seed.second ||
            !ids.count(cfg.laplacian.seed.first) || !ids.count(cfg.laplacian.seed.second)) {
            throw ConfigError("laplacian.seed must name two distinct known agents");
        }
        for (const auto& s : require(lap, "steps", "laplacian")) {
            check_keys(s, "laplacian step", {"v", "i", "j", "D"});
            IncrementalStep step;
            step.v = as_int(require(s, "v", "step"), "step.v");
            step.i = as_int(require(s, "i", "step"), "step.i");
            step.j = as_int(require(s, "j", "step"), "step.j");
            step.D_diag = s.contains("D") ? as_vector(s["D"], d, "step.D")
                                          : Eigen::VectorXd::Ones(d).eval();
            if (!ids.count(step.v)) throw ConfigError("step.v references unknown agent id");
            if (placed.count(step.v)) {
                throw ConfigError("agent " + std::to_string(step.v) + " placed twice");
            }
            if (!placed.count(step.i) || !placed.count(step.j)) {
                throw ConfigError("step anchors must already be placed");
            }
            if (!(step.D_diag.array() > 0.0).all()) {
                throw ConfigError("step.D must be strictly positive");
            }
            placed.insert(step.v);
            cfg.laplacian.steps.push_back(std::move(step));
        }
        if (placed.size() != ids.size()) {
            throw ConfigError("incremental steps must place every agent");
        }
    } else {
        throw ConfigError("laplacian.source must be \"fixture\" or \"incremental\"");
    }

    if (doc.contains("schedule")) {
        for (const auto& p : doc["schedule"]) {
            check_keys(p, "schedule phase",
                       {"t_start", "t_end", "s_start", "s_end", "tau_start", "tau_end"});
            SchedulePhase ph;
            ph.t_start = as_number(require(p, "t_start", "phase"), "phase.t_start");
            ph.t_end = as_number(require(p, "t_end", "phase"), "phase.t_end");
            ph.s_start = as_vector(require(p, "s_start", "phase"), d, "phase.s_start");
            ph.s_end = as_vector(require(p, "s_end", "phase"), d, "phase.s_end");
            ph.tau_start = as_vector(require(p, "tau_start", "phase"), d, "phase.tau_start");
            ph.tau_end = as_vector(require(p, "tau_end", "phase"), d, "phase.tau_end");
            cfg.schedule.push_back(std::move(ph));
        }
        try {
            ManeuverSchedule check(d, cfg.schedule);
        } catch (const Error& e) {
            throw ConfigError(std::string("schedule: ") + e.what());
        }
    }

    if (doc.contains("dt")) cfg.dt = as_number(doc["dt"], "dt");
    if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
    cfg.duration = as_number(require(doc, "duration", "scenario"), "duration");
    if (!(cfg.duration > 0.0)) throw ConfigError("duration must be positive");
    if (doc.contains("sample_every")) cfg.sample_every = as_int(doc["sample_every"], "sample_every");
    if (cfg.sample_every < 1) throw ConfigError("sample_every must be at least 1");
    if (doc.contains("output_dir")) cfg.output_dir = doc["output_dir"].get<std::string>();
    if (doc.contains("gains")) cfg.gains = parse_gains(doc["gains"]);

    if (doc.contains("join_events")) {
        std::set<AgentId> join_ids;
        for (const auto& e : doc["join_events"]) {
            check_keys(e, "join event",
                       {"time", "id", "nominal", "D", "sensing_radius", "spawn_offset"});
            JoinEventSpec ev;
            ev.time = as_number(require(e, "time", "join event"), "join.time");
            ev.id = as_int(require(e, "id", "join event"), "join.id");
            ev.nominal = as_vector(require(e, "nominal", "join event"), d, "join.nominal");
            ev.D_diag = e.contains("D") ? as_vector(e["D"], d, "join.D")
                                        : Eigen::VectorXd::Ones(d).eval();
            ev.sensing_radius =
                as_number(require(e, "sensing_radius", "join event"), "join.sensing_radius");
            if (e.contains("spawn_offset")) {
                ev.spawn_offset = as_vector(e["spawn_offset"], d, "join.spawn_offset");
            } else {
                ev.spawn_offset = Eigen::VectorXd::Zero(d);
                ev.spawn_offset(0) = 0.3;
            }
            if (ev.time < 0.0 || ev.time > cfg.duration) {
                throw ConfigError("join time " + format_time(ev.time) +
                                  " outside [0, duration]");
            }
            if (ids.count(ev.id) || !join_ids.insert(ev.id).second) {
                throw ConfigError("join id " + std::to_string(ev.id) + " is not fresh");
            }
            if (!(ev.sensing_radius > 0.0)) throw ConfigError("sensing_radius must be positive");
            if (!(ev.D_diag.array() > 0.0).all()) throw ConfigError("join.D must be positive");
            cfg.join_events.push_back(std::move(ev));
        }
        std::stable_sort(cfg.join_events.begin(), cfg.join_events.end(),
                         [](const JoinEventSpec& a, const JoinEventSpec& b) {
                             return a.time < b.time;
                         });
    }
    return cfg;
}

nlohmann::ordered_json scenario_to_json(const ScenarioConfig& cfg) {
    ordered_json j;
    j["dimension"] = cfg.dimension;
    auto rot = ordered_json::array();
    for (int r = 0; r < cfg.dimension; ++r) {
        auto row = ordered_json::array();
        for (int c = 0; c < cfg.dimension; ++c) row.push_back(cfg.rotation.entries()(r, c));
        rot.push_back(std::move(row));
    }
    j["rotation"] = std::move(rot);
    auto agents = ordered_json::array();
    for (const auto& a : cfg.agents) {
        ordered_json ja;
        ja["id"] = a.id;
        ja["nominal"] = std::vector<double>(a.nominal.data(), a.nominal.data() + a.nominal.size());
        ja["role"] = to_string(a.role);
        agents.push_back(std::move(ja));
    }
    j["agents"] = std::move(agents);

    ordered_json lap;
    if (cfg.laplacian.incremental) {
        lap["source"] = "incremental";
        lap["seed"] = {cfg.laplacian.seed.first, cfg.laplacian.seed.second};
        auto steps = ordered_json::array();
        for (const auto& s : cfg.laplacian.steps) {
            ordered_json js;
            js["v"] = s.v;
            js["i"] = s.i;
            js["j"] = s.j;
            js["D"] = std::vector<double>(s.D_diag.data(), s.D_diag.data() + s.D_diag.size());
            steps.push_back(std::move(js));
        }
        lap["steps"] = std::move(steps);
    } else {
        lap["source"] = "fixture";
        auto edges = ordered_json::array();
        for (const auto& e : cfg.laplacian.edges) {
            ordered_json je;
            je["a"] = e.a;
            je["b"] = e.b;
            auto rows = ordered_json::array();
            for (int r = 0; r < e.block.rows(); ++r) {
                auto row = ordered_json::array();
                for (int c = 0; c < e.block.cols(); ++c) row.push_back(e.block(r, c));
                rows.push_back(std::move(row));
            }
            je["block"] = std::move(rows);
            edges.push_back(std::move(je));
        }
        lap["edges"] = std::move(edges);
    }
    j["laplacian"] = std::move(lap);

    auto sched = ordered_json::array();
    for (const auto& p : cfg.schedule) {
        ordered_json jp;
        jp["t_start"] = p.t_start;
        jp["t_end"] = p.t_end;
        jp["s_start"] = std::vector<double>(p.s_start.data(), p.s_start.data() + p.s_start.size());
        jp["s_end"] = std::vector<double>(p.s_end.data(), p.s_end.data() + p.s_end.size());
        jp["tau_start"] =
            std::vector<double>(p.tau_start.data(), p.tau_start.data() + p.tau_start.size());
        jp["tau_end"] = std::vector<double>(p.tau_end.data(), p.tau_end.data() + p.tau_end.size());
        sched.push_back(std::move(jp));
    }
    j["schedule"] = std::move(sched);

    auto joins = ordered_json::array();
    for (const auto& e : cfg.join_events) {
        ordered_json je;
        je["time"] = e.time;
        je["id"] = e.id;
        je["nominal"] = std::vector<double>(e.nominal.data(), e.nominal.data() + e.nominal.size());
        je["D"] = std::vector<double>(e.D_diag.data(), e.D_diag.data() + e.D_diag.size());
        je["sensing_radius"] = e.sensing_radius;
        je["spawn_offset"] = std::vector<double>(e.spawn_offset.data(),
                                                 e.spawn_offset.data() + e.spawn_offset.size());
        joins.push_back(std::move(je));
    }
    j["join_events"] = std::move(joins);

    ordered_json gains;
    gains["alpha1"] = cfg.gains.alpha1;
    gains["alpha2"] = cfg.gains.alpha2;
    gains["beta1"] = cfg.gains.beta1;
    gains["beta2"] = cfg.gains.beta2;
    if (cfg.gains.boundary_layer) {
        gains["smoothing"] = {{"type", "boundary_layer"}, {"width", *cfg.gains.boundary_layer}};
    } else {
        gains["smoothing"] = {{"type", "none"}};
    }
    j["gains"] = std::move(gains);
    j["dt"] = cfg.dt;
    j["duration"] = cfg.duration;
    j["sample_every"] = cfg.sample_every;
    j["output_dir"] = cfg.output_dir;
    return j;
}

std::pair<BlockLaplacian, NominalFormation> initial_laplacian(const ScenarioConfig& cfg) {
    const int d = cfg.dimension;
    std::vector<AgentId> ids;
    Eigen::VectorXd pt(static_cast<Eigen::Index>(d) * cfg.agents.size());
    std::set<AgentId> leaders;
    for (std::size_t k = 0; k < cfg.agents.size(); ++k) {
        ids.push_back(cfg.agents[k].id);
        pt.segment(static_cast<Eigen::Index>(d) * k, d) = cfg.agents[k].nominal;
        if (cfg.agents[k].role == Role::leader) leaders.insert(cfg.agents[k].id);
    }
    NominalFormation F(d, ids, std::move(pt), cfg.rotation, std::move(leaders));

    if (!cfg.laplacian.incremental) {
        BlockLaplacian::EdgeMap edges;
        for (const auto& e : cfg.laplacian.edges) {
            const auto key = BlockLaplacian::canonicalKey(e.a, e.b);
            edges.emplace(key, e.a < e.b ? e.block : Eigen::MatrixXd(e.block.transpose()));
        }
        return {BlockLaplacian(d, ids, std::move(edges)), std::move(F)};
    }

    SeedPair seed;
    seed.a = cfg.laplacian.seed.first;
    seed.b = cfg.laplacian.seed.second;
    seed.a_pos = F.nominalOf(seed.a);
    seed.b_pos = F.nominalOf(seed.b);
    std::vector<BuildStep> steps;
    for (const auto& s : cfg.laplacian.steps) {
        steps.push_back(BuildStep{s.v, F.nominalOf(s.v), s.i, s.j, DesignWeight(s.D_diag)});
    }
    auto [L, built_F] = build_incremental(d, cfg.rotation, seed, steps);
    // Same edge set, re-indexed to the configured agent order and roles.
    return {BlockLaplacian(d, ids, L.edges()), std::move(F)};
}

nlohmann::ordered_json report_to_json(const SpectralReport& rep) {
    ordered_json j;
    j["psd"] = rep.psd;
    j["min_eig"] = rep.min_eig;
    j["kernel_dim"] = rep.kernel_dim;
    j["kernel_matches_shape_space"] = rep.kernel_matches_shape_space;
    j["max_principal_angle"] = rep.max_principal_angle;
    j["lff_min_eig"] = std::isfinite(rep.lff_min_eig) ? json(rep.lff_min_eig) : json("inf");
    j["rank"] = rep.rank;
    j["pass"] = rep.pass();
    return j;
}

std::vector<EpochRecord> validate_scenario(const ScenarioConfig& cfg) {
    auto [L, F] = initial_laplacian(cfg);
    std::vector<EpochRecord> records;
    records.push_back({0, F.agentCount(), validate_spectral(L, F), std::nullopt, std::nullopt});
    log::info("epoch 0: " + std::to_string(F.agentCount()) + " agents, pass=" +
              (records.back().report.pass() ? std::string("yes") : std::string("no")));

    int epoch = 0;
    for (const auto& ev : cfg.join_events) {
        const auto world = world_from_laplacian(L, F);
        const auto cand_ids = discover_candidates(ev.nominal, world, ev.sensing_radius);
        if (cand_ids.size() < 2) {
            throw NoCandidatesError("join of agent " + std::to_string(ev.id) + ": " +
                                    std::to_string(cand_ids.size()) + " candidate(s) in range");
        }
        std::vector<CandidateInfo> cands;
        for (AgentId id : cand_ids) {
            cands.push_back({id, F.nominalOf(id), F.isLeader(id) ? Role::leader : Role::follower});
        }
        const auto [i, j] = select_pair(cands, ev.nominal, cfg.rotation, -1.0);
        auto result = join_update(L, F, ev.id, ev.nominal, i, j, DesignWeight(ev.D_diag));
        L = std::move(result.laplacian);
        F = std::move(result.formation);
        ++epoch;
        records.push_back({epoch, F.agentCount(), validate_spectral(L, F), ev.id,
                           std::make_pair(i, j)});
        log::info("epoch " + std::to_string(epoch) + ": agent " + std::to_string(ev.id) +
                  " joins via (" + std::to_string(i) + "," + std::to_string(j) + "), pass=" +
                  (records.back().report.pass() ? std::string("yes") : std::string("no")));
    }
    return records;
}

namespace {

ordered_json epoch_line(const EpochRecord& rec) {
    ordered_json j;
    j["type"] = "epoch";
    j["epoch"] = rec.epoch;
    j["agents"] = rec.agents;
    if (rec.joined) j["joined"] = *rec.joined;
    if (rec.anchors) j["anchors"] = {rec.anchors->first, rec.anchors->second};
    j["report"] = report_to_json(rec.report);
    return j;
}

}  // namespace

RunArtifacts run(const ScenarioConfig& cfg_in, const std::filesystem::path& out_dir,
                 const RunOverrides& overrides) {
    ScenarioConfig cfg = cfg_in;
    if (overrides.dt) {
        if (!(*overrides.dt > 0.0)) throw ConfigError("dt override must be positive");
        cfg.dt = *overrides.dt;
    }
    if (overrides.sample_every) {
        if (*overrides.sample_every < 1) throw ConfigError("sample_every override must be >= 1");
        cfg.sample_every = *overrides.sample_every;
    }

    std::filesystem::create_directories(out_dir);
    RunArtifacts art;
    art.trajectory_csv = out_dir / "trajectory.csv";
    art.events_jsonl = out_dir / "events.jsonl";
    art.metrics_json = out_dir / "metrics.json";

    auto [L, F] = initial_laplacian(cfg);
    const SpectralReport rep0 = validate_spectral(L, F);
    if (!rep0.pass()) {
        throw SpectralViolationError("epoch 0 fails the spectral conditions", 0);
    }
    art.epochs.push_back({0, F.agentCount(), rep0, std::nullopt, std::nullopt});

    std::ofstream events(art.events_jsonl);
    if (!events) throw Error("cannot write " + art.events_jsonl.string());
    events << epoch_line(art.epochs.back()).dump() << '\n';

    auto write_snapshot = [&](int epoch, const BlockLaplacian& lap) {
        const auto path = out_dir / ("laplacian_epoch" + std::to_string(epoch) + ".json");
        std::ofstream snap(path);
        if (!snap) throw Error("cannot write " + path.string());
        snap << laplacian_to_json(lap).dump(2) << '\n';
        art.laplacian_snapshots.push_back(path);
    };
    write_snapshot(0, L);

    const ManeuverSchedule sched(cfg.dimension, cfg.schedule);
    SimState state = make_sim_state(F, L, world_from_laplacian(L, F), F.stackedNominal(), sched);

    std::ofstream traj(art.trajectory_csv);
    if (!traj) throw Error("cannot write " + art.trajectory_csv.string());
    traj << "t,agent";
    for (int l = 1; l <= cfg.dimension; ++l) traj << ",x" << l;
    traj << '\n';
    auto write_sample = [&]() {
        const int d = cfg.dimension;
        for (int k = 0; k < state.formation.agentCount(); ++k) {
            traj << format_time(state.t) << ',' << state.formation.agentIds()[k];
            for (int l = 0; l < d; ++l) {
                traj << ',' << format_double(state.positions(static_cast<Eigen::Index>(d) * k + l));
            }
            traj << '\n';
        }
    };

    const auto nsteps = static_cast<long>(std::llround(cfg.duration / cfg.dt));
    std::size_t next_event = 0;
    Bus bus;
    log::info("run: " + std::to_string(nsteps) + " steps, " +
              std::to_string(cfg.join_events.size()) + " join event(s)");

    for (long k = 0; k <= nsteps; ++k) {
        while (next_event < cfg.join_events.size() &&
               cfg.join_events[next_event].time <= state.t + cfg.dt / 2.0) {
            const auto& ev = cfg.join_events[next_event];
            bus.setTime(state.t);
            bus.clearTrace();

            AgentState seed;
            seed.id = ev.id;
            seed.nominal_pos = ev.nominal;
            seed.role = Role::follower;
            JoinOutcome outcome = execute_join(bus, state.world, cfg.rotation, seed,
                                               DesignWeight(ev.D_diag), ev.sensing_radius);

            // Cross-check the distributed result against the centralized update.
            JoinResult central = join_update(state.laplacian, state.formation, ev.id, ev.nominal,
                                             outcome.anchor_i, outcome.anchor_j,
                                             DesignWeight(ev.D_diag));
            BlockLaplacian distributed = assemble_global(outcome.world);
            const double gap =
                (distributed.assemble() - central.laplacian.assemble()).cwiseAbs().maxCoeff();
            if (gap > 1e-12) {
                throw InconsistentBlocksError(
                    "distributed and centralized joins disagree by " + format_double(gap));
            }

            const int epoch = static_cast<int>(art.epochs.size());
            const SpectralReport rep = validate_spectral(distributed, central.formation);
            if (!rep.pass()) {
                throw SpectralViolationError(
                    "epoch " + std::to_string(epoch) + " fails the spectral conditions", epoch);
            }

            events << trace_to_jsonl(bus.trace());
            art.epochs.push_back({epoch, central.formation.agentCount(), rep, ev.id,
                                  std::make_pair(outcome.anchor_i, outcome.anchor_j)});
            events << epoch_line(art.epochs.back()).dump() << '\n';
            write_snapshot(epoch, distributed);
            log::info("t=" + format_time(state.t) + ": agent " + std::to_string(ev.id) +
                      " joined via (" + std::to_string(outcome.anchor_i) + "," +
                      std::to_string(outcome.anchor_j) + ")");

            // Extend the running state: the newcomer spawns near its current
            // maneuver reference, displaced by the configured offset.
            const auto [p_star, dp_star] = reference(ev.nominal, sched, cfg.rotation, state.t);
            Eigen::VectorXd positions(state.positions.size() + cfg.dimension);
            positions << state.positions, p_star + ev.spawn_offset;
            state.formation = central.formation;
            state.laplacian = std::move(distributed);
            state.world = std::move(outcome.world);
            state.positions = std::move(positions);
            const TrackingError te = tracking_error(state, sched);
            state.log.push_back({state.t, state.positions, te.per_agent, te.max_error});
            ++next_event;
        }
        if (k < nsteps && k % cfg.sample_every == 0) write_sample();
        if (k == nsteps) break;
        state = step(std::move(state), sched, cfg.gains, cfg.dt);
    }

    const TrackingError final_err = tracking_error(state, sched);
    art.final_max_error = final_err.max_error;
    art.log = std::move(state.log);

    // Metrics: echoed config, per-phase maxima, per-epoch reports.
    ordered_json metrics;
    metrics["scenario"] = scenario_to_json(cfg);
    ordered_json ov;
    ov["dt"] = overrides.dt ? json(*overrides.dt) : json(nullptr);
    ov["sample_every"] = overrides.sample_every ? json(*overrides.sample_every) : json(nullptr);
    ov["seed"] = overrides.seed ? json(*overrides.seed) : json(nullptr);
    metrics["overrides"] = std::move(ov);

    std::vector<double> bounds{0.0};
    for (const auto& ph : cfg.schedule) {
        bounds.push_back(std::clamp(ph.t_start, 0.0, cfg.duration));
        bounds.push_back(std::clamp(ph.t_end, 0.0, cfg.duration));
    }
    bounds.push_back(cfg.duration);
    std::sort(bounds.begin(), bounds.end());
    bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
    auto phases = ordered_json::array();
    for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
        double max_err = 0.0;
        const bool last = k + 2 == bounds.size();
        for (const auto& row : art.log) {
            if (row.t >= bounds[k] && (row.t < bounds[k + 1] || (last && row.t <= bounds[k + 1]))) {
                max_err = std::max(max_err, row.max_error);
            }
        }
        ordered_json jp;
        jp["t_start"] = bounds[k];
        jp["t_end"] = bounds[k + 1];
        jp["max_tracking_error"] = max_err;
        phases.push_back(std::move(jp));
    }
    metrics["phases"] = std::move(phases);

    auto epochs = ordered_json::array();
    for (const auto& rec : art.epochs) epochs.push_back(epoch_line(rec));
    metrics["epochs"] = std::move(epochs);
    metrics["final_max_error"] = art.final_max_error;

    std::ofstream mj(art.metrics_json);
    if (!mj) throw Error("cannot write " + art.metrics_json.string());
    mj << metrics.dump(2) << '\n';
    mj.flush();
    events.flush();
    traj.flush();
    return art;
}

ScenarioConfig random_scenario(int d, int n, std::uint64_t seed) {
    if (d < 1 || n < 3) throw ConfigError("random scenario needs d >= 1 and n >= 3");
    Rng rng(seed);
    auto sample_pos = [&]() {
        Eigen::VectorXd p(d);
        for (int l = 0; l < d; ++l) p(l) = rng.uniform(-5.0, 5.0);
        return p;
    };
    const RotationMatrix R = RotationMatrix::identity(d);

    ScenarioConfig cfg;
    cfg.dimension = d;
    cfg.rotation = R;

    std::vector<Eigen::VectorXd> pos;
    pos.push_back(sample_pos());
    int attempts = 0;
    for (;;) {
        Eigen::VectorXd second = sample_pos();
        if (genericity_check(pos[0], second, R, 0.1)) {
            pos.push_back(std::move(second));
            break;
        }
        if (++attempts >= 100) throw Error("random_scenario: no generic seed pair in 100 attempts");
    }
    cfg.laplacian.incremental = true;
    cfg.laplacian.seed = {1, 2};

    // Anchors follow the protocol's pair selection: the most-generic pair
    // keeps the incremental spectrum well conditioned.
    for (int k = 3; k <= n; ++k) {
        pos.push_back(sample_pos());
        std::vector<CandidateInfo> cands;
        for (int a = 1; a < k; ++a) cands.push_back({a, pos[a - 1], Role::follower});
        const auto [i, j] = select_pair(cands, pos[k - 1], R, -1.0);
        cfg.laplacian.steps.push_back({k, i, j, Eigen::VectorXd::Ones(d)});
    }
    for (int k = 1; k <= n; ++k) {
        cfg.agents.push_back({k, pos[k - 1], k <= 2 ? Role::leader : Role::follower});
    }

    SchedulePhase ph;
    ph.t_start = 0.2;
    ph.t_end = 0.8;
    ph.s_start = Eigen::VectorXd::Ones(d);
    ph.s_end.resize(d);
    for (int l = 0; l < d; ++l) ph.s_end(l) = rng.uniform(0.6, 1.4);
    ph.tau_start = Eigen::VectorXd::Zero(d);
    ph.tau_end.resize(d);
    for (int l = 0; l < d; ++l) ph.tau_end(l) = rng.uniform(-1.0, 1.0);
    cfg.schedule.push_back(std::move(ph));

    cfg.duration = 1.0;
    return cfg;
}

}  // namespace ff
