#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ff/controller.hpp"

namespace ff {

struct AgentSpec {
    AgentId id = 0;
    Eigen::VectorXd nominal;
    Role role = Role::follower;
};

struct FixtureEdge {
    AgentId a = 0;
    AgentId b = 0;
    Eigen::MatrixXd block;
};

struct IncrementalStep {
    AgentId v = 0;
    AgentId i = 0;
    AgentId j = 0;
    Eigen::VectorXd D_diag;
};

/// Epoch-0 Laplacian source: either explicit edge blocks or a seeded
/// incremental construction over the listed agents.
struct LaplacianSource {
    bool incremental = false;
    std::vector<FixtureEdge> edges;          // fixture form
    std::pair<AgentId, AgentId> seed{0, 0};  // incremental form
    std::vector<IncrementalStep> steps;
};

struct JoinEventSpec {
    double time = 0.0;
    AgentId id = 0;
    Eigen::VectorXd nominal;
    Eigen::VectorXd D_diag;
    double sensing_radius = 0.0;
    Eigen::VectorXd spawn_offset;
};

struct ScenarioConfig {
    int dimension = 0;
    RotationMatrix rotation = RotationMatrix::identity(1);
    std::vector<AgentSpec> agents;
    LaplacianSource laplacian;
    std::vector<SchedulePhase> schedule;
    std::vector<JoinEventSpec> join_events;
    Gains gains;
    double dt = 1e-3;
    double duration = 0.0;
    int sample_every = 10;
    std::string output_dir = "out";
};

/// Parse and semantically validate. Unknown fields are rejected; optional
/// fields receive the documented defaults.
ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig parse_scenario(const nlohmann::json& doc);

/// The fully-defaulted form recorded alongside run artifacts.
nlohmann::ordered_json scenario_to_json(const ScenarioConfig& cfg);

/// Epoch-0 Laplacian and formation per the config's source.
std::pair<BlockLaplacian, NominalFormation> initial_laplacian(const ScenarioConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    int agents = 0;
    SpectralReport report;
    std::optional<AgentId> joined;
    std::optional<std::pair<AgentId, AgentId>> anchors;
};

/// Spectral and genericity checks over the nominal data: epoch 0 plus a
/// dry-run of every join event. No integration.
std::vector<EpochRecord> validate_scenario(const ScenarioConfig& cfg);

struct RunArtifacts {
    std::filesystem::path trajectory_csv;
    std::filesystem::path events_jsonl;
    std::filesystem::path metrics_json;
    std::vector<std::filesystem::path> laplacian_snapshots;
    std::vector<EpochRecord> epochs;
    std::vector<LogRow> log;  // per-step time series (final epoch sizes vary)
    double final_max_error = 0.0;
};

struct RunOverrides {
    std::optional<double> dt;
    std::optional<int> sample_every;
    std::optional<std::uint64_t> seed;  // recorded in metrics
};

/// Full closed-loop run: integrate, execute join events over the bus,
/// re-validate the spectrum each epoch, and emit all artifacts under out_dir.
RunArtifacts run(const ScenarioConfig& cfg, const std::filesystem::path& out_dir,
                 const RunOverrides& overrides = {});

/// Random generic scenario (incremental source, n agents in dimension d).
/// Resamples configurations that fail the genericity condition, up to 100
/// attempts per step.
ScenarioConfig random_scenario(int d, int n, std::uint64_t seed);

nlohmann::ordered_json report_to_json(const SpectralReport& rep);

}  // namespace ff
