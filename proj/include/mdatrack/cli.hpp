#pragma once

#include "mdatrack/affinity.hpp"
#include "mdatrack/evalio.hpp"
#include "mdatrack/kvconfig.hpp"
#include "mdatrack/pipeline.hpp"
#include "mdatrack/training.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace mdt {

enum class Mode { Train, Track, Eval, Check, Synth };

Mode parse_mode(const std::string& name);
const char* mode_name(Mode mode);

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitInternal = 2;

struct RunConfig {
    Mode mode = Mode::Check;
    std::string input;  // detections (track), GT trajectories (train), hypotheses (eval)
    std::string gt;     // eval ground truth
    std::string out;
    std::optional<std::uint64_t> seed;  // overrides scenario.seed

    KeyValueConfig values;  // raw file contents
    ConnectionGateConfig gate;
    AffinityProviderParams params;  // initial (train) or tracking parameters
    PipelineConfig pipeline;
    TrainingConfig training;
    ScenarioSpec scenario;

    /// Resolves every module config from `values`. Provider parameters come from
    /// `params_file` when set, then the bare parameter keys (motion_weight, ...); the fallback is the
    /// untrained set for train and the defaults otherwise.
    static RunConfig resolve(Mode mode, KeyValueConfig values, std::string input, std::string gt, std::string out,
                             std::optional<std::uint64_t> seed);

    /// Read paths exist and the modes that write have an output path.
    void validate() const;
};

struct TrainOutcome {
    TrainingResult result;
    std::string params_path;
    std::string curve_path;
};

/// Trains on GT trajectories from `input` or, without one, on the scenario's
/// ground-truth boxes. Writes params.txt and loss.txt into `out` (a directory).
TrainOutcome cmd_train(const RunConfig& config, std::ostream& log);

/// Tracks detections from `input` (confidence quality) or the scenario's
/// detections (ground-truth quality) and writes MOT results to `out`.
std::vector<Trajectory> cmd_track(const RunConfig& config, std::ostream& log);

/// CLEAR MOT of `input` against `gt`; the table is printed and written to `out` when set.
ClearMotReport cmd_eval(const RunConfig& config, std::ostream& log);

/// Runs the verification suites; true when all pass.
bool cmd_check(const RunConfig& config, std::ostream& log);

/// Writes gt.txt and det.txt (descriptor appended) for the configured scenario into `out`.
Scenario cmd_synth(const RunConfig& config, std::ostream& log);

/// Parses flags, dispatches and maps errors to exit codes.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mdt
