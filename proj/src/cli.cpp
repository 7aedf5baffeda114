#include "mdatrack/cli.hpp"

#include "mdatrack/errors.hpp"
#include "mdatrack/suites.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace mdt {

namespace fs = std::filesystem;

Mode parse_mode(const std::string& name) {
    if (name == "train") return Mode::Train;
    if (name == "track") return Mode::Track;
    if (name == "eval") return Mode::Eval;
    if (name == "check") return Mode::Check;
    if (name == "synth") return Mode::Synth;
    throw ValidationError("unknown mode '" + name + "'");
}

const char* mode_name(Mode mode) {
    switch (mode) {
        case Mode::Train: return "train";
        case Mode::Track: return "track";
        case Mode::Eval: return "eval";
        case Mode::Check: return "check";
        case Mode::Synth: return "synth";
    }
    return "?";
}

RunConfig RunConfig::resolve(Mode mode, KeyValueConfig values, std::string input, std::string gt, std::string out,
                             std::optional<std::uint64_t> seed) {
    RunConfig rc;
    rc.mode = mode;
    rc.input = std::move(input);
    rc.gt = std::move(gt);
    rc.out = std::move(out);
    rc.seed = seed;
    rc.values = std::move(values);

    rc.gate = ConnectionGateConfig::from_config(rc.values);
    AffinityProviderParams fallback = mode == Mode::Train ? AffinityProviderParams::untrained() : AffinityProviderParams{};
    if (const auto path = rc.values.raw("params_file")) fallback = AffinityProviderParams::load_file(*path);
    rc.params = AffinityProviderParams::from_config(rc.values, fallback);
    rc.pipeline = PipelineConfig::from_config(rc.values);
    rc.training = TrainingConfig::from_config(rc.values);
    rc.scenario = ScenarioSpec::from_config(rc.values);
    if (seed) rc.scenario.seed = *seed;
    rc.scenario.validate();
    return rc;
}

void RunConfig::validate() const {
    auto must_exist = [](const std::string& path, const char* what) {
        if (!path.empty() && !fs::exists(path)) throw ValidationError(std::string(what) + " not found: " + path);
    };
    must_exist(input, "--input");
    must_exist(gt, "--gt");
    switch (mode) {
        case Mode::Eval:
            if (input.empty() || gt.empty()) throw ValidationError("eval needs --input and --gt");
            break;
        case Mode::Train:
        case Mode::Track:
        case Mode::Synth:
            if (out.empty()) throw ValidationError(std::string(mode_name(mode)) + " needs --out");
            break;
        case Mode::Check:
            break;
    }
}

namespace {

void ensure_directory(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ValidationError("cannot create output directory " + dir);
}

}  // namespace

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log) {
    std::vector<std::vector<Candidate>> frames;
    if (!config.input.empty()) {
        frames = records_to_frames(read_mot_file(config.input));
        log << "training on " << frames.size() << " frames from " << config.input << '\n';
    } else {
        frames = generate_scenario(config.scenario).truth_candidates;
        log << "training on synthetic scenario, seed " << config.scenario.seed << '\n';
    }
    TrainOutcome out;
    out.result = train(frames, config.params, config.training);
    ensure_directory(config.out);
    out.params_path = (fs::path(config.out) / "params.txt").string();
    out.curve_path = (fs::path(config.out) / "loss.txt").string();
    out.result.params.save_file(out.params_path);
    write_loss_curve(out.curve_path, out.result.loss_curve);
    log << "epochs " << out.result.loss_curve.size();
    if (!out.result.loss_curve.empty()) {
        log << ", loss " << out.result.loss_curve.front() << " -> " << out.result.loss_curve.back();
    }
    log << ", skipped windows " << out.result.skipped_windows << '\n';
    log << "wrote " << out.params_path << " and " << out.curve_path << '\n';
    return out;
}

std::vector<Trajectory> cmd_track(const RunConfig& config, std::ostream& log) {
    std::vector<Trajectory> tracks;
    if (!config.input.empty()) {
        const auto frames = load_mot(config.input);
        const ConfidenceQuality quality;
        tracks = run_sequence(frames, config.params, config.pipeline, quality);
    } else {
        const auto sc = generate_scenario(config.scenario);
        const GroundTruthQuality quality(sc.ground_truth);
        tracks = run_sequence(sc.detections, config.params, config.pipeline, quality);
    }
    if (const auto parent = fs::path(config.out).parent_path(); !parent.empty()) ensure_directory(parent.string());
    save_mot(config.out, tracks);
    log << "tracks " << tracks.size() << ", wrote " << config.out << '\n';
    return tracks;
}

ClearMotReport cmd_eval(const RunConfig& config, std::ostream& log) {
    const auto gt = records_to_trajectories(read_mot_file(config.gt));
    const auto hyp = records_to_trajectories(read_mot_file(config.input));
    const auto report = clear_mot(gt, hyp);
    const std::string table = format_report(report);
    log << table;
    if (!config.out.empty()) {
        std::ofstream f(config.out);
        if (!f) throw ValidationError("cannot write " + config.out);
        f << table;
    }
    return report;
}

bool cmd_check(const RunConfig& config, std::ostream& log) {
    (void)config;
    bool ok = true;
    for (const auto& r : check_suites()) {
        log << format_result(r) << '\n';
        ok = ok && r.passed;
    }
    return ok;
}

Scenario cmd_synth(const RunConfig& config, std::ostream& log) {
    Scenario sc = generate_scenario(config.scenario);
    ensure_directory(config.out);
    const auto gt_path = (fs::path(config.out) / "gt.txt").string();
    const auto det_path = (fs::path(config.out) / "det.txt").string();
    save_mot(gt_path, sc.ground_truth);
    auto records = candidates_to_records(sc.detections);
    for (auto& r : records) r.id = -1;
    std::ofstream det(det_path);
    if (!det) throw ValidationError("cannot write " + det_path);
    write_mot_records(det, records);
    log << "wrote " << gt_path << " (" << sc.ground_truth.size() << " targets) and " << det_path << " ("
        << records.size() << " detections)\n";
    return sc;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-dimensional assignment tracker"};
    std::string mode, config_path, input, gt, output;
    std::uint64_t seed = 0;
    app.add_option("--mode", mode, "train | track | eval | check | synth")
        ->required()
        ->check(CLI::IsMember({"train", "track", "eval", "check", "synth"}));
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--input", input, "input MOT file");
    app.add_option("--gt", gt, "ground-truth MOT file");
    app.add_option("--out", output, "output file or directory");
    auto* seed_opt = app.add_option("--seed", seed, "scenario seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitSuccess;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n';
        return kExitValidation;
    }

    try {
        KeyValueConfig values;
        if (!config_path.empty()) values = KeyValueConfig::load_file(config_path);
        std::optional<std::uint64_t> seed_value;
        if (seed_opt->count()) seed_value = seed;
        const auto rc = RunConfig::resolve(parse_mode(mode), std::move(values), input, gt, output, seed_value);
        rc.validate();
        switch (rc.mode) {
            case Mode::Train: cmd_train(rc, out); break;
            case Mode::Track: cmd_track(rc, out); break;
            case Mode::Eval: cmd_eval(rc, out); break;
            case Mode::Synth: cmd_synth(rc, out); break;
            case Mode::Check:
                if (!cmd_check(rc, out)) {
                    err << "check: at least one suite failed\n";
                    return kExitValidation;
                }
                break;
        }
        return kExitSuccess;
    } catch (const InternalInvariantError& e) {
        err << "internal invariant violated: " << e.what() << '\n';
        return kExitInternal;
    } catch (const std::exception& e) {
        err << mode << ": " << e.what() << '\n';
        return kExitValidation;
    }
}

}  // namespace mdt
