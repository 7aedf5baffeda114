#include "mdatrack/errors.hpp"
#include "mdatrack/evalio.hpp"
#include "mdatrack/oracle.hpp"
#include "mdatrack/training.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace mdt;
using mdt::test::at;

namespace {

std::vector<std::vector<Candidate>> clean_truth(std::uint64_t seed, std::size_t frames, std::size_t targets) {
    ScenarioSpec s;
    s.frame_count = frames;
    s.target_count = targets;
    s.seed = seed;
    return generate_scenario(s).truth_candidates;
}

AssociationBatch labelled_window(std::mt19937_64& rng, std::size_t targets) {
    std::uniform_real_distribution<double> pos(0, 80), step(-4, 4), jitter(-1, 1);
    std::vector<std::vector<Candidate>> lists(3);
    for (std::size_t t = 0; t < targets; ++t) {
        const double x = pos(rng), y = pos(rng), vx = step(rng), vy = step(rng);
        const auto feat = test::uniform_vector(rng, 4, -1, 1);
        for (std::size_t f = 0; f < 3; ++f) {
            const double k = static_cast<double>(f);
            auto noisy = feat;
            for (auto& v : noisy) v += 0.1 * jitter(rng);
            lists[f].push_back(at(f, x + k * vx + jitter(rng), y + k * vy + jitter(rng), 12 + jitter(rng),
                                  24 + jitter(rng), noisy, static_cast<int>(t)));
        }
    }
    // shuffle the order inside each frame so labels, not positions, carry identity
    for (auto& l : lists) std::shuffle(l.begin(), l.end(), rng);
    return AssociationBatch({0, 1, 2}, lists);
}

}  // namespace

TEST_CASE("label assignments mark equal non-negative labels") {
    const auto batch = AssociationBatch(
        {0, 1, 2}, {{at(0, 0, 0, 10, 20, {}, 1), at(0, 50, 0, 10, 20, {}, 2), at(0, 90, 0, 10, 20, {}, -1)},
                    {at(1, 50, 0, 10, 20, {}, 2), at(1, 0, 0, 10, 20, {}, 1)},
                    {at(2, 0, 0, 10, 20, {}, 1), at(2, 90, 0, 10, 20, {}, -1)}});
    const auto m = label_assignments(batch);
    REQUIRE(m.size() == 2);
    Matrix first(3, 2);
    first.values = {0, 1, 1, 0, 0, 0};
    Matrix second(2, 2);
    second.values = {0, 0, 1, 0};
    CHECK(m[0] == first);
    CHECK(m[1] == second);
}

TEST_CASE("window loss gradient matches central differences") {
    std::mt19937_64 rng(8);
    TrainingConfig cfg;
    cfg.solver = {3, 3, true};
    cfg.gate.base_distance_factor = 3.0;
    std::size_t checked = 0;
    for (int trial = 0; trial < 15; ++trial) {
        const auto batch = labelled_window(rng, 2 + trial % 3);
        auto p = AffinityProviderParams::untrained();
        const auto r = test::uniform_vector(rng, 5, 0.2, 1.5);
        p = AffinityProviderParams::from_array({r[0], 10 * r[1], r[2], r[3], r[4]});
        const auto wl = window_loss(batch, p, cfg);
        REQUIRE(wl);
        const auto x0 = p.as_array();
        const auto fd = oracle::finite_diff_grad(
            [&](std::span<const double> x) {
                std::array<double, 5> v;
                std::copy(x.begin(), x.end(), v.begin());
                return window_loss(batch, AffinityProviderParams::from_array(v), cfg)->loss;
            },
            x0);
        for (std::size_t i = 0; i < 5; ++i) {
            INFO("trial " << trial << " param " << AffinityProviderParams::names()[i]);
            CHECK(oracle::gradients_agree(wl->gradient[i], fd[i], 1e-4, 1e-7));
            ++checked;
        }
    }
    CHECK(checked == 75);
}

TEST_CASE("window loss preconditions") {
    const TrainingConfig cfg;
    auto f1 = std::vector{at(1, 0, 0)};
    f1.push_back(Candidate::virtual_slot(1));
    CHECK_THROWS_AS(window_loss(AssociationBatch({0, 1, 2}, {{at(0, 0, 0)}, f1, {at(2, 0, 0)}}), {}, cfg),
                    ContractError);
    CHECK_FALSE(window_loss(AssociationBatch({0, 1, 2}, {{at(0, 0, 0)}, {}, {at(2, 0, 0)}}), {}, cfg));
    // far apart beyond every relaxation: no hypotheses
    CHECK_FALSE(window_loss(AssociationBatch({0, 1, 2}, {{at(0, 0, 0)}, {at(1, 500, 0)}, {at(2, 0, 0)}}), {}, cfg));
}

TEST_CASE("zero learning rate keeps the loss curve flat") {
    TrainingConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 4;
    const auto frames = clean_truth(3, 8, 4);
    const auto r = train(frames, AffinityProviderParams::untrained(), cfg);
    REQUIRE(r.loss_curve.size() == 4);
    for (double v : r.loss_curve) CHECK(v == r.loss_curve.front());
    CHECK(r.params == AffinityProviderParams::untrained());
}

TEST_CASE("training is deterministic") {
    TrainingConfig cfg;
    cfg.epochs = 5;
    const auto frames = clean_truth(4, 10, 5);
    const auto a = train(frames, AffinityProviderParams::untrained(), cfg);
    const auto b = train(frames, AffinityProviderParams::untrained(), cfg);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.params == b.params);
}

TEST_CASE("clean training set halves the loss") {
    TrainingConfig cfg;
    const auto frames = clean_truth(1, 20, 10);
    const auto r = train(frames, AffinityProviderParams::untrained(), cfg);
    REQUIRE(r.loss_curve.size() == 50);
    CHECK(r.loss_curve.back() < 0.5 * r.loss_curve.front());
    for (double v : r.params.as_array()) CHECK(v >= 0.0);
    CHECK(r.params.position_scale > 0.0);
}

TEST_CASE("training rejects short sequences and bad config") {
    CHECK_THROWS_AS(train(clean_truth(1, 2, 2), {}, {}), ValidationError);
    KeyValueConfig bad;
    bad.set_double("train.lr", -1.0);
    CHECK_THROWS_AS(TrainingConfig::from_config(bad), ValidationError);

    KeyValueConfig cfg;
    cfg.set_double("train.lr", 0.01);
    cfg.set_int("train.epochs", 3);
    cfg.set_int("solver.N", 4);
    const auto t = TrainingConfig::from_config(cfg);
    CHECK(t.learning_rate == 0.01);
    CHECK(t.epochs == 3);
    CHECK(t.solver.power_iterations == 4);
    CHECK(t.solver.normalization_pairs == 10);
}

TEST_CASE("loss curve file lists one line per epoch") {
    const auto path = (std::filesystem::temp_directory_path() / "mdt_loss_curve.txt").string();
    write_loss_curve(path, {0.5, 0.25, 0.125});
    std::ifstream in(path);
    std::string header, line;
    std::getline(in, header);
    CHECK(header[0] == '#');
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    CHECK(lines == std::vector<std::string>{"0 0.5", "1 0.25", "2 0.125"});
    std::filesystem::remove(path);
}
