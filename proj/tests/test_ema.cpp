#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "xdcl/ema.hpp"
#include "xdcl/error.hpp"

using namespace xdcl;
using namespace xdcl::testing;

namespace {

Model tiny_model(std::uint64_t seed, std::size_t classes = 2) {
    BackboneConfig config;
    config.input_dim = 3;
    config.hidden_dims = {4};
    config.feature_dim = 2;
    config.seed = seed;
    Model model;
    model.backbone = backbone_init(config);
    model.head = head_expand(make_head(HeadKind::mahalanobis, 2, 2), classes, seed + 1);
    return model;
}

bool models_equal(const Model& a, const Model& b) {
    for (std::size_t l = 0; l < a.backbone.weights.size(); ++l) {
        for (std::size_t i = 0; i < a.backbone.weights[l].size(); ++i) {
            if (a.backbone.weights[l].values()[i] != b.backbone.weights[l].values()[i]) return false;
        }
        for (std::size_t i = 0; i < a.backbone.biases[l].size(); ++i) {
            if (a.backbone.biases[l].values()[i] != b.backbone.biases[l].values()[i]) return false;
        }
    }
    if (a.head.num_classes() != b.head.num_classes()) return false;
    for (std::size_t c = 0; c < a.head.num_classes(); ++c) {
        for (std::size_t i = 0; i < a.head.metrics[c].L.size(); ++i) {
            if (a.head.metrics[c].L.values()[i] != b.head.metrics[c].L.values()[i]) return false;
        }
        for (std::size_t i = 0; i < a.head.metrics[c].b.size(); ++i) {
            if (a.head.metrics[c].b.values()[i] != b.head.metrics[c].b.values()[i]) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("snapshot_teacher: bitwise copy, later mutation isolated") {
    Model current = tiny_model(5);
    Model teacher = snapshot_teacher(current);
    CHECK(models_equal(current, teacher));

    const double before = teacher.backbone.weights[0].values()[0];
    current.backbone.weights[0].values()[0] += 1.0;
    current.head.metrics[0].b.values()[0] = 9.0;
    CHECK(teacher.backbone.weights[0].values()[0] == before);
    CHECK(teacher.head.metrics[0].b.values()[0] == 0.0);
    CHECK_FALSE(models_equal(current, teacher));
}

TEST_CASE("ema_update: gamma 1 freezes, gamma 0 copies") {
    ModelPair pair;
    pair.current = tiny_model(7);
    pair.teacher = snapshot_teacher(pair.current);
    pair.current.backbone.weights[0].values()[0] += 2.5;
    pair.current.head.metrics[1].L.values()[0] = -3.0;

    Model frozen = snapshot_teacher(*pair.teacher);
    pair.gamma = 1.0;
    ema_update(pair);
    CHECK(models_equal(*pair.teacher, frozen));

    pair.gamma = 0.0;
    ema_update(pair);
    CHECK(models_equal(*pair.teacher, pair.current));
}

TEST_CASE("ema_update: geometric recursion 1 - gamma^k with fixed current") {
    ModelPair pair;
    pair.current = tiny_model(11);
    pair.teacher = snapshot_teacher(pair.current);
    pair.gamma = 0.96;

    // teacher parameter 0, current 1
    Tensor teacher_w = pair.teacher->backbone.weights[0];
    Tensor current_w = pair.current.backbone.weights[0];
    teacher_w.values()[0] = 0.0;
    current_w.values()[0] = 1.0;

    ema_update(pair);
    CHECK(teacher_w.values()[0] == doctest::Approx(0.04).epsilon(1e-15));
    for (int k = 2; k <= 50; ++k) {
        ema_update(pair);
        const double expected = 1.0 - std::pow(0.96, k);
        CHECK(close_rel(teacher_w.values()[0], expected, 1e-12));
    }
}

TEST_CASE("ema_update: convexity and fixed point") {
    std::mt19937_64 rng(13);
    ModelPair pair;
    pair.current = tiny_model(17);
    pair.teacher = snapshot_teacher(pair.current);
    pair.gamma = 0.7;

    // distinct teacher and current values
    for (auto& w : pair.current.backbone.weights) {
        for (double& v : w.values()) v += std::uniform_real_distribution<double>(-1, 1)(rng);
    }
    Model old_teacher = snapshot_teacher(*pair.teacher);
    ema_update(pair);
    for (std::size_t l = 0; l < old_teacher.backbone.weights.size(); ++l) {
        for (std::size_t i = 0; i < old_teacher.backbone.weights[l].size(); ++i) {
            const double previous = old_teacher.backbone.weights[l].values()[i];
            const double current = pair.current.backbone.weights[l].values()[i];
            const double updated = pair.teacher->backbone.weights[l].values()[i];
            CHECK(updated >= std::min(previous, current) - 1e-15);
            CHECK(updated <= std::max(previous, current) + 1e-15);
        }
    }

    // identical models: the update is the identity
    ModelPair fixed;
    fixed.current = tiny_model(19);
    fixed.teacher = snapshot_teacher(fixed.current);
    fixed.gamma = 0.5;
    Model before = snapshot_teacher(*fixed.teacher);
    ema_update(fixed);
    CHECK(models_equal(*fixed.teacher, before));
    CHECK(models_equal(*fixed.teacher, fixed.current));
}

TEST_CASE("ema_update moves only the classes the teacher knows") {
    ModelPair pair;
    pair.current = tiny_model(23);
    pair.teacher = snapshot_teacher(pair.current);
    pair.gamma = 0.5;
    // current grows by one class after the snapshot
    pair.current.head = head_expand(pair.current.head, 1, 99);
    pair.current.head.metrics[2].L.values()[0] = 5.0;
    ema_update(pair);
    CHECK(pair.teacher->head.num_classes() == 2);
}

TEST_CASE("ema_update error contracts") {
    ModelPair empty;
    empty.current = tiny_model(29);
    CHECK_THROWS_AS(ema_update(empty), ValueError);

    ModelPair bad_gamma;
    bad_gamma.current = tiny_model(31);
    bad_gamma.teacher = snapshot_teacher(bad_gamma.current);
    bad_gamma.gamma = 1.5;
    CHECK_THROWS_AS(ema_update(bad_gamma), ConfigError);

    ModelPair mismatched;
    mismatched.current = tiny_model(37);
    mismatched.teacher = snapshot_teacher(mismatched.current);
    mismatched.teacher->head = head_expand(mismatched.teacher->head, 1, 5);
    CHECK_THROWS_AS(ema_update(mismatched), ShapeError);
}
