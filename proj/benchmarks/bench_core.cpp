#include <benchmark/benchmark.h>

#include <random>

#include "xdcl/data.hpp"
#include "xdcl/losses.hpp"
#include "xdcl/trainer.hpp"

namespace {

using namespace xdcl;

Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<double> values(rows * cols);
    for (double& v : values) v = dist(rng);
    return Tensor::from({rows, cols}, std::move(values));
}

Model bench_model(std::size_t classes) {
    BackboneConfig config;
    config.input_dim = 20;
    config.hidden_dims = {32};
    config.feature_dim = 16;
    config.seed = 7;
    Model model;
    model.backbone = backbone_init(config);
    model.head = head_expand(make_head(HeadKind::mahalanobis, 16, 16), classes, 8);
    return model;
}

void BM_BackboneForward(benchmark::State& state) {
    const Model model = bench_model(10);
    const Tensor x = random_batch(static_cast<std::size_t>(state.range(0)), 20, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(backbone_forward(model.backbone, x));
    }
}
BENCHMARK(BM_BackboneForward)->Arg(1)->Arg(32)->Arg(256);

void BM_HeadScores(benchmark::State& state) {
    const Model model = bench_model(static_cast<std::size_t>(state.range(0)));
    const Tensor h = random_batch(32, 16, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(head_scores(model.head, h));
    }
}
BENCHMARK(BM_HeadScores)->Arg(2)->Arg(10)->Arg(50);

void BM_ForwardBackward(benchmark::State& state) {
    Model model = bench_model(10);
    const Tensor x = random_batch(32, 20, 3);
    std::vector<int> labels(32);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
    for (auto _ : state) {
        Tape tape;
        Tensor loss = ce_loss(model_scores(model, x, &tape), labels, &tape);
        backward(loss, tape);
        benchmark::DoNotOptimize(loss.value());
        for (Tensor& p : model.parameters()) p.clear_grad();
    }
}
BENCHMARK(BM_ForwardBackward);

void BM_GenerateSynthetic(benchmark::State& state) {
    SyntheticConfig config;
    config.num_classes = 10;
    config.num_domains = 4;
    config.feature_dim = 20;
    config.per_cell_count = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(generate_synthetic(config));
    }
}
BENCHMARK(BM_GenerateSynthetic)->Arg(10)->Arg(30);

void BM_TrainTask(benchmark::State& state) {
    SyntheticConfig synth;
    synth.num_classes = 4;
    synth.num_domains = 3;
    synth.feature_dim = 20;
    synth.per_cell_count = 20;
    const auto data = hold_out_domain(generate_synthetic(synth), 2);
    const auto tasks = split_tasks(data, 2, 3);
    TrainConfig config;
    config.epochs_per_domain = 1;
    config.repetitions = 1;
    for (auto _ : state) {
        ContinualTrainer trainer(data, tasks, config, Method::msl_mov);
        trainer.run_task(0);
        benchmark::DoNotOptimize(trainer.model().head.num_classes());
    }
}
BENCHMARK(BM_TrainTask);

}  // namespace

BENCHMARK_MAIN();
