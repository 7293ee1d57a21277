#pragma once

#include <functional>
#include <optional>
#include <string>

#include "xdcl/data.hpp"
#include "xdcl/ema.hpp"
#include "xdcl/metrics.hpp"

namespace xdcl {

/// The method grid. msl/msl_mov carry the Mahalanobis head; the three
/// baselines swap in the plain inner-product head and/or drop replay and
/// distillation, sharing every other line of the training loop.
enum class Method {
    msl_mov,             // Mahalanobis head + replay + distillation with EMA teacher
    msl,                 // Mahalanobis head + replay
    erm,                 // inner-product head + replay
    finetune_no_memory,  // inner-product head, no replay: naive fine-tuning
    linear_head,         // inner-product head + replay + distillation with EMA teacher
};

struct MethodTraits {
    HeadKind head_kind;
    bool use_memory;
    bool use_distillation;
};

MethodTraits method_traits(Method method);
const std::vector<Method>& all_methods();
std::string method_name(Method method);
Method parse_method(const std::string& name);

enum class HeadInit { uniform, class_mean };

struct TrainConfig {
    std::size_t epochs_per_domain = 20;
    std::size_t batch_size = 32;
    double learning_rate = 2e-2;
    double lambda = 1e-3;
    double tau = 2.0;
    double gamma = 0.96;
    std::uint64_t seed = 1;
    std::size_t repetitions = 5;

    std::size_t memory_capacity = 5;
    MemoryMode memory_mode = MemoryMode::per_class_per_domain;

    std::vector<std::size_t> hidden_dims = {32};
    std::size_t feature_dim = 16;
    Activation activation = Activation::relu;
    std::size_t rank = 0;  // 0 = default_rank(feature_dim)
    HeadInit head_init = HeadInit::uniform;
};

void validate(const TrainConfig& config);

/// p <- p - lr * grad for every parameter, then grads are cleared.
/// Raises if any parameter is missing its gradient buffer.
void sgd_step(const std::vector<Tensor>& params, double learning_rate);

/// Called with every raw training batch before labels and features are
/// extracted; tests use it to audit what the learner is fed.
using BatchObserver = std::function<void(std::span<const Sample>)>;

struct RepetitionResult {
    /// One matrix per test domain; sources first, unseen last.
    std::vector<AccuracyMatrix> accuracy;
    std::vector<double> avg_accuracy;        // A per test domain
    std::vector<double> backward_transfer;   // BW per test domain
    std::vector<std::vector<std::size_t>> domain_orders;  // per task
};

/// Drives one repetition of the protocol over a held-out view of the
/// data: per task, snapshot the teacher, expand the head, train through
/// the source domains in a seeded order on mixed current+memory batches,
/// update the replay memory, then record the accuracy row.
class ContinualTrainer {
public:
    ContinualTrainer(const DomainDataset& data, const TaskStream& tasks, TrainConfig config,
                     Method method, std::size_t repetition = 0);

    void set_batch_observer(BatchObserver observer) { observer_ = std::move(observer); }

    /// One optimizer step on a raw batch; returns the loss value.
    double train_step(std::span<const Sample> batch);

    /// Tasks must be run in order 0, 1, ...; anything else is an error.
    void run_task(std::size_t task_index);

    RepetitionResult run();

    const Model& model() const { return pair_.current; }
    const std::optional<Model>& teacher() const { return pair_.teacher; }
    const RehearsalMemory& memory() const { return memory_; }
    const std::vector<AccuracyMatrix>& accuracy() const { return accuracy_; }
    std::size_t tasks_done() const { return tasks_done_; }
    /// Classes introduced through task t (inclusive), as model slots.
    std::size_t classes_through_task(std::size_t task_index) const;

private:
    Tensor to_features(std::span<const Sample> batch) const;
    std::vector<int> to_slot_labels(std::span<const Sample> batch) const;
    void record_accuracy_row(std::size_t checkpoint);
    std::vector<Sample> task_train_samples(std::size_t task_index, std::size_t domain) const;

    const DomainDataset& data_;
    const TaskStream& tasks_;
    TrainConfig config_;
    Method method_;
    MethodTraits traits_;
    std::size_t repetition_;

    std::vector<int> class_to_slot_;  // original class id -> model slot
    ModelPair pair_;
    RehearsalMemory memory_;
    std::vector<AccuracyMatrix> accuracy_;
    // eval_sets_[domain][task]: test samples relabeled to model slots
    std::vector<std::vector<std::vector<Sample>>> eval_sets_;
    std::vector<std::vector<std::size_t>> domain_orders_;
    std::size_t tasks_done_ = 0;
    BatchObserver observer_;
};

struct ExperimentReport {
    std::size_t repetitions = 0;
    std::vector<RepetitionResult> reps;
    std::vector<AccuracyMatrix> averaged;     // per test domain, mean over reps
    std::vector<double> avg_accuracy;         // A per test domain, from averaged
    std::vector<double> backward_transfer;    // BW per test domain, from averaged

    double unseen_accuracy = 0.0;     // A on the held-out domain
    double seen_accuracy_mean = 0.0;  // mean A over source domains
    double bw_seen_mean = 0.0;        // mean BW over source domains
    double bw_unseen = 0.0;
};

/// Runs `repetitions` independent domain-order repetitions and averages.
/// Deterministic: the same (data, tasks, config, method) always produces
/// bit-identical matrices.
ExperimentReport run_experiment(const DomainDataset& data, const TaskStream& tasks,
                                const TrainConfig& config, Method method,
                                const BatchObserver& observer = nullptr);

}  // namespace xdcl
