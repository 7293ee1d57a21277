#include "xdcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xdcl/error.hpp"
#include "xdcl/losses.hpp"
#include "xdcl/rng.hpp"

namespace xdcl {

namespace {

constexpr std::uint64_t kBackboneStream = 0x696e6974ULL;
constexpr std::uint64_t kMemoryStream = 0x6d656d73ULL;
constexpr std::uint64_t kExpandStream = 0x65787064ULL;
constexpr std::uint64_t kOrderStream = 0x6f726472ULL;
constexpr std::uint64_t kBatchStream = 0x62746368ULL;

}  // namespace

MethodTraits method_traits(Method method) {
    switch (method) {
        case Method::msl_mov:
            return {HeadKind::mahalanobis, true, true};
        case Method::msl:
            return {HeadKind::mahalanobis, true, false};
        case Method::erm:
            return {HeadKind::inner_product, true, false};
        case Method::finetune_no_memory:
            return {HeadKind::inner_product, false, false};
        case Method::linear_head:
            return {HeadKind::inner_product, true, true};
    }
    throw ConfigError("method_traits: unknown method");
}

const std::vector<Method>& all_methods() {
    static const std::vector<Method> methods = {Method::msl_mov, Method::msl, Method::erm,
                                                Method::finetune_no_memory, Method::linear_head};
    return methods;
}

std::string method_name(Method method) {
    switch (method) {
        case Method::msl_mov: return "msl_mov";
        case Method::msl: return "msl";
        case Method::erm: return "erm";
        case Method::finetune_no_memory: return "finetune_no_memory";
        case Method::linear_head: return "linear_head";
    }
    throw ConfigError("method_name: unknown method");
}

Method parse_method(const std::string& name) {
    for (Method m : all_methods()) {
        if (method_name(m) == name) return m;
    }
    std::string valid;
    for (Method m : all_methods()) {
        if (!valid.empty()) valid += ", ";
        valid += method_name(m);
    }
    throw ConfigError("unknown method '" + name + "' (valid: " + valid + ")");
}

void validate(const TrainConfig& config) {
    if (config.epochs_per_domain == 0) throw ConfigError("TrainConfig: epochs_per_domain must be positive");
    if (config.batch_size == 0) throw ConfigError("TrainConfig: batch_size must be positive");
    if (!(config.learning_rate >= 0.0)) throw ConfigError("TrainConfig: learning_rate must be nonnegative");
    if (!(config.tau > 0.0)) throw ConfigError("TrainConfig: tau must be strictly positive");
    if (config.lambda < 0.0) throw ConfigError("TrainConfig: lambda must be nonnegative");
    if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw ConfigError("TrainConfig: gamma must lie in [0, 1]");
    if (config.repetitions == 0) throw ConfigError("TrainConfig: repetitions must be at least 1");
    if (config.feature_dim == 0) throw ConfigError("TrainConfig: feature_dim must be positive");
    if (config.rank > config.feature_dim) {
        throw ConfigError("TrainConfig: rank " + std::to_string(config.rank) +
                          " exceeds feature_dim " + std::to_string(config.feature_dim));
    }
}

void sgd_step(const std::vector<Tensor>& params, double learning_rate) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            throw ValueError("sgd_step: parameter " + std::to_string(i) +
                             " has no gradient (run backward first)");
        }
    }
    for (const Tensor& p : params) {
        Tensor param = p;
        auto values = param.values();
        const auto grad = param.grad();
        for (std::size_t i = 0; i < values.size(); ++i) values[i] -= learning_rate * grad[i];
        param.clear_grad();
    }
}

ContinualTrainer::ContinualTrainer(const DomainDataset& data, const TaskStream& tasks,
                                   TrainConfig config, Method method, std::size_t repetition)
    : data_(data),
      tasks_(tasks),
      config_(std::move(config)),
      method_(method),
      traits_(method_traits(method)),
      repetition_(repetition),
      memory_(traits_.use_memory ? config_.memory_capacity : 0, config_.memory_mode,
              derive_seed(config_.seed, {kMemoryStream, repetition})) {
    validate(config_);
    validate_dataset(data_);
    if (tasks_.num_tasks() == 0) throw ConfigError("ContinualTrainer: empty task stream");

    // Model slots follow task arrival order.
    class_to_slot_.assign(data_.num_classes, -1);
    int slot = 0;
    for (const auto& task : tasks_.tasks) {
        for (int c : task) {
            if (c < 0 || static_cast<std::size_t>(c) >= data_.num_classes || class_to_slot_[static_cast<std::size_t>(c)] != -1) {
                throw ConfigError("ContinualTrainer: task stream does not partition the classes");
            }
            class_to_slot_[static_cast<std::size_t>(c)] = slot++;
        }
    }
    if (static_cast<std::size_t>(slot) != data_.num_classes) {
        throw ConfigError("ContinualTrainer: task stream does not cover all classes");
    }

    BackboneConfig backbone;
    backbone.input_dim = data_.feature_dim;
    backbone.hidden_dims = config_.hidden_dims;
    backbone.feature_dim = config_.feature_dim;
    backbone.activation = config_.activation;
    backbone.seed = derive_seed(config_.seed, {kBackboneStream, repetition});
    pair_.current.backbone = backbone_init(backbone);
    pair_.current.head = make_head(traits_.head_kind, config_.feature_dim, config_.rank);
    pair_.gamma = config_.gamma;

    const std::size_t q = tasks_.num_tasks();
    accuracy_.assign(data_.test.size(), AccuracyMatrix(q));

    // Per (test domain, task) evaluation pools, relabeled to model slots.
    eval_sets_.resize(data_.test.size());
    for (std::size_t dom = 0; dom < data_.test.size(); ++dom) {
        eval_sets_[dom].resize(q);
        for (const Sample& s : data_.test[dom]) {
            for (std::size_t t = 0; t < q; ++t) {
                const auto& task = tasks_.tasks[t];
                if (std::find(task.begin(), task.end(), s.label) != task.end()) {
                    Sample copy = s;
                    copy.label = class_to_slot_[static_cast<std::size_t>(s.label)];
                    eval_sets_[dom][t].push_back(std::move(copy));
                    break;
                }
            }
        }
    }
}

std::size_t ContinualTrainer::classes_through_task(std::size_t task_index) const {
    std::size_t count = 0;
    for (std::size_t t = 0; t <= task_index && t < tasks_.num_tasks(); ++t) {
        count += tasks_.tasks[t].size();
    }
    return count;
}

Tensor ContinualTrainer::to_features(std::span<const Sample> batch) const {
    const std::size_t d = data_.feature_dim;
    std::vector<double> values(batch.size() * d);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].features.size() != d) {
            throw ShapeError("train batch: sample " + std::to_string(i) + " has " +
                             std::to_string(batch[i].features.size()) + " features, expected " +
                             std::to_string(d));
        }
        std::copy(batch[i].features.begin(), batch[i].features.end(),
                  values.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return Tensor::from({batch.size(), d}, std::move(values));
}

std::vector<int> ContinualTrainer::to_slot_labels(std::span<const Sample> batch) const {
    std::vector<int> labels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const int c = batch[i].label;
        if (c < 0 || static_cast<std::size_t>(c) >= class_to_slot_.size()) {
            throw ValueError("train batch: label " + std::to_string(c) + " out of range");
        }
        labels[i] = class_to_slot_[static_cast<std::size_t>(c)];
    }
    return labels;
}

double ContinualTrainer::train_step(std::span<const Sample> batch) {
    if (batch.empty()) throw ValueError("train_step: empty batch");
    const std::vector<int> labels = to_slot_labels(batch);
    const std::size_t num_classes = pair_.current.head.num_classes();
    for (int y : labels) {
        if (static_cast<std::size_t>(y) >= num_classes) {
            throw ValueError("train_step: label slot " + std::to_string(y) +
                             " not yet covered by the head");
        }
    }
    Tensor features = to_features(batch);

    Tape tape;
    Tensor scores = model_scores(pair_.current, features, &tape);
    Tensor loss = ce_loss(scores, labels, &tape);

    const bool distill = traits_.use_distillation && pair_.teacher.has_value() &&
                         config_.lambda > 0.0;
    if (distill) {
        const std::size_t old_classes = pair_.teacher->head.num_classes();
        Tensor teacher_scores = model_scores(*pair_.teacher, features);  // no tape: stop-gradient
        Tensor current_slice = slice_cols(scores, old_classes, &tape);
        Tensor dis = distillation_loss(current_slice, teacher_scores, config_.tau, &tape);
        loss = total_loss(loss, dis, config_.lambda, &tape);
    }

    const double loss_value = loss.value();
    backward(loss, tape);
    sgd_step(pair_.current.parameters(), config_.learning_rate);
    if (traits_.use_distillation && pair_.teacher.has_value()) {
        ema_update(pair_);
    }
    return loss_value;
}

std::vector<Sample> ContinualTrainer::task_train_samples(std::size_t task_index,
                                                         std::size_t domain) const {
    const auto& task = tasks_.tasks[task_index];
    std::vector<Sample> out;
    for (const Sample& s : data_.train[domain]) {
        if (std::find(task.begin(), task.end(), s.label) != task.end()) out.push_back(s);
    }
    return out;
}

void ContinualTrainer::run_task(std::size_t task_index) {
    if (task_index != tasks_done_) {
        throw ValueError("run_task: expected task " + std::to_string(tasks_done_) + ", got " +
                         std::to_string(task_index));
    }
    if (task_index >= tasks_.num_tasks()) {
        throw ValueError("run_task: task " + std::to_string(task_index) + " beyond stream of " +
                         std::to_string(tasks_.num_tasks()));
    }

    if (task_index >= 1 && traits_.use_distillation) {
        pair_.teacher = snapshot_teacher(pair_.current);
    }

    const std::size_t new_classes = tasks_.tasks[task_index].size();
    pair_.current.head = head_expand(
        pair_.current.head, new_classes,
        derive_seed(config_.seed, {kExpandStream, repetition_, task_index}));

    if (config_.head_init == HeadInit::class_mean &&
        traits_.head_kind == HeadKind::mahalanobis) {
        // Start each new class bias at its mean feature under the current
        // backbone, pooled over all source domains.
        const std::size_t first_slot = pair_.current.head.num_classes() - new_classes;
        std::vector<std::vector<double>> sums(new_classes,
                                              std::vector<double>(config_.feature_dim, 0.0));
        std::vector<std::size_t> counts(new_classes, 0);
        for (std::size_t dom = 0; dom < data_.num_source_domains(); ++dom) {
            const auto pool = task_train_samples(task_index, dom);
            if (pool.empty()) continue;
            Tensor h = backbone_forward(pair_.current.backbone, to_features(pool));
            for (std::size_t i = 0; i < pool.size(); ++i) {
                const auto slot = static_cast<std::size_t>(
                    class_to_slot_[static_cast<std::size_t>(pool[i].label)]);
                const std::size_t local = slot - first_slot;
                counts[local] += 1;
                for (std::size_t j = 0; j < config_.feature_dim; ++j) {
                    sums[local][j] += h.at(i * config_.feature_dim + j);
                }
            }
        }
        for (std::size_t local = 0; local < new_classes; ++local) {
            if (counts[local] == 0) continue;
            auto b = pair_.current.head.metrics[first_slot + local].b.values();
            for (std::size_t j = 0; j < config_.feature_dim; ++j) {
                b[j] = sums[local][j] / static_cast<double>(counts[local]);
            }
        }
    }

    std::vector<std::size_t> order(data_.num_source_domains());
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng = make_rng(config_.seed, {kOrderStream, repetition_, task_index});
    std::shuffle(order.begin(), order.end(), order_rng);
    domain_orders_.push_back(order);

    for (std::size_t dom : order) {
        const std::vector<Sample> current = task_train_samples(task_index, dom);
        const std::uint64_t batch_seed =
            derive_seed(config_.seed, {kBatchStream, repetition_, task_index, dom});
        for (std::size_t epoch = 0; epoch < config_.epochs_per_domain; ++epoch) {
            const auto batches =
                make_batches(current, memory_.exemplars(), config_.batch_size, batch_seed, epoch);
            for (const auto& batch : batches) {
                if (observer_) observer_(batch);
                train_step(batch);
            }
        }
    }

    if (traits_.use_memory) {
        std::vector<Sample> task_data;
        for (std::size_t dom = 0; dom < data_.num_source_domains(); ++dom) {
            auto part = task_train_samples(task_index, dom);
            task_data.insert(task_data.end(), part.begin(), part.end());
        }
        memory_.update(task_data);
    }

    pair_.teacher.reset();  // discarded once the task's training is done
    tasks_done_ = task_index + 1;
    record_accuracy_row(task_index);
}

void ContinualTrainer::record_accuracy_row(std::size_t checkpoint) {
    for (std::size_t dom = 0; dom < data_.test.size(); ++dom) {
        for (std::size_t t = 0; t <= checkpoint; ++t) {
            const auto& pool = eval_sets_[dom][t];
            if (pool.empty()) {
                throw DataError("evaluation: no test samples for task " + std::to_string(t) +
                                " in test domain " + std::to_string(dom));
            }
            // Candidates are the classes available when task t arrived, so a
            // frozen model scores a constant row regardless of later
            // expansion.
            const double acc =
                evaluate_accuracy(pair_.current, pool, classes_through_task(t));
            accuracy_[dom].set(t, checkpoint, acc);
        }
    }
}

RepetitionResult ContinualTrainer::run() {
    for (std::size_t t = tasks_done_; t < tasks_.num_tasks(); ++t) run_task(t);
    RepetitionResult result;
    result.accuracy = accuracy_;
    result.domain_orders = domain_orders_;
    for (const auto& matrix : accuracy_) {
        result.avg_accuracy.push_back(average_accuracy(matrix));
        result.backward_transfer.push_back(backward_transfer(matrix));
    }
    return result;
}

ExperimentReport run_experiment(const DomainDataset& data, const TaskStream& tasks,
                                const TrainConfig& config, Method method,
                                const BatchObserver& observer) {
    if (!data.has_unseen_domain()) {
        throw DataError("run_experiment: dataset has no unseen domain; apply hold_out_domain");
    }
    ExperimentReport report;
    report.repetitions = config.repetitions;
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
        ContinualTrainer trainer(data, tasks, config, method, rep);
        if (observer) trainer.set_batch_observer(observer);
        report.reps.push_back(trainer.run());
    }

    const std::size_t q = tasks.num_tasks();
    const std::size_t domains = data.test.size();
    report.averaged.assign(domains, AccuracyMatrix(q));
    for (std::size_t dom = 0; dom < domains; ++dom) {
        for (std::size_t t = 0; t < q; ++t) {
            for (std::size_t j = t; j < q; ++j) {
                double acc = 0.0;
                for (const auto& rep : report.reps) acc += rep.accuracy[dom].at(t, j);
                report.averaged[dom].set(t, j, acc / static_cast<double>(report.reps.size()));
            }
        }
        report.avg_accuracy.push_back(average_accuracy(report.averaged[dom]));
        report.backward_transfer.push_back(backward_transfer(report.averaged[dom]));
    }

    const std::size_t unseen = data.unseen_domain_index();
    report.unseen_accuracy = report.avg_accuracy[unseen];
    report.bw_unseen = report.backward_transfer[unseen];
    double acc_sum = 0.0, bw_sum = 0.0;
    for (std::size_t dom = 0; dom < unseen; ++dom) {
        acc_sum += report.avg_accuracy[dom];
        bw_sum += report.backward_transfer[dom];
    }
    report.seen_accuracy_mean = acc_sum / static_cast<double>(unseen);
    report.bw_seen_mean = bw_sum / static_cast<double>(unseen);
    return report;
}

}  // namespace xdcl
