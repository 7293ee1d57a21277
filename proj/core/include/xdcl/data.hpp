#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace xdcl {

/// One labeled feature vector. domain_id is bookkeeping for the data
/// pipeline and reporting; the model and losses never see it.
struct Sample {
    std::vector<double> features;
    int label = 0;
    int domain_id = 0;
};

/// Labeled data grouped by domain. In raw form (generator or loader
/// output) every domain has a train and a test split. hold_out_domain
/// produces the protocol form, where the held-out domain contributes one
/// extra, test-only group at index num_source_domains().
struct DomainDataset {
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::vector<std::vector<Sample>> train;
    std::vector<std::vector<Sample>> test;

    std::size_t num_source_domains() const { return train.size(); }
    bool has_unseen_domain() const { return test.size() == train.size() + 1; }
    std::size_t unseen_domain_index() const;
};

/// Checks the structural invariants: matching feature dims, labels in
/// range, finite features, and a nonempty train cell for every
/// (class, domain) pair. Throws DataError listing the offenders.
void validate_dataset(const DomainDataset& dataset);

struct SyntheticConfig {
    std::size_t num_classes = 10;
    std::size_t num_domains = 4;
    std::size_t feature_dim = 20;
    std::size_t per_cell_count = 30;
    double shift_strength = 0.5;
    double noise_sigma = 0.3;
    std::uint64_t seed = 1;
};

/// Multi-domain classification data with a controllable covariate shift.
/// Class prototypes sit on a sphere; each domain applies its own seeded
/// rotation, per-coordinate scaling and translation, all of which fade to
/// the identity as shift_strength goes to 0. Gaussian noise is added per
/// sample. Each (class, domain) cell is split 80/20 into train/test.
DomainDataset generate_synthetic(const SyntheticConfig& config);

/// Reads a comma-separated feature table: header row, d feature columns,
/// then `label`, `domain`, `split` (train|test). Rejects malformed rows
/// (with line numbers) and datasets violating validate_dataset.
DomainDataset load_features_table(const std::string& path);

/// Inverse of load_features_table; doubles carry 17 significant digits so
/// a round trip reproduces the dataset exactly.
void save_features_table(const DomainDataset& dataset, const std::string& path);

/// Leave-one-domain-out view: remaining domains become sources 0..m-1 in
/// their original order, all samples of the held-out domain become the
/// test-only unseen group at index m. domain_id fields are renumbered to
/// match the view.
DomainDataset hold_out_domain(const DomainDataset& raw, std::size_t held_out);

/// Disjoint class sets Y_1..Y_q covering all classes, in arrival order.
struct TaskStream {
    std::vector<std::vector<int>> tasks;

    std::size_t num_tasks() const { return tasks.size(); }
};

/// Shuffles the class ids with the given seed and partitions them into q
/// contiguous groups; sizes differ by at most one.
TaskStream split_tasks(const DomainDataset& dataset, std::size_t q, std::uint64_t seed);

enum class MemoryMode {
    per_class_per_domain,  // one cell per (class, domain): the default
    per_class,             // domain-agnostic cells, for strictly domain-blind replay
};

/// Capacity-bounded store of past exemplars, replayed into later tasks'
/// mini-batches. Exemplars are drawn uniformly without replacement, one
/// seeded stream per cell, so contents depend only on (seed, data), never
/// on the training method.
class RehearsalMemory {
public:
    RehearsalMemory(std::size_t capacity_per_cell, MemoryMode mode, std::uint64_t seed);

    /// Stores exemplars for every cell present in the task's train data.
    /// Cells already filled by earlier tasks are left untouched.
    void update(std::span<const Sample> task_train_data);

    std::span<const Sample> exemplars() const { return flat_; }
    std::size_t size() const { return flat_.size(); }
    std::size_t capacity_per_cell() const { return capacity_; }
    MemoryMode mode() const { return mode_; }

private:
    std::size_t capacity_;
    MemoryMode mode_;
    std::uint64_t seed_;
    std::map<std::pair<int, int>, std::vector<Sample>> cells_;
    std::vector<Sample> flat_;
};

/// One epoch of mixed batches over (current-domain task data + all memory
/// exemplars): shuffles the union with a (seed, epoch) stream and cuts it
/// into batch_size pieces, keeping the final partial batch.
std::vector<std::vector<Sample>> make_batches(std::span<const Sample> current,
                                              std::span<const Sample> memory,
                                              std::size_t batch_size, std::uint64_t seed,
                                              std::size_t epoch);

}  // namespace xdcl
