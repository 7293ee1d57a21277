#pragma once

#include <span>
#include <vector>

#include "xdcl/data.hpp"
#include "xdcl/ema.hpp"

namespace xdcl {

/// a[t][j]: accuracy on task t's test data under the model after task j,
/// defined for checkpoints j >= t only.
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t num_tasks);

    std::size_t num_tasks() const { return q_; }
    bool is_set(std::size_t task, std::size_t checkpoint) const;
    void set(std::size_t task, std::size_t checkpoint, double accuracy);
    double at(std::size_t task, std::size_t checkpoint) const;

private:
    std::size_t index(std::size_t task, std::size_t checkpoint) const;
    std::size_t q_ = 0;
    std::vector<double> cells_;  // NaN = unset
};

/// Fraction of samples whose argmax score matches the label; ties go to
/// the lowest class id. Labels are model class indices. When
/// num_candidates is nonzero the argmax runs over the first
/// num_candidates classes only, otherwise over all of them.
double evaluate_accuracy(const Model& model, std::span<const Sample> samples,
                         std::size_t num_candidates = 0);

/// A = (1/q) sum_t a[t][q-1]: mean final-checkpoint accuracy.
double average_accuracy(const AccuracyMatrix& matrix);

/// BW = (1/q) sum_t (a[t][t] - a[t][q-1]). Zero means no forgetting;
/// lower is better, and negative values (late improvement) are valid.
double backward_transfer(const AccuracyMatrix& matrix);

}  // namespace xdcl
