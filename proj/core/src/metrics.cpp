#include "xdcl/metrics.hpp"

#include <cmath>
#include <limits>

#include "xdcl/error.hpp"

namespace xdcl {

AccuracyMatrix::AccuracyMatrix(std::size_t num_tasks)
    : q_(num_tasks), cells_(num_tasks * num_tasks, std::numeric_limits<double>::quiet_NaN()) {}

std::size_t AccuracyMatrix::index(std::size_t task, std::size_t checkpoint) const {
    if (task >= q_ || checkpoint >= q_) {
        throw ValueError("AccuracyMatrix: (" + std::to_string(task) + "," +
                         std::to_string(checkpoint) + ") outside " + std::to_string(q_) + " tasks");
    }
    if (checkpoint < task) {
        throw ValueError("AccuracyMatrix: entry (" + std::to_string(task) + "," +
                         std::to_string(checkpoint) + ") undefined: checkpoint precedes task");
    }
    return task * q_ + checkpoint;
}

bool AccuracyMatrix::is_set(std::size_t task, std::size_t checkpoint) const {
    return !std::isnan(cells_[index(task, checkpoint)]);
}

void AccuracyMatrix::set(std::size_t task, std::size_t checkpoint, double accuracy) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
        throw ValueError("AccuracyMatrix: accuracy " + std::to_string(accuracy) +
                         " outside [0, 1]");
    }
    cells_[index(task, checkpoint)] = accuracy;
}

double AccuracyMatrix::at(std::size_t task, std::size_t checkpoint) const {
    const double v = cells_[index(task, checkpoint)];
    if (std::isnan(v)) {
        throw ValueError("AccuracyMatrix: entry (" + std::to_string(task) + "," +
                         std::to_string(checkpoint) + ") not recorded");
    }
    return v;
}

double evaluate_accuracy(const Model& model, std::span<const Sample> samples,
                         std::size_t num_candidates) {
    if (samples.empty()) throw ValueError("evaluate_accuracy: no samples");
    const std::size_t classes = model.head.num_classes();
    if (num_candidates == 0) num_candidates = classes;
    if (num_candidates > classes) {
        throw ValueError("evaluate_accuracy: " + std::to_string(num_candidates) +
                         " candidates but model has " + std::to_string(classes) + " classes");
    }
    const std::size_t d = model.backbone.config.input_dim;
    std::vector<double> features(samples.size() * d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        if (s.label < 0 || static_cast<std::size_t>(s.label) >= num_candidates) {
            throw ValueError("evaluate_accuracy: label " + std::to_string(s.label) +
                             " not covered by the " + std::to_string(num_candidates) +
                             " candidate classes");
        }
        if (s.features.size() != d) {
            throw ShapeError("evaluate_accuracy: sample has " + std::to_string(s.features.size()) +
                             " features, model expects " + std::to_string(d));
        }
        std::copy(s.features.begin(), s.features.end(), features.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    Tensor x = Tensor::from({samples.size(), d}, std::move(features));
    Tensor scores = model_scores(model, x);

    std::size_t correct = 0;
    const auto sv = scores.values();
    const std::size_t c = scores.cols();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::size_t best = 0;
        double best_score = sv[i * c];
        for (std::size_t j = 1; j < num_candidates; ++j) {
            if (sv[i * c + j] > best_score) {
                best_score = sv[i * c + j];
                best = j;
            }
        }
        if (best == static_cast<std::size_t>(samples[i].label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double average_accuracy(const AccuracyMatrix& matrix) {
    const std::size_t q = matrix.num_tasks();
    if (q == 0) throw ValueError("average_accuracy: empty matrix");
    double acc = 0.0;
    for (std::size_t t = 0; t < q; ++t) acc += matrix.at(t, q - 1);
    return acc / static_cast<double>(q);
}

double backward_transfer(const AccuracyMatrix& matrix) {
    const std::size_t q = matrix.num_tasks();
    if (q == 0) throw ValueError("backward_transfer: empty matrix");
    double acc = 0.0;
    for (std::size_t t = 0; t < q; ++t) acc += matrix.at(t, t) - matrix.at(t, q - 1);
    return acc / static_cast<double>(q);
}

}  // namespace xdcl
