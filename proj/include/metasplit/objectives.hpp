#pragma once

#include <span>
#include <vector>

#include "metasplit/base_learner.hpp"
#include "metasplit/rng.hpp"

namespace metasplit {

/// Train/validation sizes and the inner regularizer used by the split objective.
struct SplitSpec {
  int n1 = 0;
  int n2 = 0;
  double lambda = 0.0;
};

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(num_samples)
  Index num_samples = 0;

  static MonteCarloEstimate from_samples(std::span<const double> samples);
};

/// Default meta-test regularization grid.
const std::vector<double>& default_lambda_grid();

/// Per-task non-splitting losses (1/n)|X_t A w(A; S_t) - Y_t|^2.
std::vector<double> trtr_task_losses(const Representation& rep, std::span<const TaskDataset> tasks,
                                     double lambda);
double empirical_trtr(const Representation& rep, std::span<const TaskDataset> tasks, double lambda);

/// Per-task split losses (1/n2)|X^val A w(A; S^tr) - Y^val|^2.
std::vector<double> trva_task_losses(const Representation& rep, std::span<const SplitDataset> tasks,
                                     const SplitSpec& spec);
double empirical_trva(const Representation& rep, std::span<const SplitDataset> tasks,
                      const SplitSpec& spec);

/// Fresh tasks and datasets of size nbar1; each task contributes sigma^2 + |A w - v|^2.
/// Task t draws from rng.substream(t); `rng` itself is not advanced.
MonteCarloEstimate meta_test_loss_mc(const Representation& rep, const SubspaceInstance& instance,
                                     int nbar1, double lambda_bar, int num_tasks,
                                     const RngStream& rng);

/// Same estimator for every grid value, using common tasks (one SVD per task).
std::vector<MonteCarloEstimate> meta_test_loss_grid(const Representation& rep,
                                                    const SubspaceInstance& instance, int nbar1,
                                                    std::span<const double> grid, int num_tasks,
                                                    const RngStream& rng);

/// Grid value with the lowest meta-test estimate on `rng`; ties go to the smaller value.
double tune_lambda_bar(const Representation& rep, const SubspaceInstance& instance, int nbar1,
                       std::span<const double> grid, int val_tasks, const RngStream& rng);

struct TunedMetaTest {
  double lambda_bar = 0.0;
  MonteCarloEstimate estimate;
  std::vector<MonteCarloEstimate> tuning_curve;
};

/// Tunes on rng.substream(0) and evaluates the selected value on rng.substream(1).
TunedMetaTest tuned_meta_test(const Representation& rep, const SubspaceInstance& instance, int nbar1,
                              std::span<const double> grid, int tune_tasks, int test_tasks,
                              const RngStream& rng);

}  // namespace metasplit
