#include "metasplit/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "metasplit/error.hpp"

namespace metasplit {
namespace {

double mean_of(const std::vector<double>& xs) {
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

void check_tasks_nonempty(std::size_t count) {
  if (count == 0) throw Error(Errc::invalid_argument, "task list is empty");
}

}  // namespace

MonteCarloEstimate MonteCarloEstimate::from_samples(std::span<const double> samples) {
  if (samples.size() < 2) throw Error(Errc::invalid_argument, "need at least two samples");
  // Welford; reduction order is the sample order.
  double mean = 0.0;
  double m2 = 0.0;
  Index count = 0;
  for (double x : samples) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
  const double var = m2 / static_cast<double>(count - 1);
  return {mean, std::sqrt(var / static_cast<double>(count)), count};
}

const std::vector<double>& default_lambda_grid() {
  static const std::vector<double> grid{0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0};
  return grid;
}

std::vector<double> trtr_task_losses(const Representation& rep, std::span<const TaskDataset> tasks,
                                     double lambda) {
  check_tasks_nonempty(tasks.size());
  std::vector<double> losses;
  losses.reserve(tasks.size());
  for (const auto& task : tasks) {
    if (task.dim() != rep.input_dim())
      throw Error(Errc::dimension_mismatch, "task dimension does not match representation");
    const Matrix features = task.X * rep.matrix();
    const Vector w = InnerSolver(features, task.Y).solve(lambda);
    losses.push_back((features * w - task.Y).squaredNorm() / static_cast<double>(task.size()));
  }
  return losses;
}

double empirical_trtr(const Representation& rep, std::span<const TaskDataset> tasks, double lambda) {
  return mean_of(trtr_task_losses(rep, tasks, lambda));
}

std::vector<double> trva_task_losses(const Representation& rep, std::span<const SplitDataset> tasks,
                                     const SplitSpec& spec) {
  check_tasks_nonempty(tasks.size());
  std::vector<double> losses;
  losses.reserve(tasks.size());
  for (const auto& task : tasks) {
    if (task.train.dim() != rep.input_dim() || task.val.dim() != rep.input_dim())
      throw Error(Errc::dimension_mismatch, "task dimension does not match representation");
    if (task.train.size() != spec.n1 || task.val.size() != spec.n2)
      throw Error(Errc::split_size_mismatch,
                  "split sizes (" + std::to_string(task.train.size()) + ", " +
                      std::to_string(task.val.size()) + ") differ from the requested split (" +
                      std::to_string(spec.n1) + ", " + std::to_string(spec.n2) + ")");
    const Vector w = InnerSolver(rep, task.train).solve(spec.lambda);
    const Vector residual = task.val.X * (rep.matrix() * w) - task.val.Y;
    losses.push_back(residual.squaredNorm() / static_cast<double>(task.val.size()));
  }
  return losses;
}

double empirical_trva(const Representation& rep, std::span<const SplitDataset> tasks,
                      const SplitSpec& spec) {
  return mean_of(trva_task_losses(rep, tasks, spec));
}

std::vector<MonteCarloEstimate> meta_test_loss_grid(const Representation& rep,
                                                    const SubspaceInstance& instance, int nbar1,
                                                    std::span<const double> grid, int num_tasks,
                                                    const RngStream& rng) {
  if (num_tasks < 2) throw Error(Errc::invalid_argument, "meta-test needs num_tasks >= 2");
  if (grid.empty()) throw Error(Errc::invalid_argument, "lambda grid is empty");
  if (rep.input_dim() != instance.d)
    throw Error(Errc::dimension_mismatch, "representation rows differ from instance dimension");
  const double noise = instance.sigma * instance.sigma;

  std::vector<std::vector<double>> losses(grid.size());
  for (auto& l : losses) l.reserve(static_cast<std::size_t>(num_tasks));

  for (int t = 0; t < num_tasks; ++t) {
    RngStream task_rng = rng.substream(static_cast<std::uint64_t>(t));
    const Vector v = sample_task(instance, task_rng);
    const TaskDataset data = sample_dataset(instance, v, nbar1, task_rng);
    const InnerSolver solver(rep, data);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const Vector composite = rep.matrix() * solver.solve(grid[g]);
      losses[g].push_back((composite - v).squaredNorm() + noise);
    }
  }

  std::vector<MonteCarloEstimate> out;
  out.reserve(grid.size());
  for (const auto& l : losses) out.push_back(MonteCarloEstimate::from_samples(l));
  return out;
}

MonteCarloEstimate meta_test_loss_mc(const Representation& rep, const SubspaceInstance& instance,
                                     int nbar1, double lambda_bar, int num_tasks,
                                     const RngStream& rng) {
  const double grid[] = {lambda_bar};
  return meta_test_loss_grid(rep, instance, nbar1, grid, num_tasks, rng).front();
}

double tune_lambda_bar(const Representation& rep, const SubspaceInstance& instance, int nbar1,
                       std::span<const double> grid, int val_tasks, const RngStream& rng) {
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  if (!sorted.empty() && sorted.front() < 0.0)
    throw Error(Errc::invalid_argument, "lambda grid must be non-negative");
  const auto curve = meta_test_loss_grid(rep, instance, nbar1, sorted, val_tasks, rng);
  std::size_t best = 0;
  for (std::size_t g = 1; g < curve.size(); ++g)
    if (curve[g].mean < curve[best].mean) best = g;
  return sorted[best];
}

TunedMetaTest tuned_meta_test(const Representation& rep, const SubspaceInstance& instance, int nbar1,
                              std::span<const double> grid, int tune_tasks, int test_tasks,
                              const RngStream& rng) {
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  TunedMetaTest out;
  out.tuning_curve = meta_test_loss_grid(rep, instance, nbar1, sorted, tune_tasks, rng.substream(0));
  std::size_t best = 0;
  for (std::size_t g = 1; g < out.tuning_curve.size(); ++g)
    if (out.tuning_curve[g].mean < out.tuning_curve[best].mean) best = g;
  out.lambda_bar = sorted[best];
  out.estimate =
      meta_test_loss_mc(rep, instance, nbar1, out.lambda_bar, test_tasks, rng.substream(1));
  return out;
}

}  // namespace metasplit
