#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "metasplit/base_learner.hpp"
#include "metasplit/rng.hpp"
#include "metasplit/task_model.hpp"

namespace metasplit {

enum class Variant { trtr, trva };
enum class InnerMode { closed_form, gd };
enum class GradMode { first_order, exact };
enum class LrSchedule { constant, cosine };

std::string_view to_string(Variant v) noexcept;
std::string_view to_string(InnerMode m) noexcept;
std::string_view to_string(GradMode m) noexcept;
std::string_view to_string(LrSchedule s) noexcept;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  Variant variant = Variant::trva;
  double lambda = 0.0;
  int n = 16;   // samples per task (tr-tr)
  int n1 = 8;   // train split (tr-val)
  int n2 = 8;   // validation split (tr-val)
  int batch_tasks = 32;
  int outer_steps = 3000;
  double outer_lr = 1e-2;
  LrSchedule lr_schedule = LrSchedule::constant;
  AdamConfig adam;
  InnerMode inner_mode = InnerMode::closed_form;
  int inner_steps = 20;
  double inner_lr = 0.05;
  double inner_momentum = 0.9;
  GradMode grad_mode = GradMode::first_order;
  double init_scale = 1.0;
  int rep_dim = 0;    // 0 means D = d
  int task_pool = 0;  // 0: fresh tasks every step; T > 0: fixed pool of T tasks
};

/// Throws invalid-config on inconsistent settings.
void validate(const TrainConfig& config);

/// One meta-training task: the inner loop fits `fit`, the outer loss is measured on `eval`.
/// For tr-tr both hold the same data.
struct MetaTask {
  TaskDataset fit;
  TaskDataset eval;
};

struct TraceRow {
  int step = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
};

struct TrainedModel {
  Representation rep;
  std::vector<TraceRow> trace;
  TrainConfig config;
  /// Tasks for which exact mode had to fall back to the first-order gradient.
  long exact_fallbacks = 0;
};

/// Entries iid N(0, scale^2 / d).
Representation init_representation(int d, int rep_dim, double scale, RngStream& rng);

/// Heavy-ball gradient descent from w = 0 on (1/n)|X A w - Y|^2 + lambda |w|^2.
LinearPredictor inner_gd(const Representation& rep, const TaskDataset& data, double lambda,
                         int steps, double lr, double momentum = 0.9);

struct OuterGradient {
  Matrix gradient;   // d x D, averaged over the batch
  double objective;  // batch mean of the outer loss at the inner solutions used
  long exact_fallbacks = 0;
};

OuterGradient outer_gradient(const Representation& rep, std::span<const MetaTask> batch,
                             const TrainConfig& config);

/// Outer loss of the batch with closed-form (or GD) inner solutions, no gradient.
double batch_objective(const Representation& rep, std::span<const MetaTask> batch,
                       const TrainConfig& config);

MetaTask draw_meta_task(const SubspaceInstance& instance, const TrainConfig& config,
                        RngStream& rng);

/// Batch for one outer step; task i uses rng.substream(i).
std::vector<MetaTask> draw_batch(const SubspaceInstance& instance, const TrainConfig& config,
                                 const RngStream& rng);

using StepObserver = std::function<void(int step, const Representation& rep,
                                        std::span<const MetaTask> batch,
                                        const OuterGradient& grad)>;

/// Batch objective above this multiple of (first objective + 1) aborts training.
inline constexpr double kDivergenceFactor = 1e6;

/// Adam on the outer objective. Step t draws its batch from rng.substream(t + 1);
/// rng.substream(0) seeds the initial representation and the fixed task pool.
/// Throws optimization-diverged on a non-finite or exploding objective.
TrainedModel train(const SubspaceInstance& instance, const TrainConfig& config,
                   const RngStream& rng, const StepObserver& observer = {});

}  // namespace metasplit
