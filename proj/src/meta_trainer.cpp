#include "metasplit/meta_trainer.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "metasplit/error.hpp"

namespace metasplit {

std::string_view to_string(Variant v) noexcept { return v == Variant::trtr ? "tr-tr" : "tr-val"; }
std::string_view to_string(InnerMode m) noexcept {
  return m == InnerMode::closed_form ? "closed_form" : "gd";
}
std::string_view to_string(GradMode m) noexcept {
  return m == GradMode::first_order ? "first_order" : "exact";
}
std::string_view to_string(LrSchedule s) noexcept {
  return s == LrSchedule::constant ? "constant" : "cosine";
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(Errc::invalid_config, msg); };
  if (c.batch_tasks < 1) fail("batch_tasks must be >= 1");
  if (c.outer_steps < 1) fail("outer_steps must be >= 1");
  if (!(c.outer_lr > 0.0)) fail("outer_lr must be positive");
  if (!(c.lambda >= 0.0)) fail("lambda must be non-negative");
  if (c.variant == Variant::trtr && c.n < 1) fail("n must be >= 1");
  if (c.variant == Variant::trva) {
    if (c.n1 < 1 || c.n2 < 1) fail("n1 and n2 must be >= 1");
    if (c.n1 + c.n2 != c.n) fail("tr-val requires n1 + n2 = n");
  }
  if (c.inner_mode == InnerMode::gd) {
    if (c.inner_steps < 1) fail("inner_steps must be >= 1");
    if (!(c.inner_lr > 0.0)) fail("inner_lr must be positive");
    if (c.grad_mode == GradMode::exact)
      fail("exact gradients are only available with the closed-form inner solver");
  }
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0 && c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0))
    fail("Adam betas must lie in [0, 1)");
  if (!(c.init_scale >= 0.0)) fail("init_scale must be non-negative");
  if (c.rep_dim < 0 || c.task_pool < 0) fail("rep_dim and task_pool must be non-negative");
}

Representation init_representation(int d, int rep_dim, double scale, RngStream& rng) {
  if (d < 1 || rep_dim < 1) throw Error(Errc::invalid_dimensions, "d and D must be >= 1");
  Matrix a = rng.gaussian_matrix(d, rep_dim);
  a *= scale / std::sqrt(static_cast<double>(d));
  return Representation(std::move(a));
}

LinearPredictor inner_gd(const Representation& rep, const TaskDataset& data, double lambda,
                         int steps, double lr, double momentum) {
  if (steps < 1 || !(lr > 0.0)) throw Error(Errc::invalid_argument, "inner GD needs steps >= 1, lr > 0");
  if (data.dim() != rep.input_dim())
    throw Error(Errc::dimension_mismatch, "dataset dimension does not match representation");
  const Matrix features = data.X * rep.matrix();
  const double scale = 2.0 / static_cast<double>(data.size());
  Vector w = Vector::Zero(rep.rep_dim());
  Vector velocity = Vector::Zero(rep.rep_dim());
  for (int t = 0; t < steps; ++t) {
    const Vector grad = scale * features.transpose() * (features * w - data.Y) + 2.0 * lambda * w;
    velocity = momentum * velocity + grad;
    w -= lr * velocity;
  }
  if (!w.allFinite()) throw Error(Errc::optimization_diverged, "inner gradient descent diverged");
  return make_predictor(rep, std::move(w));
}

namespace {

struct TaskGradient {
  Matrix gradient;
  double loss = 0.0;
  bool fell_back = false;
};

/// Gradient of the exact inner solution's outer loss with respect to M = X_fit A,
/// given q = dL/dw. Returns false when w(M) is not differentiable (rank-deficient, lambda = 0).
bool inner_solution_pullback(const InnerSolver& solver, const Matrix& features, const Vector& labels,
                             const Vector& w, const Vector& q, double lambda, Matrix& grad_m) {
  const auto& svd = solver.svd();
  const Index nf = features.rows();
  const Index dim = features.cols();
  const double n = static_cast<double>(nf);

  if (lambda > 0.0 || svd.rank == dim) {
    // w = H^{-1} c, H = M^T M / n + lambda I, c = M^T Y / n.
    const Index p = svd.s.size();
    const Vector vq = svd.v.transpose() * q;
    Vector z = svd.v * (vq.array() / (svd.s.array().square() / n + lambda)).matrix();
    if (lambda > 0.0 && p < dim) z += (q - svd.v * vq) / lambda;
    grad_m = ((labels - features * w) * z.transpose() - (features * z) * w.transpose()) / n;
    return true;
  }
  if (svd.rank == nf) {
    // w = M^T G^{-1} Y with G = M M^T (full row rank).
    const Vector inv_s2 = svd.s.head(nf).array().square().inverse();
    const Matrix& u = svd.u;
    const Vector a = u * inv_s2.cwiseProduct(u.transpose() * labels);
    const Vector b = u * inv_s2.cwiseProduct(u.transpose() * (features * q));
    grad_m = a * q.transpose() - b * w.transpose() - a * (features.transpose() * b).transpose();
    return true;
  }
  return false;
}

TaskGradient task_gradient(const Representation& rep, const MetaTask& task,
                           const TrainConfig& config, bool want_gradient) {
  const Matrix& a = rep.matrix();
  const Matrix features = task.fit.X * a;
  TaskGradient out;

  Vector w;
  std::optional<InnerSolver> solver;
  if (config.inner_mode == InnerMode::closed_form) {
    solver.emplace(features, task.fit.Y);
    w = solver->solve(config.lambda);
  } else {
    w = inner_gd(rep, task.fit, config.lambda, config.inner_steps, config.inner_lr,
                 config.inner_momentum)
            .w;
  }

  const double ne = static_cast<double>(task.eval.size());
  const Vector residual = task.eval.X * (a * w) - task.eval.Y;
  out.loss = residual.squaredNorm() / ne;
  if (!want_gradient) return out;

  const Vector xr = (2.0 / ne) * (task.eval.X.transpose() * residual);  // d
  out.gradient = xr * w.transpose();

  if (config.grad_mode == GradMode::exact) {
    const Vector q = a.transpose() * xr;
    Matrix grad_m;
    if (inner_solution_pullback(*solver, features, task.fit.Y, w, q, config.lambda, grad_m))
      out.gradient += task.fit.X.transpose() * grad_m;
    else
      out.fell_back = true;
  }
  return out;
}

}  // namespace

OuterGradient outer_gradient(const Representation& rep, std::span<const MetaTask> batch,
                             const TrainConfig& config) {
  if (batch.empty()) throw Error(Errc::invalid_argument, "batch is empty");
  OuterGradient out{Matrix::Zero(rep.input_dim(), rep.rep_dim()), 0.0, 0};
  for (const auto& task : batch) {
    if (task.fit.dim() != rep.input_dim() || task.eval.dim() != rep.input_dim())
      throw Error(Errc::dimension_mismatch, "task dimension does not match representation");
    const TaskGradient tg = task_gradient(rep, task, config, true);
    out.gradient += tg.gradient;
    out.objective += tg.loss;
    out.exact_fallbacks += tg.fell_back ? 1 : 0;
  }
  const double b = static_cast<double>(batch.size());
  out.gradient /= b;
  out.objective /= b;
  return out;
}

double batch_objective(const Representation& rep, std::span<const MetaTask> batch,
                       const TrainConfig& config) {
  if (batch.empty()) throw Error(Errc::invalid_argument, "batch is empty");
  double total = 0.0;
  for (const auto& task : batch) total += task_gradient(rep, task, config, false).loss;
  return total / static_cast<double>(batch.size());
}

MetaTask draw_meta_task(const SubspaceInstance& instance, const TrainConfig& config,
                        RngStream& rng) {
  const Vector v = sample_task(instance, rng);
  if (config.variant == Variant::trtr) {
    TaskDataset data = sample_dataset(instance, v, config.n, rng);
    return MetaTask{data, data};
  }
  const TaskDataset data = sample_dataset(instance, v, config.n1 + config.n2, rng);
  SplitDataset parts = split(data, config.n1, rng);
  return MetaTask{std::move(parts.train), std::move(parts.val)};
}

std::vector<MetaTask> draw_batch(const SubspaceInstance& instance, const TrainConfig& config,
                                 const RngStream& rng) {
  std::vector<MetaTask> batch;
  batch.reserve(static_cast<std::size_t>(config.batch_tasks));
  for (int i = 0; i < config.batch_tasks; ++i) {
    RngStream task_rng = rng.substream(static_cast<std::uint64_t>(i));
    batch.push_back(draw_meta_task(instance, config, task_rng));
  }
  return batch;
}

TrainedModel train(const SubspaceInstance& instance, const TrainConfig& config,
                   const RngStream& rng, const StepObserver& observer) {
  validate(config);
  const int dim = config.rep_dim > 0 ? config.rep_dim : instance.d;

  const RngStream setup = rng.substream(0);
  RngStream init_rng = setup.substream(0);
  Representation rep = init_representation(instance.d, dim, config.init_scale, init_rng);

  std::vector<MetaTask> pool;
  if (config.task_pool > 0) {
    const RngStream pool_rng = setup.substream(1);
    pool.reserve(static_cast<std::size_t>(config.task_pool));
    for (int t = 0; t < config.task_pool; ++t) {
      RngStream task_rng = pool_rng.substream(static_cast<std::uint64_t>(t));
      pool.push_back(draw_meta_task(instance, config, task_rng));
    }
  }

  Matrix a = rep.matrix();
  Matrix m1 = Matrix::Zero(a.rows(), a.cols());
  Matrix m2 = Matrix::Zero(a.rows(), a.cols());
  const auto& adam = config.adam;

  TrainedModel model;
  model.config = config;
  model.trace.reserve(static_cast<std::size_t>(config.outer_steps));

  for (int step = 0; step < config.outer_steps; ++step) {
    RngStream step_rng = rng.substream(static_cast<std::uint64_t>(step) + 1);
    std::vector<MetaTask> batch;
    if (pool.empty()) {
      batch = draw_batch(instance, config, step_rng);
    } else {
      batch.reserve(static_cast<std::size_t>(config.batch_tasks));
      for (int i = 0; i < config.batch_tasks; ++i)
        batch.push_back(pool[step_rng.uniform_index(pool.size())]);
    }

    const OuterGradient grad = outer_gradient(rep, batch, config);
    if (!std::isfinite(grad.objective) || !grad.gradient.allFinite())
      throw Error(Errc::optimization_diverged,
                  "non-finite outer objective at step " + std::to_string(step));
    // A finite but exploding objective (inner GD past its step-size limit) is divergence too.
    if (!model.trace.empty() && grad.objective > kDivergenceFactor * (model.trace.front().objective + 1.0))
      throw Error(Errc::optimization_diverged,
                  "outer objective exploded at step " + std::to_string(step));
    if (observer) observer(step, rep, batch, grad);
    model.trace.push_back({step, grad.objective, grad.gradient.norm()});
    model.exact_fallbacks += grad.exact_fallbacks;

    const double t = static_cast<double>(step + 1);
    double lr = config.outer_lr;
    if (config.lr_schedule == LrSchedule::cosine)
      lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * step / config.outer_steps));

    m1 = adam.beta1 * m1 + (1.0 - adam.beta1) * grad.gradient;
    m2 = adam.beta2 * m2 + (1.0 - adam.beta2) * grad.gradient.cwiseAbs2();
    const double c1 = 1.0 - std::pow(adam.beta1, t);
    const double c2 = 1.0 - std::pow(adam.beta2, t);
    a.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + adam.epsilon);
    rep = Representation(a);
  }

  model.rep = rep;
  return model;
}

}  // namespace metasplit
