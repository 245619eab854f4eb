#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "metasplit/error.hpp"
#include "metasplit/task_model.hpp"

using namespace metasplit;

namespace {

double max_abs_dev_from_identity(const Matrix& m) {
  return (m - Matrix::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(MakeInstance, FullRankBasisIsOrthogonal) {
  RngStream rng(1);
  const auto inst = make_instance(3, 3, 0.0, rng);
  EXPECT_LE(max_abs_dev_from_identity(inst.basis * inst.basis.transpose()), 1e-10);
  EXPECT_LE(max_abs_dev_from_identity(inst.projector()), 1e-10);
}

TEST(MakeInstance, SimulationConfiguration) {
  RngStream rng(2);
  const auto inst = make_instance(50, 5, 0.5, rng);
  EXPECT_EQ(inst.basis.rows(), 50);
  EXPECT_EQ(inst.basis.cols(), 5);
  EXPECT_DOUBLE_EQ(inst.sigma, 0.5);
  EXPECT_LE(max_abs_dev_from_identity(inst.basis.transpose() * inst.basis), 1e-10);
}

TEST(MakeInstance, SmallBasisOrthonormal) {
  RngStream rng(3);
  const auto inst = make_instance(4, 2, 0.1, rng);
  EXPECT_LE(max_abs_dev_from_identity(inst.basis.transpose() * inst.basis), 1e-10);
}

TEST(MakeInstance, RejectsBadDimensions) {
  RngStream rng(4);
  try {
    make_instance(3, 4, 0.1, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_dimensions);
  }
  EXPECT_THROW(make_instance(3, 0, 0.1, rng), Error);
  EXPECT_THROW(make_instance(3, 2, -1.0, rng), Error);
}

TEST(MakeInstance, OrthonormalAcrossManySeeds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RngStream rng(seed);
    const int d = 2 + static_cast<int>(seed % 30);
    const int k = 1 + static_cast<int>(seed % d);
    const auto inst = make_instance(d, k, 0.3, rng);
    EXPECT_LE(max_abs_dev_from_identity(inst.basis.transpose() * inst.basis), 1e-10) << seed;
  }
}

TEST(SampleTask, RankOneSubspace) {
  Matrix basis = Matrix::Zero(3, 1);
  basis(0, 0) = 1.0;
  const auto inst = make_instance_with_basis(basis, 0.0);
  RngStream rng(5);
  for (int i = 0; i < 10; ++i) {
    const Vector v = sample_task(inst, rng);
    EXPECT_EQ(v(1), 0.0);
    EXPECT_EQ(v(2), 0.0);
  }
}

TEST(SampleTask, UnitEnergyMean) {
  RngStream rng(6);
  const auto inst = make_instance(50, 5, 0.5, rng);
  const int draws = 100000;
  double total = 0.0;
  for (int i = 0; i < draws; ++i) total += sample_task(inst, rng).squaredNorm();
  EXPECT_NEAR(total / draws, 1.0, 0.02);
}

TEST(SampleTask, RawModeEnergyIsK) {
  RngStream rng(7);
  auto inst = make_instance(20, 4, 0.5, rng, TaskScale::raw);
  const int draws = 50000;
  double total = 0.0;
  for (int i = 0; i < draws; ++i) total += sample_task(inst, rng).squaredNorm();
  EXPECT_NEAR(total / draws, 4.0, 0.08);
}

TEST(SampleTask, UnitSphereHasUnitNorm) {
  RngStream rng(8);
  auto inst = make_instance(20, 4, 0.5, rng, TaskScale::unit_sphere);
  for (int i = 0; i < 100; ++i) EXPECT_NEAR(sample_task(inst, rng).norm(), 1.0, 1e-12);
}

TEST(SampleTask, LiesInSubspace) {
  RngStream rng(9);
  const auto inst = make_instance(30, 6, 0.5, rng);
  const Matrix perp = Matrix::Identity(30, 30) - inst.projector();
  for (int i = 0; i < 1000; ++i) {
    const Vector v = sample_task(inst, rng);
    EXPECT_LE((perp * v).norm(), 1e-8 * std::max(1.0, v.norm()));
  }
}

TEST(SampleDataset, NoiselessLabels) {
  RngStream rng(10);
  const auto inst = make_instance(10, 3, 0.0, rng);
  const Vector v = sample_task(inst, rng);
  const auto data = sample_dataset(inst, v, 25, rng);
  EXPECT_LE((data.Y - data.X * v).norm(), 1e-12 * data.Y.norm());
}

TEST(SampleDataset, LabelVarianceWithZeroTask) {
  RngStream rng(11);
  const auto inst = make_instance(3, 1, 1.0, rng);
  const auto data = sample_dataset(inst, Vector::Zero(3), 100000, rng);
  const double mean = data.Y.mean();
  const double var = (data.Y.array() - mean).square().sum() / (data.Y.size() - 1);
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(SampleDataset, NoiseVarianceMatchesSigma) {
  RngStream rng(12);
  const auto inst = make_instance(8, 2, 0.5, rng);
  const Vector v = sample_task(inst, rng);
  const auto data = sample_dataset(inst, v, 20000, rng);
  const Vector noise = data.Y - data.X * v;
  const double var = (noise.array() - noise.mean()).square().sum() / (noise.size() - 1);
  EXPECT_NEAR(var, 0.25, 0.03 * 0.25);
}

TEST(SampleDataset, Shape) {
  RngStream rng(13);
  const auto inst = make_instance(50, 5, 0.5, rng);
  const auto data = sample_dataset(inst, sample_task(inst, rng), 16, rng);
  EXPECT_EQ(data.X.rows(), 16);
  EXPECT_EQ(data.X.cols(), 50);
  EXPECT_EQ(data.size(), 16);
}

TEST(SampleDataset, RejectsEmpty) {
  RngStream rng(14);
  const auto inst = make_instance(5, 2, 0.5, rng);
  try {
    sample_dataset(inst, Vector::Zero(5), 0, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::invalid_size);
  }
}

TEST(Split, Sizes) {
  RngStream rng(15);
  const auto inst = make_instance(50, 5, 0.5, rng);
  const auto data = sample_dataset(inst, sample_task(inst, rng), 16, rng);
  const auto parts = split(data, 8, rng);
  EXPECT_EQ(parts.train.size(), 8);
  EXPECT_EQ(parts.val.size(), 8);
}

TEST(Split, TwoRows) {
  TaskDataset data{Matrix::Identity(2, 2), Vector::LinSpaced(2, 1.0, 2.0)};
  RngStream rng(16);
  for (int rep = 0; rep < 20; ++rep) {
    const auto parts = split(data, 1, rng);
    ASSERT_EQ(parts.train_rows.size(), 1u);
    ASSERT_EQ(parts.val_rows.size(), 1u);
    EXPECT_NE(parts.train_rows[0], parts.val_rows[0]);
    EXPECT_EQ(parts.train.Y(0), data.Y(parts.train_rows[0]));
  }
}

TEST(Split, IsPartitionOfRows) {
  RngStream rng(17);
  const auto inst = make_instance(6, 2, 0.5, rng);
  const auto data = sample_dataset(inst, sample_task(inst, rng), 13, rng);
  for (int n1 = 1; n1 < 13; ++n1) {
    const auto parts = split(data, n1, rng);
    std::vector<Index> all = parts.train_rows;
    all.insert(all.end(), parts.val_rows.begin(), parts.val_rows.end());
    std::sort(all.begin(), all.end());
    std::vector<Index> expected(13);
    std::iota(expected.begin(), expected.end(), Index{0});
    EXPECT_EQ(all, expected);
    for (std::size_t i = 0; i < parts.train_rows.size(); ++i)
      EXPECT_EQ(parts.train.X.row(static_cast<Index>(i)), data.X.row(parts.train_rows[i]));
    for (std::size_t i = 0; i < parts.val_rows.size(); ++i)
      EXPECT_EQ(parts.val.Y(static_cast<Index>(i)), data.Y(parts.val_rows[i]));
  }
}

TEST(Split, RoughlyUniform) {
  TaskDataset data{Matrix::Zero(4, 1), Vector::Zero(4)};
  RngStream rng(18);
  std::vector<int> counts(4, 0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i)
    for (Index r : split(data, 1, rng).train_rows) ++counts[static_cast<std::size_t>(r)];
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(draws), 0.25, 0.01);
}

TEST(Split, RejectsBadSizes) {
  TaskDataset data{Matrix::Zero(4, 2), Vector::Zero(4)};
  RngStream rng(19);
  for (int n1 : {0, 4, 5, -1}) {
    try {
      split(data, n1, rng);
      FAIL() << n1;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::invalid_split);
    }
  }
}

TEST(Determinism, SameStreamSameDraws) {
  auto run = [] {
    RngStream rng(77, 3);
    const auto inst = make_instance(12, 3, 0.4, rng);
    const Vector v = sample_task(inst, rng);
    const auto data = sample_dataset(inst, v, 10, rng);
    const auto parts = split(data, 4, rng);
    return std::tuple{inst.basis, v, data.X, data.Y, parts.train_rows};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(std::get<0>(a), std::get<0>(b));
  EXPECT_EQ(std::get<1>(a), std::get<1>(b));
  EXPECT_EQ(std::get<2>(a), std::get<2>(b));
  EXPECT_EQ(std::get<3>(a), std::get<3>(b));
  EXPECT_EQ(std::get<4>(a), std::get<4>(b));
}

TEST(Determinism, SubstreamsDifferAndRepeat) {
  const RngStream root(5);
  RngStream a = root.substream(1), b = root.substream(1), c = root.substream(2);
  const double x = a.gaussian();
  EXPECT_EQ(x, b.gaussian());
  EXPECT_NE(x, c.gaussian());
  RngStream other_seed(6);
  EXPECT_NE(RngStream(5).gaussian(), other_seed.gaussian());
}
