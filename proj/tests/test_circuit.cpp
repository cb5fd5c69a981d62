#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "spncf/circuit.hpp"
#include "spncf/errors.hpp"
#include "spncf/serialize.hpp"
#include "spncf/structure.hpp"
#include "spncf/training.hpp"
#include "test_support.hpp"

namespace spncf {
namespace {

using testing::RandomCircuitBuilder;
using testing::RandomLeaves;

TEST(Validate, SumOverDifferentScopesIsNotSmooth) {
  Circuit c;
  c.num_variables = 2;
  NodeId a = c.add_bernoulli(0, 0.3);
  NodeId b = c.add_bernoulli(1, 0.6);
  c.set_root(c.add_sum({a, b}));
  ValidationReport report = validate(c);
  EXPECT_FALSE(report.ok);
  EXPECT_TRUE(report.has(ViolationKind::kSmoothness));
  EXPECT_EQ(to_string(ViolationKind::kSmoothness), "smoothness");
}

TEST(Validate, ProductOverSharedVariableIsNotDecomposable) {
  Circuit c;
  c.num_variables = 1;
  NodeId a = c.add_bernoulli(0, 0.3);
  NodeId b = c.add_bernoulli(0, 0.6);
  c.set_root(c.add_product({a, b}));
  ValidationReport report = validate(c);
  EXPECT_FALSE(report.ok);
  EXPECT_TRUE(report.has(ViolationKind::kDecomposability));
}

TEST(Validate, SingleGaussianLeafIsValid) {
  Circuit c;
  c.num_variables = 1;
  c.set_root(c.add_gaussian(0, 0.0, 1.0));
  EXPECT_TRUE(validate(c).ok);
}

TEST(Validate, ReportsEveryViolationWithoutMutating) {
  Circuit c;
  c.num_variables = 2;
  NodeId a = c.add_bernoulli(0, 0.3);
  NodeId b = c.add_bernoulli(1, 0.6);
  NodeId bad_sum = c.add_sum({a, b}, Eigen::Vector2d(std::log(0.7), std::log(0.7)));
  NodeId bad_product = c.add_product({a, a});
  c.set_class_roots({bad_sum, bad_product});
  const std::string before = to_json_string(c);
  ValidationReport first = validate(c);
  ValidationReport second = validate(c);
  EXPECT_TRUE(first.has(ViolationKind::kSmoothness));
  EXPECT_TRUE(first.has(ViolationKind::kWeightNormalization));
  EXPECT_TRUE(first.has(ViolationKind::kDecomposability));
  EXPECT_EQ(first.violations.size(), second.violations.size());
  EXPECT_EQ(before, to_json_string(c));
  EXPECT_THROW(require_valid(c), ValidationError);
}

TEST(Validate, DetectsDanglingAndOrderViolations) {
  Circuit c;
  c.num_variables = 1;
  NodeId leaf = c.add_bernoulli(0, 0.5);
  c.nodes.push_back(SumNode{{NodeId{7}}, Eigen::VectorXd::Zero(1)});
  c.set_root(leaf);
  EXPECT_TRUE(validate(c).has(ViolationKind::kDanglingReference));

  Circuit order;
  order.num_variables = 1;
  order.nodes.push_back(SumNode{{NodeId{1}}, Eigen::VectorXd::Zero(1)});
  order.nodes.push_back(BernoulliLeaf{0, 0.5});
  order.set_root(NodeId{0});
  EXPECT_TRUE(validate(order).has(ViolationKind::kTopologicalOrder));
}

TEST(Validate, DetectsBadLeafParametersAndPrior) {
  Circuit c;
  c.num_variables = 1;
  c.set_root(c.add_gaussian(0, 0.0, -1.0));
  EXPECT_TRUE(validate(c).has(ViolationKind::kLeafParameters));

  Circuit p;
  p.num_variables = 1;
  p.set_class_roots({p.add_bernoulli(0, 0.2), p.add_bernoulli(0, 0.7)});
  p.log_prior = Eigen::Vector2d(std::log(0.5), std::log(0.6));
  EXPECT_TRUE(validate(p).has(ViolationKind::kPrior));
}

TEST(LogValue, BernoulliLeaf) {
  Circuit c;
  c.num_variables = 1;
  NodeId leaf = c.add_bernoulli(0, 0.5);
  c.set_root(leaf);
  EXPECT_NEAR(log_value(c, leaf, Eigen::VectorXd::Constant(1, 1.0)), -0.693147, 1e-6);
}

TEST(LogValue, BernoulliMixture) {
  Circuit c;
  c.num_variables = 1;
  NodeId a = c.add_bernoulli(0, 0.2);
  NodeId b = c.add_bernoulli(0, 0.8);
  NodeId s = c.add_sum({a, b});
  c.set_root(s);
  EXPECT_NEAR(log_value(c, s, Eigen::VectorXd::Constant(1, 1.0)), std::log(0.5 * 0.2 + 0.5 * 0.8), 1e-12);
}

TEST(LogValue, IndependentProduct) {
  Circuit c;
  c.num_variables = 2;
  NodeId p = c.add_product({c.add_bernoulli(0, 0.5), c.add_bernoulli(1, 0.5)});
  c.set_root(p);
  EXPECT_NEAR(log_value(c, p, Eigen::Vector2d(1.0, 1.0)), std::log(0.25), 1e-12);
}

TEST(LogValue, AllMissingEvidenceIsLogOne) {
  Rng rng(11);
  RandomCircuitBuilder builder(rng, RandomLeaves::kMixed);
  for (int trial = 0; trial < 10; ++trial) {
    Circuit c = builder.build(5, 1);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(5, kMissing);
    EXPECT_NEAR(log_value(c, c.class_roots[0], x), 0.0, 1e-12);
  }
}

TEST(LogValue, SumsToOneOverBinaryAssignments) {
  Rng rng(5);
  RandomCircuitBuilder builder(rng, RandomLeaves::kBernoulli);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_int(8));
    Circuit c = builder.build(d, 1);
    ASSERT_TRUE(validate(c).ok);
    double total = 0.0;
    testing::for_each_binary(d, [&](const Eigen::VectorXd& x) { total += std::exp(log_value(c, c.class_roots[0], x)); });
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(LogValue, PartialEvidenceMatchesExplicitMarginal) {
  Rng rng(8);
  RandomCircuitBuilder builder(rng, RandomLeaves::kBernoulli);
  Circuit c = builder.build(4, 1);
  Eigen::VectorXd partial(4);
  partial << 1.0, kMissing, 0.0, kMissing;
  double marginal = 0.0;
  testing::for_each_binary(4, [&](const Eigen::VectorXd& x) {
    if (x[0] == 1.0 && x[2] == 0.0) marginal += std::exp(log_value(c, c.class_roots[0], x));
  });
  EXPECT_NEAR(std::exp(log_value(c, c.class_roots[0], partial)), marginal, 1e-12);
}

TEST(LogValue, AgreesWithLinearSpaceRecursion) {
  Rng rng(21);
  RandomCircuitBuilder builder(rng, RandomLeaves::kMixed);
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_int(6));
    Circuit c = builder.build(d, 2);
    Eigen::VectorXd x(d);
    for (int j = 0; j < d; ++j) {
      const double r = rng.uniform();
      x[j] = r < 0.2 ? kMissing : (rng.uniform() < 0.5 ? 0.0 : 1.0);
    }
    for (NodeId root : c.class_roots) {
      const double expected = testing::linear_value(c, root, x);
      EXPECT_NEAR(std::exp(log_value(c, root, x)), expected, 1e-10 * std::max(1.0, expected));
    }
  }
}

TEST(LogValue, RejectsWrongLengthAndInfiniteEvidence) {
  Circuit c;
  c.num_variables = 2;
  NodeId p = c.add_product({c.add_gaussian(0, 0.0, 1.0), c.add_gaussian(1, 0.0, 1.0)});
  c.set_root(p);
  EXPECT_THROW(log_value(c, p, Eigen::VectorXd::Zero(3)), InputError);
  EXPECT_THROW(log_value(c, p, Eigen::Vector2d(0.0, INFINITY)), InputError);
}

TEST(LogValue, ValuesNeverExceedZeroForDiscreteModels) {
  Rng rng(3);
  RandomCircuitBuilder builder(rng, RandomLeaves::kBernoulli);
  Circuit c = builder.build(6, 1);
  testing::for_each_binary(6, [&](const Eigen::VectorXd& x) { EXPECT_LE(log_value(c, c.class_roots[0], x), 1e-12); });
}

TEST(Serialize, MinimalCircuitRoundTrips) {
  Circuit c;
  c.num_variables = 1;
  c.set_root(c.add_gaussian(0, 0.25, 2.0));
  const std::string text = to_json_string(c);
  Circuit back = circuit_from_json_string(text);
  EXPECT_EQ(to_json_string(back), text);
  ASSERT_EQ(back.nodes.size(), 1U);
  const auto& g = std::get<GaussianLeaf>(back.nodes[0]);
  EXPECT_EQ(g.mean, 0.25);
  EXPECT_EQ(g.variance, 2.0);
}

TEST(Serialize, AllNodeKindsRoundTripBitExact) {
  Rng rng(13);
  RandomCircuitBuilder builder(rng, RandomLeaves::kMixed);
  Circuit c = builder.build(5, 2);
  NodeId cat = c.add_categorical(0, Eigen::Vector3d(0.2, 0.3, 0.5));
  NodeId rest = c.add_product({c.add_bernoulli(1, 0.1), c.add_gaussian(2, 0.3, 0.7), c.add_bernoulli(3, 0.9),
                               c.add_gaussian(4, 1.0 / 3.0, 0.1)});
  c.class_roots.push_back(c.add_product({cat, rest}));
  c.log_prior = Eigen::Vector3d(std::log(0.2), std::log(0.3), std::log(0.5));
  ASSERT_TRUE(validate(c).ok);
  std::stringstream buffer;
  save(c, buffer);
  Circuit back = load(buffer);
  EXPECT_EQ(to_json_string(back), to_json_string(c));
  EXPECT_EQ(back.log_prior, c.log_prior);
  EXPECT_EQ(back.variance_floor, c.variance_floor);
}

TEST(Serialize, RejectsUnknownVersion) {
  Circuit c;
  c.num_variables = 1;
  c.set_root(c.add_bernoulli(0, 0.5));
  std::string text = to_json_string(c);
  const std::string needle = "\"format_version\":1";
  const auto pos = text.find(needle);
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, needle.size(), "\"format_version\":999");
  try {
    circuit_from_json_string(text);
    FAIL() << "expected a version mismatch";
  } catch (const VersionMismatchError& e) {
    EXPECT_EQ(e.found(), 999);
  }
}

TEST(Serialize, RejectsMalformedAndInvalidDocuments) {
  EXPECT_THROW(circuit_from_json_string("{not json"), FormatError);
  EXPECT_THROW(circuit_from_json_string("[1,2,3]"), FormatError);

  Circuit c;
  c.num_variables = 2;
  c.set_root(c.add_sum({c.add_bernoulli(0, 0.3), c.add_bernoulli(1, 0.4)}));
  EXPECT_THROW(circuit_from_json_string(to_json_string(c)), ValidationError);
}

TEST(Serialize, TrainedModelRoundTripPreservesValues) {
  Dataset data = make_moons(300, 0.1, 4);
  StructureConfig sc;
  sc.repetitions = 2;
  sc.sum_nodes_per_region = 3;
  sc.leaf_distributions_per_region = 4;
  TrainConfig tc;
  tc.epochs = 5;
  Circuit trained = fit(build_rat_spn(2, sc), data, tc).circuit;

  const auto path = std::filesystem::temp_directory_path() / "spncf_roundtrip_model.json";
  save(trained, path);
  Circuit back = load(path);
  std::filesystem::remove(path);

  Rng rng(99);
  for (int i = 0; i < 100; ++i) {
    Eigen::Vector2d x(rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5));
    for (int y = 0; y < 2; ++y)
      EXPECT_NEAR(log_value(back, back.class_roots[y], x), log_value(trained, trained.class_roots[y], x), 1e-12);
  }
}

TEST(Serialize, MissingFileIsAnInputError) {
  EXPECT_THROW(load(std::filesystem::path("/nonexistent/model.json")), InputError);
}

}  // namespace
}  // namespace spncf
