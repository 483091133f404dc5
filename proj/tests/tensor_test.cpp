#include "stal/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "stal/checkpoint.hpp"
#include "stal/nn.hpp"
#include "stal/rng.hpp"

namespace {

using stal::Rng;
using stal::Tensor;
using stal::nn::NamedTensor;

TEST(TensorTest, ShapeAndSize) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.rank(), 3);
  EXPECT_EQ(t.size(), 24);
  EXPECT_EQ(t.dim(1), 3);
  for (std::int64_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 0.0);
}

TEST(TensorTest, RowMajorOffsets) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.offset({0, 0, 0}), 0);
  EXPECT_EQ(t.offset({0, 0, 3}), 3);
  EXPECT_EQ(t.offset({0, 1, 0}), 4);
  EXPECT_EQ(t.offset({1, 0, 0}), 12);
  EXPECT_EQ(t.offset({1, 2, 3}), 23);
}

TEST(TensorTest, AtReadsAndWrites) {
  Tensor t({2, 2});
  t.at({1, 0}) = 5.0;
  EXPECT_EQ(t[2], 5.0);
  EXPECT_EQ(t.at({1, 0}), 5.0);
}

TEST(TensorTest, NonPositiveExtentThrows) {
  EXPECT_THROW(Tensor({2, 0, 3}), std::invalid_argument);
  EXPECT_THROW(Tensor({-1}), std::invalid_argument);
}

TEST(TensorTest, RankAboveFiveThrows) {
  EXPECT_THROW(Tensor({1, 1, 1, 1, 1, 1}), std::invalid_argument);
}

TEST(TensorTest, ValueConstructorChecksLength) {
  EXPECT_NO_THROW(Tensor({2, 2}, {1, 2, 3, 4}));
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST(TensorTest, FullAndFill) {
  Tensor t = Tensor::full({3}, 2.5);
  EXPECT_EQ(t[0], 2.5);
  t.fill(-1.0);
  EXPECT_EQ(t[2], -1.0);
}

TEST(TensorTest, ReshapedPreservesData) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.rank(), 2);
  EXPECT_EQ(r.dim(0), 3);
  EXPECT_EQ(r.at({2, 1}), 6.0);
  EXPECT_THROW(t.reshaped({4, 2}), std::invalid_argument);
}

TEST(TensorTest, ArithmeticHelpers) {
  Tensor a({2}, {1, 2});
  Tensor b({2}, {10, 20});
  a.add(b);
  EXPECT_EQ(a[0], 11.0);
  a.add_scaled(b, 0.5);
  EXPECT_EQ(a[1], 32.0);
  a.scale(2.0);
  EXPECT_EQ(a[0], 32.0);
  Tensor c({3});
  EXPECT_THROW(a.add(c), std::invalid_argument);
}

TEST(TensorTest, AllFinite) {
  Tensor t({2}, {1.0, 2.0});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(ContainerTest, RoundTripsTensors) {
  Rng rng(3);
  std::vector<NamedTensor> tensors;
  tensors.push_back({"alpha", Tensor({2, 3})});
  tensors.push_back({"beta/weight", Tensor({4})});
  for (auto& nt : tensors) {
    for (std::int64_t i = 0; i < nt.value.size(); ++i) nt.value[i] = rng.uniform(-5, 5);
  }
  std::stringstream buf;
  stal::nn::write_container(buf, tensors);
  const auto back = stal::nn::read_container(buf);
  ASSERT_EQ(back.size(), tensors.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].name, tensors[i].name);
    ASSERT_TRUE(back[i].value.same_shape(tensors[i].value));
    for (std::int64_t j = 0; j < back[i].value.size(); ++j) {
      EXPECT_EQ(back[i].value[j], tensors[i].value[j]);  // bit-exact
    }
  }
}

TEST(ContainerTest, WriteIsByteDeterministic) {
  std::vector<NamedTensor> tensors{{"t", Tensor({2, 2}, {1, 2, 3, 4})}};
  std::stringstream a;
  std::stringstream b;
  stal::nn::write_container(a, tensors);
  stal::nn::write_container(b, tensors);
  EXPECT_EQ(a.str(), b.str());
}

TEST(ContainerTest, StartsWithMagicAndVersion) {
  std::stringstream buf;
  stal::nn::write_container(buf, {});
  const std::string bytes = buf.str();
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(bytes.substr(0, 4), "STLC");
  const unsigned char* v = reinterpret_cast<const unsigned char*>(bytes.data() + 4);
  const std::uint32_t version = v[0] | (v[1] << 8) | (v[2] << 16) | (v[3] << 24);
  EXPECT_EQ(version, stal::nn::kContainerVersion);
}

TEST(ContainerTest, RejectsBadMagic) {
  std::stringstream buf("NOPE\x01\x00\x00\x00");
  EXPECT_THROW(stal::nn::read_container(buf), std::runtime_error);
}

TEST(ContainerTest, RejectsWrongVersion) {
  std::stringstream buf;
  stal::nn::write_container(buf, {});
  std::string bytes = buf.str();
  bytes[4] = 99;
  std::stringstream bad(bytes);
  EXPECT_THROW(stal::nn::read_container(bad), std::runtime_error);
}

TEST(ContainerTest, RejectsTruncatedPayload) {
  std::stringstream buf;
  stal::nn::write_container(buf, {{"t", Tensor({4})}});
  std::string bytes = buf.str();
  bytes.resize(bytes.size() - 8);
  std::stringstream bad(bytes);
  EXPECT_THROW(stal::nn::read_container(bad), std::runtime_error);
}

class CheckpointFileTest : public ::testing::Test {
 protected:
  void SetUp() override {
    path_ = ::testing::TempDir() + "ckpt_test.stlc";
  }
  std::string path_;
};

TEST_F(CheckpointFileTest, SaveLoadRestoresValues) {
  stal::nn::Param a("layer/weight", {2, 2});
  a.value = Tensor({2, 2}, {1, 2, 3, 4});
  stal::nn::Param b("layer/bias", {2});
  b.value = Tensor({2}, {5, 6});
  stal::nn::save_checkpoint(path_, {&a, &b});

  stal::nn::Param a2("layer/weight", {2, 2});
  stal::nn::Param b2("layer/bias", {2});
  stal::nn::load_checkpoint(path_, {&a2, &b2});
  EXPECT_EQ(a2.value[3], 4.0);
  EXPECT_EQ(b2.value[0], 5.0);
}

TEST_F(CheckpointFileTest, MissingParameterNamed) {
  stal::nn::Param a("present", {1});
  stal::nn::save_checkpoint(path_, {&a});
  stal::nn::Param b("absent", {1});
  try {
    stal::nn::load_checkpoint(path_, {&b});
    FAIL() << "expected error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("absent"), std::string::npos);
  }
}

TEST_F(CheckpointFileTest, ShapeMismatchNamed) {
  stal::nn::Param a("p", {2});
  stal::nn::save_checkpoint(path_, {&a});
  stal::nn::Param b("p", {3});
  try {
    stal::nn::load_checkpoint(path_, {&b});
    FAIL() << "expected error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("p"), std::string::npos);
  }
}

TEST_F(CheckpointFileTest, UnknownRecordNamed) {
  stal::nn::Param a("known", {1});
  stal::nn::Param extra("stray", {1});
  stal::nn::save_checkpoint(path_, {&a, &extra});
  try {
    stal::nn::load_checkpoint(path_, {&a});
    FAIL() << "expected error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("stray"), std::string::npos);
  }
}

}  // namespace
