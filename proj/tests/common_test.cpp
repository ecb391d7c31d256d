// tests/common_test.cpp

// Copyright 2026 The DVBx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "dvbx/binary_io.hpp"
#include "dvbx/common.hpp"
#include "dvbx/config.hpp"
#include "dvbx/rng.hpp"
#include "test_util.hpp"

namespace dvbx {
namespace {

TEST(Softmax, MatchesDirectEvaluation) {
  Matrix z(2, 3);
  z << 1.0, 0.0, -1.0, 1000.0, 1000.0, kNegInf;
  const Matrix p = RowSoftmax(z);
  const double e = std::exp(1.0), ei = std::exp(-1.0);
  EXPECT_NEAR(p(0, 0), e / (e + 1.0 + ei), 1e-15);
  EXPECT_NEAR(p(0, 2), ei / (e + 1.0 + ei), 1e-15);
  EXPECT_DOUBLE_EQ(p(1, 0), 0.5);
  EXPECT_EQ(p(1, 2), 0.0);
}

TEST(Softmax, AllNegInfRowIsNumericError) {
  Matrix z = Matrix::Constant(1, 2, kNegInf);
  EXPECT_THROW(RowSoftmax(z), NumericError);
}

TEST(Softmax, BackwardMatchesFiniteDifference) {
  Rng rng(3);
  const Matrix z = testing::RandomMatrix(rng, 3, 4);
  const Matrix w = testing::RandomMatrix(rng, 3, 4);  // L = sum(w .* softmax(z))
  const Matrix g = RowSoftmaxBackward(RowSoftmax(z), w);
  const double h = 1e-6;
  for (Index i = 0; i < z.size(); ++i) {
    Matrix zp = z, zm = z;
    zp.data()[i] += h;
    zm.data()[i] -= h;
    const double num =
        ((RowSoftmax(zp).array() * w.array()).sum() - (RowSoftmax(zm).array() * w.array()).sum()) /
        (2 * h);
    EXPECT_NEAR(g.data()[i], num, 1e-8);
  }
}

TEST(LogSumExp, StableForLargeValues) {
  Vector x(3);
  x << 1000.0, 1000.0, kNegInf;
  EXPECT_NEAR(LogSumExp(x), 1000.0 + std::log(2.0), 1e-12);
  EXPECT_EQ(LogSumExp(Vector::Constant(2, kNegInf)), kNegInf);
}

TEST(ByteIo, ScalarsRoundTripLittleEndian) {
  io::ByteWriter w;
  w.Header("TESTMAGC", 7);
  w.U32(0x01020304u);
  w.F64(-0.1);
  w.F32(3.25f);
  w.String("h\xc3\xa9llo");
  const auto &b = w.buffer();
  ASSERT_EQ(b.size(), 16u + 4 + 8 + 4 + 8 + 6);
  EXPECT_EQ(b[16], 0x04);  // least significant byte first
  EXPECT_EQ(b[8], 7);

  io::ByteReader r(b, "test");
  EXPECT_EQ(r.Header("TESTMAGC"), 7u);
  EXPECT_EQ(r.U32(), 0x01020304u);
  EXPECT_EQ(r.F64(), -0.1);
  EXPECT_EQ(r.F32(), 3.25f);
  EXPECT_EQ(r.String(), "h\xc3\xa9llo");
  EXPECT_NO_THROW(r.ExpectEnd());
}

TEST(ByteIo, BadMagicTruncationAndTrailingBytes) {
  io::ByteWriter w;
  w.Header("TESTMAGC", 1);
  w.U64(5);
  io::ByteReader bad(w.buffer(), "t");
  EXPECT_THROW(bad.Header("OTHERMAG"), FormatError);

  auto cut = w.buffer();
  cut.resize(cut.size() - 1);
  io::ByteReader r(cut, "t");
  r.Header("TESTMAGC");
  EXPECT_THROW(r.U64(), FormatError);

  io::ByteReader shortr(std::vector<char>(10, 'x'), "t");
  EXPECT_THROW(shortr.Header("TESTMAGC"), FormatError);

  io::ByteReader trailing(w.buffer(), "t");
  trailing.Header("TESTMAGC");
  EXPECT_THROW(trailing.ExpectEnd(), FormatError);
}

TEST(ByteIo, DeclaredShapeLargerThanPayloadFails) {
  io::ByteWriter w;
  w.F64(1.0);
  io::ByteReader r(w.buffer(), "t");
  EXPECT_THROW(r.MatrixF64(1000000, 1000000), FormatError);
}

TEST(ByteIo, AtomicWriteLeavesNoTemporary) {
  const auto dir = std::filesystem::temp_directory_path() / "dvbx_common_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "x.bin";
  io::WriteFileAtomic(path, std::vector<char>{'a', 'b'});
  EXPECT_EQ(io::ReadFileBytes(path), (std::vector<char>{'a', 'b'}));
  int files = 0;
  for ([[maybe_unused]] const auto &e : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(io::ReadFileBytes(path), FormatError);
}

TEST(Config, ParsesCommentsAndWhitespace) {
  const auto kv = ParseKeyValueConfig("# header\n fa = 0.2 \n\nloop_prob=0 # trailing\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("fa"), "0.2");
  EXPECT_EQ(kv.at("loop_prob"), "0");
}

TEST(Config, RejectsMalformedLines) {
  EXPECT_THROW(ParseKeyValueConfig("novalue\n"), ConfigError);
  EXPECT_THROW(ParseKeyValueConfig("a=1\na=2\n"), ConfigError);
  EXPECT_THROW(ParseKeyValueConfig("Bad-Key=1\n"), ConfigError);
  EXPECT_THROW(ParseKeyValueConfig("=1\n"), ConfigError);
}

TEST(Config, TypedConversion) {
  EXPECT_EQ(ConfigDouble("k", "1e-4"), 1e-4);
  EXPECT_EQ(ConfigInt("k", "-3"), -3);
  EXPECT_EQ(ConfigU64("k", "18446744073709551615"), 18446744073709551615ull);
  EXPECT_TRUE(ConfigBool("k", "true"));
  EXPECT_FALSE(ConfigBool("k", "0"));
  EXPECT_THROW(ConfigDouble("k", "1.5x"), ConfigError);
  EXPECT_THROW(ConfigInt("k", "2.5"), ConfigError);
  EXPECT_THROW(ConfigBool("k", "maybe"), ConfigError);
}

TEST(Rng, Mt19937_64ReferenceValue) {
  // The standard fixes the 10000th output of a default-seeded engine.
  std::mt19937_64 e;
  e.discard(9999);
  EXPECT_EQ(e(), 9981545732273789042ull);
}

TEST(Rng, DeterministicAndBounded) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.Uniform();
    EXPECT_EQ(u, b.Uniform());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const int k = a.UniformInt(-2, 3);
    EXPECT_EQ(k, b.UniformInt(-2, 3));
    EXPECT_GE(k, -2);
    EXPECT_LE(k, 3);
  }
  EXPECT_NE(Rng::Derive(1, 0), Rng::Derive(1, 1));
  EXPECT_NE(Rng::Derive(1, 0), Rng::Derive(2, 0));
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.Normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

}  // namespace
}  // namespace dvbx
