#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "superres/matrix_io.hpp"

using namespace superres;

namespace {
std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("superres_io_" + name)).string();
}
}  // namespace

TEST(MatrixIo, IdentityRoundTrip) {
  const auto path = temp_path("identity.txt");
  store_matrix(identity_crosstalk(4), path);
  const auto c = load_matrix(path);
  EXPECT_TRUE(c.entries == ComplexMatrix::Identity(4, 4));
  ASSERT_TRUE(std::holds_alternative<LoadedOrigin>(c.provenance));
  EXPECT_EQ(std::get<LoadedOrigin>(c.provenance).path, path);
  EXPECT_FALSE(std::get<LoadedOrigin>(c.provenance).non_unitary);
}

TEST(MatrixIo, RandomRoundTripIsBitExact) {
  for (auto fmt : {MatrixFileFormat::text, MatrixFileFormat::csv}) {
    const auto path = temp_path(fmt == MatrixFileFormat::csv ? "random.csv" : "random.txt");
    const auto src = sample_random_crosstalk(9, 0.3, 5, 2);
    store_matrix(src, path, fmt);
    EXPECT_TRUE(load_matrix(path).entries == src.entries);
  }
}

TEST(MatrixIo, NonUnitaryAcceptedWithFlag) {
  const auto c = parse_matrix(format_matrix(uniform_crosstalk(9, 0.1).entries));
  const auto& o = std::get<LoadedOrigin>(c.provenance);
  EXPECT_TRUE(o.non_unitary);
  EXPECT_GT(o.unitarity_deviation, kUnitarityWarnThreshold);
}

TEST(MatrixIo, RowCountMismatch) {
  const std::string full = format_matrix(ComplexMatrix::Identity(9, 9));
  std::istringstream in(full);
  std::string line, truncated;
  for (int i = 0; i < 81 && std::getline(in, line); ++i) truncated += line + "\n";  // header + 80 rows
  try {
    parse_matrix(truncated);
    FAIL() << "expected a dimension mismatch";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("mismatch"), std::string::npos) << e.what();
  }
}

TEST(MatrixIo, MalformedInputs) {
  EXPECT_THROW(parse_matrix(""), ConfigError);
  EXPECT_THROW(parse_matrix("D x\n"), ConfigError);
  EXPECT_THROW(parse_matrix("D 1\n0 0 1 zero\n"), ConfigError);
  EXPECT_THROW(parse_matrix("D 1\n0 1 1 0\n"), ConfigError);
  EXPECT_THROW(parse_matrix("D 2\n0 0 1 0\n0 0 1 0\n1 0 0 0\n1 1 1 0\n"), ConfigError);
  EXPECT_THROW(load_matrix(temp_path("does_not_exist.txt")), ConfigError);
}

TEST(MatrixIo, CsvHeaderAccepted) {
  const auto c = parse_matrix("row,col,re,im\n0,0,1,0\n0,1,0,0\n1,0,0,0\n1,1,0,1\n");
  EXPECT_EQ(c.dim(), 2);
  EXPECT_EQ(c.entries(1, 1), Complex(0, 1));
}
