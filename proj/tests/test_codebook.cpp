#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flowprint/codebook.hpp"
#include "test_support.hpp"

using namespace flowprint;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("flowprint_test_" + name);
}

}  // namespace

TEST(Codebook, SingleCodewordFitsHorizon) {
  const auto cb = generate_codebook(1, 5.0, 2.0, RngState{1, 0});
  ASSERT_EQ(cb.size(), 1u);
  EXPECT_EQ(cb.fingerprints[0].index, 1u);
  for (double o : cb.fingerprints[0].offsets) {
    EXPECT_GE(o, 0.0);
    EXPECT_LE(o, 2.0);
  }
}

TEST(Codebook, MeanCountWithinBand) {
  const auto cb = generate_codebook(100, 7.36, 50.0, RngState{2, 0});
  double total = 0.0;
  for (const auto& fp : cb.fingerprints) total += static_cast<double>(fp.size());
  // mean 368, sd of the average over 100 codewords sqrt(368) / 10
  EXPECT_NEAR(total / 100.0, 368.0, 3.0 * std::sqrt(368.0) / 10.0);
}

TEST(Codebook, CountDistributionOverManyCodewords) {
  const auto cb = generate_codebook(2000, 3.0, 10.0, RngState{3, 0});
  double total = 0.0;
  for (const auto& fp : cb.fingerprints) total += static_cast<double>(fp.size());
  EXPECT_NEAR(total / 2000.0, 30.0, 3.0 * std::sqrt(30.0 / 2000.0));
}

TEST(Codebook, Deterministic) {
  const auto a = generate_codebook(10, 2.0, 5.0, RngState{9, 1});
  const auto b = generate_codebook(10, 2.0, 5.0, RngState{9, 1});
  EXPECT_EQ(encode_codebook(a), encode_codebook(b));
}

TEST(Codebook, InvalidParameters) {
  EXPECT_THROW(generate_codebook(0, 1.0, 1.0, RngState{}), DomainError);
  EXPECT_THROW(generate_codebook(1, 0.0, 1.0, RngState{}), DomainError);
  EXPECT_THROW(generate_codebook(1, 1.0, 0.0, RngState{}), DomainError);
}

TEST(Scale, IdentityAtEqualRates) {
  Fingerprint fp{1, {0.5, 1.25, 3.0}};
  EXPECT_EQ(scale_fingerprint(fp, 2.0, 2.0), fp);
}

TEST(Scale, MultipliesDelays) {
  Fingerprint fp{1, {2.0, 6.0}};  // delays (2, 4)
  const auto s = scale_fingerprint(fp, 1.0, 4.0);
  const auto d = s.delays();
  ASSERT_EQ(d.size(), 2u);
  EXPECT_DOUBLE_EQ(d[0], 0.5);
  EXPECT_DOUBLE_EQ(d[1], 1.0);
}

TEST(Scale, PreservesCountAndScalesDuration) {
  const auto cb = generate_codebook(20, 2.0, 30.0, RngState{4, 0});
  for (const auto& fp : cb.fingerprints) {
    const auto s = scale_fingerprint(fp, 2.0, 5.0);
    ASSERT_EQ(s.size(), fp.size());
    if (!fp.offsets.empty()) EXPECT_DOUBLE_EQ(s.offsets.back(), fp.offsets.back() * (2.0 / 5.0));
  }
}

TEST(Scale, ScaledCodewordsArePoissonAtTargetRate) {
  std::vector<double> gaps;
  // Long windows: spacings of many uniform points are close to exponential.
  const auto cb = generate_codebook(100, 2.0, 500.0, RngState{5, 0});
  for (const auto& fp : cb.fingerprints) {
    const auto d = scale_fingerprint(fp, 2.0, 5.0).delays();
    // Skip the anchor-to-first delay, which is a truncated exponential.
    for (std::size_t k = 1; k < d.size(); ++k) gaps.push_back(d[k]);
  }
  ASSERT_GT(gaps.size(), 90000u);
  const double ks = testsupport::ks_statistic(gaps, [](double x) { return testsupport::exp_cdf(5.0, x); });
  // Gaps inside a finite window are slightly short-biased; allow the 0.01 level.
  EXPECT_LT(ks, testsupport::ks_critical_001(static_cast<double>(gaps.size())) * 2.0);
}

TEST(Scale, RejectsBadRates) {
  Fingerprint fp{1, {1.0}};
  EXPECT_THROW(scale_fingerprint(fp, 0.0, 1.0), DomainError);
  EXPECT_THROW(scale_fingerprint(fp, 1.0, -1.0), DomainError);
}

TEST(CodebookFile, RoundTripBitExact) {
  const auto cb = generate_codebook(25, 7.36, 20.0, RngState{6, 0});
  const auto path = temp_file("roundtrip.bin");
  save_codebook(cb, path);
  EXPECT_EQ(load_codebook(path), cb);
  std::filesystem::remove(path);
}

TEST(CodebookFile, EmptyCodewordSurvivesRoundTrip) {
  Codebook cb{1.0, 1.0, {Fingerprint{1, {}}, Fingerprint{2, {0.5}}}};
  EXPECT_EQ(decode_codebook(encode_codebook(cb)), cb);
}

TEST(CodebookFile, LayoutIsLittleEndian) {
  Codebook cb{2.0, 3.0, {Fingerprint{1, {0.5}}}};
  const auto bytes = encode_codebook(cb);
  ASSERT_EQ(bytes.size(), 8u + 4 + 4 + 8 + 8 + 8 + 8 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 8), std::string("FLOWPCB\0", 8));
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);   // version
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 1);  // m
  // 2.0 = 0x4000000000000000: the last byte of the rate field.
  EXPECT_EQ(static_cast<unsigned char>(bytes[24 + 7]), 0x40);
}

TEST(CodebookFile, TruncatedFileIsMalformed) {
  const auto bytes = encode_codebook(generate_codebook(3, 5.0, 4.0, RngState{7, 0}));
  for (std::size_t cut : {std::size_t{4}, std::size_t{20}, bytes.size() - 3}) {
    EXPECT_THROW(decode_codebook(std::string_view(bytes).substr(0, cut)), FormatError) << cut;
  }
}

TEST(CodebookFile, WrongVersionRejected) {
  auto bytes = encode_codebook(Codebook{1.0, 1.0, {Fingerprint{1, {0.5}}}});
  bytes[8] = 2;
  EXPECT_THROW(decode_codebook(bytes), FormatError);
}

TEST(CodebookFile, DuplicateIndexIsValidationError) {
  Codebook cb{1.0, 1.0, {Fingerprint{1, {0.5}}, Fingerprint{1, {0.25}}}};
  std::string bytes = encode_codebook(cb);
  EXPECT_THROW(decode_codebook(bytes), ValidationError);
  EXPECT_THROW(save_codebook(cb, temp_file("dup.bin")), ValidationError);
}

TEST(CodebookFile, MissingFileIsIoError) {
  EXPECT_THROW(load_codebook(temp_file("does_not_exist.bin")), IoError);
}

TEST(CodebookFile, TextExportOneLinePerCodeword) {
  const auto cb = generate_codebook(4, 3.0, 2.0, RngState{8, 0});
  std::ostringstream out;
  export_codebook_text(cb, out);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 5);  // header + 4
}
