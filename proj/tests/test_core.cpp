#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace gridsafe;

TEST(Core, NamesRoundTrip) {
    for (auto s : kAllSources) EXPECT_EQ(parse_source(to_string(s)), s);
    EXPECT_EQ(parse_region("EUROPE"), Region::EUROPE);
    EXPECT_EQ(parse_kind("ANALYSIS"), StorageKind::ANALYSIS);
    EXPECT_EQ(parse_pool("EGI"), Pool::EGI);
    EXPECT_FALSE(parse_source("dark matter").has_value());
}

TEST(Core, ScalePpmIsExact) {
    EXPECT_EQ(scale_ppm(1'000'000, 100'000), 100'000);
    EXPECT_EQ(scale_ppm(999, 100'000), 99);
    EXPECT_EQ(scale_ppm(std::int64_t{1} << 62, 1'000'000), std::int64_t{1} << 62);
}

TEST(Core, ErrorCarriesCode) {
    try {
        throw Error(Errc::UNKNOWN_RSE, "X");
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UNKNOWN_RSE);
        EXPECT_EQ(to_string(e.code()), "UNKNOWN_RSE");
    }
}

// Golden values come from an independent Python reimplementation of
// FNV-1a, splitmix64 and MT19937-64 (see tests/oracles/rng_oracle.py).
TEST(Rng, PinnedGoldenDraws) {
    RngStreams r(42);
    std::vector<std::uint64_t> got;
    for (int i = 0; i < 5; ++i) got.push_back(r.draw("rse-select", 5));
    EXPECT_EQ(got, (std::vector<std::uint64_t>{3, 1, 4, 1, 0}));

    RngStreams r2(42);
    std::vector<std::uint64_t> jf;
    for (int i = 0; i < 5; ++i) jf.push_back(r2.draw("job-fail", 5));
    EXPECT_EQ(jf, (std::vector<std::uint64_t>{3, 3, 4, 3, 4}));
}

TEST(Rng, SingleOutcome) {
    RngStreams r(7);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(r.draw("x", 1), 0u);
}

TEST(Rng, StreamsAreIndependent) {
    RngStreams a(42), b(42);
    // Interleaving draws on another stream does not shift this one.
    std::vector<std::uint64_t> plain, mixed;
    for (int i = 0; i < 50; ++i) plain.push_back(a.draw("rse-select", 1000));
    for (int i = 0; i < 50; ++i) {
        b.draw("job-fail", 1000);
        mixed.push_back(b.draw("rse-select", 1000));
    }
    EXPECT_EQ(plain, mixed);

    RngStreams c(42);
    std::vector<std::uint64_t> other;
    for (int i = 0; i < 50; ++i) other.push_back(c.draw("job-fail", 1000));
    EXPECT_NE(plain, other);
}

TEST(Rng, DegenerateBernoulliConsumesNothing) {
    RngStreams a(1), b(1);
    EXPECT_FALSE(a.bernoulli("s", 0.0));
    EXPECT_TRUE(a.bernoulli("s", 1.0));
    EXPECT_EQ(a.draw("s", 1u << 30), b.draw("s", 1u << 30));
}

TEST(Rng, DrawIsRoughlyUniform) {
    RngStreams r(3);
    std::array<int, 5> hist{};
    for (int i = 0; i < 50000; ++i) ++hist[r.draw("u", 5)];
    for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

TEST(Checksum, DependsOnEveryField) {
    const std::vector<std::string> chunks{"a#c00000", "a#c00001"};
    const auto base = dataset_checksum("run", chunks, 100, 0);
    EXPECT_EQ(base, dataset_checksum("run", chunks, 100, 0));
    EXPECT_NE(base, dataset_checksum("run2", chunks, 100, 0));
    EXPECT_NE(base, dataset_checksum("run", {"a#c00000"}, 100, 0));
    EXPECT_NE(base, dataset_checksum("run", chunks, 101, 0));
    EXPECT_NE(base, dataset_checksum("run", chunks, 100, 1));
    EXPECT_NE(corrupted(base), base);
}

TEST(Checksum, MatchesZlibReferenceValue) {
    // CRC-32 of "123456789" is the standard check value 0xCBF43926.
    uLong crc = crc32(0L, Z_NULL, 0);
    const std::string s = "123456789";
    crc = crc32(crc, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()));
    EXPECT_EQ(crc, 0xCBF43926u);
    // Canonical text for an empty chunk list: "r||0|0".
    uLong c2 = crc32(0L, Z_NULL, 0);
    const std::string canon = "r||0|0";
    c2 = crc32(c2, reinterpret_cast<const Bytef*>(canon.data()), static_cast<uInt>(canon.size()));
    EXPECT_EQ(dataset_checksum("r", {}, 0, 0), static_cast<Checksum>(c2));
}
