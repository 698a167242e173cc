// Copyright (c) 2026 The GFocal Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "gfocal/bundle.hpp"
#include "test_util.hpp"

using namespace gfocal;
using gfocal::testing::scratch_dir;

namespace {

TensorBundle sample_bundle() {
    TensorBundle b;
    b.put("matrix", Tensor::matrix(2, 2, {1.5, -2.0, 3.25, 0.0}));
    b.put("single", Tensor::full({3}, 0.1), DType::f32);
    b.put_scalar("rank0", 7.0);
    b.put("empty", Tensor({0, 4}));
    return b;
}

ErrorKind kind_of(const std::vector<std::uint8_t>& bytes) {
    try {
        TensorBundle::parse(bytes);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Usage;  // parsed fine
}

}  // namespace

TEST(Bundle, HeaderMagic) {
    const auto bytes = sample_bundle().serialize();
    ASSERT_GE(bytes.size(), 4u);
    EXPECT_EQ(bytes[0], 0x47);
    EXPECT_EQ(bytes[1], 0x46);
    EXPECT_EQ(bytes[2], 0x54);
    EXPECT_EQ(bytes[3], 0x42);
}

TEST(Bundle, RoundTripPreservesEntries) {
    const TensorBundle b = sample_bundle();
    const TensorBundle r = TensorBundle::parse(b.serialize());
    ASSERT_EQ(r.size(), 4u);
    EXPECT_TRUE(r.tensor("matrix").identical(b.tensor("matrix")));
    EXPECT_EQ(r.entry("single").dtype, DType::f32);
    EXPECT_EQ(r.tensor("single")[0], static_cast<double>(0.1f));
    EXPECT_EQ(r.entry("rank0").dims.size(), 0u);
    EXPECT_EQ(r.scalar("rank0"), 7.0);
    EXPECT_EQ(r.tensor("empty").shape(), (Shape{0, 4}));
    EXPECT_EQ(r.serialize(), b.serialize());
}

TEST(Bundle, FileRoundTripIsByteIdentical) {
    const auto dir = scratch_dir("bundle_file");
    const auto path = dir / "b.gftb";
    const TensorBundle b = sample_bundle();
    b.write_file(path);
    EXPECT_EQ(read_bytes(path), b.serialize());
    EXPECT_EQ(TensorBundle::read_file(path).serialize(), b.serialize());
}

TEST(Bundle, MissingEntry) {
    const TensorBundle b = sample_bundle();
    try {
        b.tensor("nope");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingField);
    }
}

TEST(Bundle, CorruptionIsFormatError) {
    auto bytes = sample_bundle().serialize();
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_EQ(kind_of(bad_magic), ErrorKind::Format);
    for (std::size_t cut : {std::size_t{3}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
        std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        EXPECT_EQ(kind_of(truncated), ErrorKind::Format) << "cut at " << cut;
    }
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_EQ(kind_of(trailing), ErrorKind::Format);
}

TEST(Bundle, TruncationMessageNamesOffset) {
    auto bytes = sample_bundle().serialize();
    bytes.resize(bytes.size() - 3);
    try {
        TensorBundle::parse(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos) << e.what();
    }
}

TEST(Bundle, DuplicateNamesRejected) {
    TensorBundle b;
    b.put_scalar("x", 1.0);
    EXPECT_THROW(b.put_scalar("x", 2.0), Error);
}

TEST(Bundle, MissingFileIsIoError) {
    try {
        TensorBundle::read_file("/nonexistent/dir/file.gftb");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
}
