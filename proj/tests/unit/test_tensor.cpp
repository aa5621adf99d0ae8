// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lror/error.hpp"
#include "lror/rng.hpp"
#include "lror/tensor.hpp"

namespace lror {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an lror::Error";
    return ErrorKind::Contract;
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
    EXPECT_EQ(matmul(Tensor::identity(2), m), m);
}

TEST(Matmul, RowTimesColumn) {
    const Tensor r = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
    ASSERT_EQ(r.shape(), (Shape{1, 1}));
    EXPECT_EQ(r.at(0, 0), 11.0);
}

TEST(Matmul, ZeroAnnihilates) {
    Rng rng(1);
    const Tensor a = rng.gaussian({4, 3}, 1.0);
    EXPECT_EQ(matmul(a, Tensor({3, 5})), Tensor({4, 5}));
}

TEST(Matmul, ShapeMismatchReportsBothShapes) {
    try {
        matmul(Tensor({2, 3}), Tensor({2, 3}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Dimension);
        EXPECT_NE(std::string(e.what()).find(shape_string({2, 3})), std::string::npos) << e.what();
    }
}

TEST(Matmul, TransposedVariantsAgreeWithExplicitTranspose) {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t m = 1 + rng.below(9);
        const std::size_t k = 1 + rng.below(9);
        const std::size_t n = 1 + rng.below(9);
        const Tensor a = rng.gaussian({k, m}, 1.0);
        const Tensor b = rng.gaussian({k, n}, 1.0);
        const Tensor c = rng.gaussian({n, k}, 1.0);
        EXPECT_LT(max_abs_diff(matmul_tn(a, b), matmul(transpose(a), b)), 1e-12);
        EXPECT_LT(max_abs_diff(matmul_nt(transpose(a), c), matmul(transpose(a), transpose(c))), 1e-12);
    }
}

TEST(Tensor, ElementwiseHelpers) {
    const Tensor a = Tensor::matrix({{1, -2}, {3, 0.5}});
    const Tensor b = Tensor::matrix({{0.5, 2}, {-3, 1}});
    EXPECT_EQ(add(a, b), Tensor::matrix({{1.5, 0}, {0, 1.5}}));
    EXPECT_EQ(sub(a, b), Tensor::matrix({{0.5, -4}, {6, -0.5}}));
    EXPECT_EQ(scale(a, 1.0), a);
    EXPECT_DOUBLE_EQ(frobenius_dot(a, b), 0.5 - 4 - 9 + 0.5);
    EXPECT_DOUBLE_EQ(frobenius_norm(Tensor::vector({3, 4})), 5.0);
    EXPECT_EQ(kind_of([&] { add(a, Tensor({2, 3})); }), ErrorKind::Dimension);
}

TEST(Tensor, ReshapeAndSlices) {
    const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(a.reshaped({3, 2}).at(2, 1), 6.0);
    EXPECT_EQ(kind_of([&] { (void)a.reshaped({4, 2}); }), ErrorKind::Dimension);
    EXPECT_EQ(slice_cols(a, 1, 2), Tensor::matrix({{2, 3}, {5, 6}}));
    EXPECT_EQ(kind_of([&] { slice_cols(a, 2, 2); }), ErrorKind::Index);
    const Tensor parts[] = {a, Tensor::matrix({{7, 8, 9}})};
    EXPECT_EQ(vstack(parts).at(2, 2), 9.0);
    EXPECT_EQ(kind_of([&] { (void)Tensor::scalar(1).extent(1); }), ErrorKind::Index);
    EXPECT_EQ(kind_of([&] { (void)a.item(); }), ErrorKind::Contract);
}

TEST(Tensor, FiniteCheck) {
    Tensor t({3});
    EXPECT_TRUE(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(t.all_finite());
}

TEST(Serialization, LayoutIsMagicRankExtentsPayload) {
    std::ostringstream out;
    write_tensor(out, Tensor::matrix({{1.5, -2}}));
    const std::string bytes = out.str();
    ASSERT_EQ(bytes.size(), 4u + 4u + 2 * 4u + 2 * 8u);
    EXPECT_EQ(bytes.substr(0, 4), "LRT1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2u);  // little-endian rank
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2u);
    double first = 0.0;
    std::memcpy(&first, bytes.data() + 16, 8);
    EXPECT_EQ(first, 1.5);
}

TEST(Serialization, RoundTripIsBitExact) {
    Rng rng(3);
    for (const Shape& shape : {Shape{}, Shape{5}, Shape{3, 4}, Shape{2, 3, 4}}) {
        const Tensor t = shape.empty() ? Tensor::scalar(rng.normal()) : rng.gaussian(shape, 1e3);
        std::stringstream io;
        write_tensor(io, t);
        EXPECT_EQ(read_tensor(io, "mem"), t);
    }
}

TEST(Serialization, CorruptionIsMissingArtifact) {
    const auto dir = std::filesystem::temp_directory_path() / "lror_test_tensor";
    std::filesystem::create_directories(dir);
    const auto path = dir / "t.lrt";
    save_tensor(path, Tensor::matrix({{1, 2}, {3, 4}}));
    EXPECT_EQ(load_tensor(path), Tensor::matrix({{1, 2}, {3, 4}}));

    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& b) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << b;
    };
    write(bytes.substr(0, bytes.size() - 3));
    EXPECT_EQ(kind_of([&] { load_tensor(path); }), ErrorKind::MissingArtifact);
    std::string bad = bytes;
    bad[0] = 'X';
    write(bad);
    EXPECT_EQ(kind_of([&] { load_tensor(path); }), ErrorKind::MissingArtifact);
    write(bytes + "junk");
    EXPECT_EQ(kind_of([&] { load_tensor(path); }), ErrorKind::MissingArtifact);
    EXPECT_EQ(kind_of([&] { load_tensor(dir / "absent.lrt"); }), ErrorKind::MissingArtifact);
    std::filesystem::remove_all(dir);
}

TEST(Serialization, BundleRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "lror_test_bundle.lrt";
    const std::vector<Tensor> parts{Tensor::vector({1, 2}), Tensor::matrix({{3}}), Tensor::scalar(4)};
    save_bundle(path, parts);
    EXPECT_EQ(load_bundle(path), parts);
    std::filesystem::remove(path);
}

TEST(Digest, Fnv1aKnownValues) {
    // Published FNV-1a 64 test vectors.
    EXPECT_EQ(fnv1a({}), 0xcbf29ce484222325ULL);
    const char a = 'a';
    EXPECT_EQ(fnv1a(std::as_bytes(std::span(&a, 1))), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(hex_digest(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
}

TEST(Digest, SensitiveToShapeAndValues) {
    const Tensor a = Tensor::matrix({{1, 2, 3, 4}});
    EXPECT_NE(digest(a), digest(a.reshaped({2, 2})));
    Tensor b = a;
    b[3] = std::nextafter(4.0, 5.0);
    EXPECT_NE(digest(a), digest(b));
    EXPECT_EQ(digest(a), digest(Tensor::matrix({{1, 2, 3, 4}})));
}

}  // namespace
}  // namespace lror
