// SPDX-FileCopyrightText: (c) 2026 LROR contributors
//
// SPDX-License-Identifier: Apache-2.0

#include "lror/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lror/error.hpp"
#include "lror/kernels.hpp"

namespace lror {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Dimension:
            return "dimension";
        case ErrorKind::Index:
            return "index";
        case ErrorKind::Contract:
            return "contract";
        case ErrorKind::Numeric:
            return "numeric";
        case ErrorKind::Config:
            return "config";
        case ErrorKind::DegenerateBasis:
            return "degenerate-basis";
        case ErrorKind::MetricUndefined:
            return "metric-undefined";
        case ErrorKind::DegenerateStatistics:
            return "degenerate-statistics";
        case ErrorKind::Consistency:
            return "internal consistency";
        case ErrorKind::MissingArtifact:
            return "missing artifact";
        case ErrorKind::Io:
            return "io";
    }
    return "unknown";
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_size(shape_), ErrorKind::Dimension,
            "payload of " + std::to_string(data_.size()) + " values does not fill shape " + shape_string(shape_));
}

Tensor Tensor::filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        t.at(i, i) = 1.0;
    }
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        require(row.size() == c, ErrorKind::Dimension, "ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::extent(std::size_t axis) const {
    require(axis < shape_.size(), ErrorKind::Index,
            "axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
    return shape_[axis];
}

std::size_t Tensor::rows() const noexcept {
    if (shape_.empty()) {
        return 1;
    }
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < shape_.size(); ++i) {
        r *= shape_[i];
    }
    return r;
}

std::size_t Tensor::cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    require(shape_size(shape) == data_.size(), ErrorKind::Dimension,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
    return std::move(*this);
}

double Tensor::item() const {
    require(data_.size() == 1, ErrorKind::Contract, "item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

namespace {

void require_matrix(const Tensor& t, const char* what) {
    require(t.ndim() == 2, ErrorKind::Dimension,
            std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    require(a.shape() == b.shape(), ErrorKind::Dimension,
            std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    require(a.cols() == b.rows(), ErrorKind::Dimension,
            "matmul inner extents differ: " + shape_string(a.shape()) + " · " + shape_string(b.shape()));
    Tensor c({a.rows(), b.cols()});
    kernels::gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data(), false);
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    require(a.rows() == b.rows(), ErrorKind::Dimension,
            "matmul_tn inner extents differ: " + shape_string(a.shape()) + "ᵀ · " + shape_string(b.shape()));
    Tensor c({a.cols(), b.cols()});
    kernels::gemm_tn(a.cols(), b.cols(), a.rows(), a.data(), b.data(), c.data(), false);
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    require(a.cols() == b.cols(), ErrorKind::Dimension,
            "matmul_nt inner extents differ: " + shape_string(a.shape()) + " · " + shape_string(b.shape()) + "ᵀ");
    Tensor c({a.rows(), b.rows()});
    kernels::gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), b.data(), c.data(), false);
    return c;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    Tensor t({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t.at(j, i) = a.at(i, j);
        }
    }
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) {
        c[i] += b[i];
    }
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) {
        c[i] -= b[i];
    }
    return c;
}

Tensor scale(const Tensor& a, double factor) {
    Tensor c = a;
    for (double& v : c.values()) {
        v *= factor;
    }
    return c;
}

double frobenius_norm(const Tensor& a) { return std::sqrt(frobenius_dot(a, a)); }

double frobenius_dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "frobenius_dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

Tensor slice_cols(const Tensor& a, std::size_t first, std::size_t count) {
    require_matrix(a, "slice_cols");
    require(first + count <= a.cols(), ErrorKind::Index, "column slice out of range");
    Tensor s({a.rows(), count});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::copy_n(a.row(i).data() + first, count, s.row(i).data());
    }
    return s;
}

Tensor vstack(std::span<const Tensor> parts) {
    require(!parts.empty(), ErrorKind::Contract, "vstack of nothing");
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const Tensor& p : parts) {
        require(p.cols() == cols, ErrorKind::Dimension, "vstack column mismatch");
        rows += p.rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const Tensor& p : parts) {
        data.insert(data.end(), p.storage().begin(), p.storage().end());
    }
    return Tensor({rows, cols}, std::move(data));
}

// ---------------------------------------------------------------------------
// Binary format

namespace {

constexpr char kMagic[4] = {'L', 'R', 'T', '1'};
constexpr std::uint32_t kMaxRank = 16;

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_integral_v<T>);
    unsigned char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xffU);
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool get_le(std::istream& in, T& value) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        return false;
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    value = static_cast<T>(v);
    return true;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write(kMagic, 4);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t e : t.shape()) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    }
    for (double v : t.values()) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
}

Tensor read_tensor(std::istream& in, const std::string& source_name) {
    auto corrupt = [&](const std::string& why) -> Error {
        return Error(ErrorKind::MissingArtifact, "corrupted tensor file " + source_name + ": " + why);
    };
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw corrupt("bad magic");
    }
    std::uint32_t ndim = 0;
    if (!get_le(in, ndim) || ndim > kMaxRank) {
        throw corrupt("bad rank");
    }
    Shape shape(ndim);
    for (auto& e : shape) {
        std::uint32_t v = 0;
        if (!get_le(in, v)) {
            throw corrupt("truncated header");
        }
        e = v;
    }
    std::vector<double> data(shape_size(shape));
    for (double& v : data) {
        std::uint64_t bits = 0;
        if (!get_le(in, bits)) {
            throw corrupt("truncated payload");
        }
        v = std::bit_cast<double>(bits);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    write_tensor(out, t);
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::MissingArtifact, "cannot open tensor file " + path.string());
    Tensor t = read_tensor(in, path.string());
    in.peek();
    require(in.eof(), ErrorKind::MissingArtifact, "corrupted tensor file " + path.string() + ": trailing bytes");
    return t;
}

void save_bundle(const std::filesystem::path& path, std::span<const Tensor> tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot open " + path.string() + " for writing");
    for (const Tensor& t : tensors) {
        write_tensor(out, t);
    }
    require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

std::vector<Tensor> load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::MissingArtifact, "cannot open tensor bundle " + path.string());
    std::vector<Tensor> out;
    while (in.peek() != std::char_traits<char>::eof()) {
        out.push_back(read_tensor(in, path.string()));
    }
    return out;
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t digest(const Tensor& t, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (std::size_t e : t.shape()) {
        const std::uint64_t v = e;
        h = fnv1a(std::as_bytes(std::span(&v, 1)), h);
    }
    return fnv1a(std::as_bytes(t.values()), h);
}

std::string hex_digest(std::uint64_t value) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = kHex[value & 0xfU];
        value >>= 4;
    }
    return s;
}

}  // namespace lror
