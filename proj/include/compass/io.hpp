#pragma once
// Binary tensor exchange ("CTX1"), parameter persistence, metric CSVs and the
// external-logits import path.
//
// Record layout, all little-endian:
//   "CTX1" | u8 dtype (0 = float64) | u8 ndim | ndim x u32 dims | f64 payload
// A container is a sequence of records followed by a u64 record count.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "compass/calibrate.hpp"
#include "compass/pipeline.hpp"
#include "compass/subspace.hpp"
#include "compass/synthtask.hpp"
#include "compass/tensor.hpp"

namespace compass {

class ExchangeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class BadMagicError : public ExchangeError {
public:
    BadMagicError() : ExchangeError("bad magic") {}
};
class BadDtypeError : public ExchangeError {
public:
    explicit BadDtypeError(unsigned tag) : ExchangeError("bad dtype " + std::to_string(tag)) {}
};
class TruncatedPayloadError : public ExchangeError {
public:
    TruncatedPayloadError() : ExchangeError("truncated payload") {}
};
class InvalidShapeError : public ExchangeError {
public:
    explicit InvalidShapeError(const std::string& what) : ExchangeError("invalid shape: " + what) {}
};

inline constexpr char exchange_magic[4] = {'C', 'T', 'X', '1'};
inline constexpr std::uint8_t dtype_float64 = 0;

using Bytes = std::vector<std::uint8_t>;

namespace detail {

template <typename T>
void put_le(Bytes& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t& pos) {
    if (in.size() - pos < sizeof(T)) throw TruncatedPayloadError();
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
    pos += sizeof(T);
    return v;
}

}  // namespace detail

inline void encode_tensor(const Tensor& t, Bytes& out) {
    if (t.rank() == 0 || t.rank() > 255) throw InvalidShapeError("rank " + std::to_string(t.rank()));
    out.insert(out.end(), std::begin(exchange_magic), std::end(exchange_magic));
    out.push_back(dtype_float64);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) {
        if (d > std::numeric_limits<std::uint32_t>::max()) throw InvalidShapeError("dimension " + std::to_string(d));
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    out.reserve(out.size() + 8 * t.size());
    for (double v : t.data()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

inline Bytes encode_tensor(const Tensor& t) {
    Bytes out;
    encode_tensor(t, out);
    return out;
}

/// Decodes one record starting at `pos` and advances it past the payload.
inline Tensor decode_tensor(std::span<const std::uint8_t> in, std::size_t& pos) {
    if (in.size() - pos < 4) throw TruncatedPayloadError();
    if (std::memcmp(in.data() + pos, exchange_magic, 4) != 0) throw BadMagicError();
    pos += 4;
    const auto dtype = detail::get_le<std::uint8_t>(in, pos);
    if (dtype != dtype_float64) throw BadDtypeError(dtype);
    const auto ndim = detail::get_le<std::uint8_t>(in, pos);
    if (ndim == 0) throw InvalidShapeError("rank 0");
    Shape shape(ndim);
    std::size_t count = 1;
    for (auto& d : shape) {
        d = detail::get_le<std::uint32_t>(in, pos);
        if (d == 0) throw InvalidShapeError("zero dimension");
        if (count > std::numeric_limits<std::size_t>::max() / 8 / d) throw InvalidShapeError("element count overflow");
        count *= d;
    }
    if ((in.size() - pos) / 8 < count) throw TruncatedPayloadError();
    std::vector<double> data(count);
    for (auto& v : data) v = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, pos));
    return Tensor(std::move(shape), std::move(data));
}

inline Tensor decode_tensor(std::span<const std::uint8_t> in) {
    std::size_t pos = 0;
    auto t = decode_tensor(in, pos);
    if (pos != in.size()) throw ExchangeError("trailing bytes after tensor record");
    return t;
}

inline Bytes encode_container(std::span<const Tensor> tensors) {
    Bytes out;
    for (const auto& t : tensors) encode_tensor(t, out);
    detail::put_le<std::uint64_t>(out, tensors.size());
    return out;
}

inline std::vector<Tensor> decode_container(std::span<const std::uint8_t> in) {
    if (in.size() < 8) throw TruncatedPayloadError();
    std::size_t tail = in.size() - 8;
    const auto count = detail::get_le<std::uint64_t>(in, tail);
    const auto body = in.first(in.size() - 8);
    std::vector<Tensor> out;
    std::size_t pos = 0;
    while (pos < body.size()) out.push_back(decode_tensor(body, pos));
    if (out.size() != count) {
        throw ExchangeError("record count mismatch: trailer says " + std::to_string(count) + ", found " +
                            std::to_string(out.size()));
    }
    return out;
}

inline Bytes read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) { write_bytes(path, encode_tensor(t)); }
inline Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(read_bytes(path)); }

inline void write_container(const std::filesystem::path& path, std::span<const Tensor> tensors) {
    write_bytes(path, encode_container(tensors));
}
inline std::vector<Tensor> read_container(const std::filesystem::path& path) {
    return decode_container(read_bytes(path));
}

// ---------------------------------------------------------------------------
// Pipeline parameters: container of w1, b1, w2, b2, w3, b3

inline void save_params(const std::filesystem::path& path, const PipelineParams& p) {
    const std::vector<Tensor> ts{p.w1, p.b1, p.w2, p.b2, p.w3, p.b3};
    write_container(path, ts);
}

inline PipelineParams load_params(const std::filesystem::path& path) {
    auto ts = read_container(path);
    if (ts.size() != 6) throw ExchangeError("parameter container must hold 6 tensors, found " + std::to_string(ts.size()));
    PipelineParams p{ts[0], ts[1], ts[2], ts[3], ts[4], ts[5]};
    const std::size_t c = p.w1.dim(0);
    auto expect = [&](const Tensor& t, const Shape& s, const char* name) {
        if (t.shape() != s) throw InvalidShapeError(std::string(name) + " " + shape_str(t.shape()));
    };
    expect(p.w1, {c, 1, 3, 3}, "w1");
    expect(p.b1, {c}, "b1");
    expect(p.w2, {c, c, 3, 3}, "w2");
    expect(p.b2, {c}, "b2");
    expect(p.w3, {1, c, 1, 1}, "w3");
    expect(p.b3, {1}, "b3");
    return p;
}

// ---------------------------------------------------------------------------
// Subspace: container of basis [C,L], center [C], eigenvalues [C]

inline void save_subspace(const std::filesystem::path& path, const SensitiveSubspace& s) {
    const std::size_t c = s.channels(), l = s.components();
    Tensor basis({c, l});
    for (std::size_t r = 0; r < c; ++r)
        for (std::size_t k = 0; k < l; ++k) basis[r * l + k] = s.basis(r, k);
    const std::vector<Tensor> ts{basis, Tensor({c}, s.center), Tensor({c}, s.eigenvalues)};
    write_container(path, ts);
}

inline SensitiveSubspace load_subspace(const std::filesystem::path& path) {
    const auto ts = read_container(path);
    if (ts.size() != 3 || ts[0].rank() != 2) throw ExchangeError("subspace container must hold basis, center, eigenvalues");
    const std::size_t c = ts[0].dim(0), l = ts[0].dim(1);
    if (ts[1].shape() != Shape{c} || ts[2].shape() != Shape{c}) throw InvalidShapeError("subspace center/eigenvalues");
    SensitiveSubspace s{Matrix(c, l), ts[1].values(), ts[2].values()};
    for (std::size_t r = 0; r < c; ++r)
        for (std::size_t k = 0; k < l; ++k) s.basis(r, k) = ts[0][r * l + k];
    return s;
}

// ---------------------------------------------------------------------------
// Datasets: images.ctx and masks.ctx (one record per sample), labels.ctx ([n] class ids)

inline void save_dataset(const std::filesystem::path& dir, std::span<const Sample> samples) {
    std::vector<Tensor> images, masks;
    Tensor labels({samples.size()});
    for (std::size_t i = 0; i < samples.size(); ++i) {
        images.push_back(samples[i].image);
        masks.push_back(samples[i].mask);
        labels[i] = static_cast<double>(samples[i].class_label);
    }
    write_container(dir / "images.ctx", images);
    write_container(dir / "masks.ctx", masks);
    write_tensor(dir / "labels.ctx", labels);
}

inline std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
    auto images = read_container(dir / "images.ctx");
    auto masks = read_container(dir / "masks.ctx");
    const auto labels = read_tensor(dir / "labels.ctx");
    if (images.size() != masks.size() || labels.size() != images.size())
        throw ExchangeError("dataset: images, masks and labels differ in count");
    std::vector<Sample> out(images.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (images[i].shape() != masks[i].shape()) throw InvalidShapeError("dataset: image/mask shape mismatch");
        const double label = labels[i];
        if (label != 0.0 && label != 1.0) throw ExchangeError("dataset: class id must be 0 or 1");
        out[i].image = std::move(images[i]);
        out[i].mask = std::move(masks[i]);
        out[i].area = out[i].mask.sum();
        out[i].class_label = static_cast<ClassLabel>(static_cast<int>(label));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metric CSV: header "index,y", one row per sample in container order

inline void write_metrics_csv(const std::filesystem::path& path, std::span<const double> y) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "index,y\n" << std::setprecision(17);
    for (std::size_t i = 0; i < y.size(); ++i) out << i << ',' << y[i] << '\n';
}

inline std::vector<double> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "index,y") throw ExchangeError("metrics csv: expected header 'index,y'");
    std::vector<double> y;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ExchangeError("metrics csv: malformed row '" + line + "'");
        std::size_t idx = 0;
        double v = 0.0;
        try {
            idx = std::stoul(line.substr(0, comma));
            v = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ExchangeError("metrics csv: malformed row '" + line + "'");
        }
        if (idx != y.size()) throw ExchangeError("metrics csv: rows out of order at index " + std::to_string(idx));
        y.push_back(v);
    }
    return y;
}

// ---------------------------------------------------------------------------
// External logits

/// Calibration inputs from an outside model: logits and ground-truth metric
/// values. The decoder is sigmoid + metric only, so just COMPASS-L and SCP
/// apply.
struct ImportedSet {
    std::vector<Tensor> logits;
    std::vector<double> y;
    MetricSpec metric = hard_area;

    std::size_t size() const { return y.size(); }
    LogitLine line(std::size_t i) const {
        return LogitLine(logits.at(i), logits_direction(logits.at(i).shape()).values, metric);
    }
    double prediction(std::size_t i) const { return metric_value(sigmoid(logits.at(i)).data(), metric); }
    double range_max(std::size_t i) const { return static_cast<double>(logits.at(i).size()); }
};

inline ImportedSet import_external_logits(std::vector<Tensor> logits, std::vector<double> y) {
    if (logits.empty()) throw ExchangeError("import: empty container");
    if (logits.size() != y.size()) {
        throw ExchangeError("import: " + std::to_string(logits.size()) + " logits tensors but " +
                            std::to_string(y.size()) + " metric values");
    }
    return {std::move(logits), std::move(y), hard_area};
}

inline ImportedSet import_external_logits(const std::filesystem::path& container, const std::filesystem::path& metrics) {
    return import_external_logits(read_container(container), read_metrics_csv(metrics));
}

}  // namespace compass
