#include "modrec/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include "modrec/errors.hpp"
#include "modrec/io_util.hpp"

namespace modrec {

void IqDataset::validate() const {
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const SignalFrame& f = frames[i];
        if (f.label < 0 || f.label >= geometry.n_classes)
            throw DataError("frame " + std::to_string(i) + " label " + std::to_string(f.label) +
                            " outside [0," + std::to_string(geometry.n_classes) + ")");
        if (f.n_samples() != geometry.n_samples)
            throw DataError("frame " + std::to_string(i) + " has " +
                            std::to_string(f.n_samples()) + " samples, dataset geometry says " +
                            std::to_string(geometry.n_samples));
    }
    if (static_cast<int>(class_names.size()) != geometry.n_classes)
        throw DataError("class name table size does not match n_classes");
}

// ---------------------------------------------------------------------------
// container
// ---------------------------------------------------------------------------

namespace {

void put_class_table(std::string& buf, const std::vector<std::string>& names) {
    for (const std::string& name : names) {
        io::put_u16(buf, static_cast<std::uint16_t>(name.size()));
        buf.append(name);
    }
}

std::vector<std::string> get_class_table(io::Reader& r, std::uint32_t n_classes) {
    std::vector<std::string> names;
    names.reserve(n_classes);
    for (std::uint32_t i = 0; i < n_classes; ++i) {
        const std::uint16_t len = r.get_u16("class name length");
        names.push_back(r.get_string(len, "class name"));
    }
    return names;
}

}  // namespace

std::string container_bytes(const IqDataset& ds) {
    ds.validate();
    std::string buf;
    buf.append(kContainerMagic, 8);
    io::put_u32(buf, kContainerVersion);
    io::put_u32(buf, static_cast<std::uint32_t>(ds.frames.size()));
    io::put_u32(buf, static_cast<std::uint32_t>(ds.geometry.n_samples));
    io::put_u32(buf, static_cast<std::uint32_t>(ds.geometry.n_classes));
    io::put_u32(buf, 0);  // flags
    put_class_table(buf, ds.class_names);
    for (const SignalFrame& f : ds.frames) {
        io::put_u16(buf, static_cast<std::uint16_t>(f.label));
        io::put_i32(buf, f.snr_centi_db);
        io::put_u64(buf, f.seed);
        for (const auto& v : f.iq) io::put_f32(buf, v.real());
        for (const auto& v : f.iq) io::put_f32(buf, v.imag());
    }
    return buf;
}

IqDataset parse_container(std::span<const std::uint8_t> bytes, const std::string& origin) {
    io::Reader r(bytes.data(), bytes.size());
    char magic[9] = {};
    r.read_bytes(magic, 8, "container magic");
    if (std::memcmp(magic, kContainerMagic, 8) != 0)
        throw DataError("bad container magic \"" + std::string(magic, 8) + "\"" +
                        (origin.empty() ? "" : " in " + origin));
    const std::uint32_t version = r.get_u32("container version");
    if (version != kContainerVersion)
        throw DataError("unsupported container version " + std::to_string(version) +
                        (origin.empty() ? "" : " in " + origin));
    const std::uint32_t n_frames = r.get_u32("frame count");
    const std::uint32_t n_samples = r.get_u32("samples per frame");
    const std::uint32_t n_classes = r.get_u32("class count");
    r.get_u32("flags");

    IqDataset ds;
    ds.geometry = {static_cast<int>(n_samples), static_cast<int>(n_classes)};
    ds.class_names = get_class_table(r, n_classes);
    ds.frames.reserve(n_frames);
    std::vector<float> i_row(n_samples), q_row(n_samples);
    for (std::uint32_t fi = 0; fi < n_frames; ++fi) {
        SignalFrame f;
        f.label = r.get_u16("frame label");
        f.snr_centi_db = r.get_i32("frame snr");
        f.seed = r.get_u64("frame seed");
        if (n_samples) {
            r.read_bytes(i_row.data(), 4u * n_samples, "frame I row");
            r.read_bytes(q_row.data(), 4u * n_samples, "frame Q row");
        }
        f.iq.resize(n_samples);
        for (std::uint32_t i = 0; i < n_samples; ++i)
            f.iq[i] = std::complex<float>(i_row[i], q_row[i]);
        ds.frames.push_back(std::move(f));
    }
    ds.validate();
    return ds;
}

void write_container(const IqDataset& ds, const std::string& path) {
    io::write_file(path, container_bytes(ds));
}

IqDataset read_container(const std::string& path) {
    const auto bytes = io::read_file(path);
    return parse_container(bytes, path);
}

// ---------------------------------------------------------------------------
// splits and batching
// ---------------------------------------------------------------------------

std::pair<IqDataset, IqDataset> split(const IqDataset& ds,
                                      std::span<const std::uint32_t> train_idx,
                                      std::span<const std::uint32_t> test_idx) {
    std::unordered_set<std::uint32_t> seen;
    seen.reserve(train_idx.size() + test_idx.size());
    auto take = [&](std::span<const std::uint32_t> idx) {
        IqDataset out;
        out.class_names = ds.class_names;
        out.geometry = ds.geometry;
        out.frames.reserve(idx.size());
        for (std::uint32_t i : idx) {
            if (i >= ds.frames.size())
                throw DataError("split index " + std::to_string(i) + " out of range for " +
                                std::to_string(ds.frames.size()) + " frames");
            if (!seen.insert(i).second)
                throw DataError("split index sets overlap at frame " + std::to_string(i));
            out.frames.push_back(ds.frames[i]);
        }
        return out;
    };
    IqDataset train = take(train_idx);
    IqDataset test = take(test_idx);
    return {std::move(train), std::move(test)};
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> canonical_split_indices(
    int n_classes, int per_class_train, int per_class_test) {
    std::vector<std::uint32_t> train, test;
    const int per_class = per_class_train + per_class_test;
    for (int c = 0; c < n_classes; ++c) {
        const std::uint32_t base = static_cast<std::uint32_t>(c * per_class);
        for (int i = 0; i < per_class_train; ++i) train.push_back(base + i);
        for (int i = 0; i < per_class_test; ++i) test.push_back(base + per_class_train + i);
    }
    return {std::move(train), std::move(test)};
}

Batch stack_frames(const IqDataset& ds, std::span<const std::uint32_t> idx, bool normalize_power) {
    const int n = ds.geometry.n_samples;
    Batch batch;
    batch.x = Tensor<float>({static_cast<int>(idx.size()), 2, n});
    batch.labels.reserve(idx.size());
    batch.snr_centi_db.reserve(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const SignalFrame& f = ds.frames[idx[b]];
        float scale = 1.0f;
        if (normalize_power) {
            const double p = f.average_power();
            if (p > 0) scale = static_cast<float>(1.0 / std::sqrt(p));
        }
        float* i_row = batch.x.data() + batch.x.idx3(static_cast<int>(b), 0, 0);
        float* q_row = batch.x.data() + batch.x.idx3(static_cast<int>(b), 1, 0);
        for (int t = 0; t < n; ++t) {
            i_row[t] = f.iq[static_cast<std::size_t>(t)].real() * scale;
            q_row[t] = f.iq[static_cast<std::size_t>(t)].imag() * scale;
        }
        batch.labels.push_back(f.label);
        batch.snr_centi_db.push_back(f.snr_centi_db);
    }
    return batch;
}

BatchIterator::BatchIterator(const IqDataset& ds, int batch_size, std::uint64_t shuffle_seed,
                             bool normalize_power)
    : ds_(ds), batch_size_(batch_size), normalize_power_(normalize_power) {
    if (batch_size <= 0) throw DataError("batch size must be positive");
    order_.resize(ds.frames.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
    // Fisher-Yates on our own generator: the order is part of the
    // reproducibility contract, so no std::shuffle
    Rng rng(mix_seed(shuffle_seed, 0xBA7C4ULL));
    for (std::size_t i = order_.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_int(static_cast<std::uint32_t>(i));
        std::swap(order_[i - 1], order_[j]);
    }
}

int BatchIterator::n_batches() const {
    return static_cast<int>((order_.size() + batch_size_ - 1) / batch_size_);
}

bool BatchIterator::next(Batch& out) {
    if (cursor_ >= order_.size()) return false;
    const std::size_t end = std::min(cursor_ + static_cast<std::size_t>(batch_size_), order_.size());
    out = stack_frames(ds_,
                       std::span<const std::uint32_t>(order_.data() + cursor_, end - cursor_),
                       normalize_power_);
    cursor_ = end;
    return true;
}

// ---------------------------------------------------------------------------
// transformed-tensor container
// ---------------------------------------------------------------------------

std::string tensor_container_bytes(const TensorDataset& ds) {
    const std::size_t n = ds.tensors.size();
    if (ds.labels.size() != n || ds.snr_centi_db.size() != n || ds.seeds.size() != n)
        throw DataError("tensor dataset columns disagree in length");
    for (const auto& t : ds.tensors)
        if (t.shape() != ds.tensor_shape)
            throw DataError("tensor payload shape " + shape_str(t.shape()) +
                            " does not match dataset shape " + shape_str(ds.tensor_shape));
    std::string buf;
    buf.append(kTensorMagic, 8);
    io::put_u32(buf, kContainerVersion);
    io::put_u32(buf, static_cast<std::uint32_t>(n));
    io::put_u32(buf, static_cast<std::uint32_t>(ds.tensor_shape.size()));
    for (int d : ds.tensor_shape) io::put_u32(buf, static_cast<std::uint32_t>(d));
    io::put_u32(buf, static_cast<std::uint32_t>(ds.class_names.size()));
    io::put_u32(buf, 0);  // flags
    put_class_table(buf, ds.class_names);
    for (std::size_t i = 0; i < n; ++i) {
        io::put_u16(buf, static_cast<std::uint16_t>(ds.labels[i]));
        io::put_i32(buf, ds.snr_centi_db[i]);
        io::put_u64(buf, ds.seeds[i]);
        const Tensor<float>& t = ds.tensors[i];
        for (std::size_t e = 0; e < t.numel(); ++e) io::put_f32(buf, t[e]);
    }
    return buf;
}

TensorDataset parse_tensor_container(std::span<const std::uint8_t> bytes,
                                     const std::string& origin) {
    io::Reader r(bytes.data(), bytes.size());
    char magic[9] = {};
    r.read_bytes(magic, 8, "tensor container magic");
    if (std::memcmp(magic, kTensorMagic, 8) != 0)
        throw DataError("bad tensor container magic \"" + std::string(magic, 8) + "\"" +
                        (origin.empty() ? "" : " in " + origin));
    const std::uint32_t version = r.get_u32("tensor container version");
    if (version != kContainerVersion)
        throw DataError("unsupported tensor container version " + std::to_string(version));
    const std::uint32_t n = r.get_u32("frame count");
    const std::uint32_t ndim = r.get_u32("tensor rank");
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(r.get_u32("tensor dim"));
    const std::uint32_t n_classes = r.get_u32("class count");
    r.get_u32("flags");

    TensorDataset ds;
    ds.tensor_shape = shape;
    ds.class_names = get_class_table(r, n_classes);
    const std::size_t payload = numel_of(shape);
    for (std::uint32_t i = 0; i < n; ++i) {
        ds.labels.push_back(r.get_u16("frame label"));
        ds.snr_centi_db.push_back(r.get_i32("frame snr"));
        ds.seeds.push_back(r.get_u64("frame seed"));
        Tensor<float> t(shape);
        if (payload) r.read_bytes(t.data(), 4 * payload, "tensor payload");
        ds.tensors.push_back(std::move(t));
    }
    return ds;
}

void write_tensor_container(const TensorDataset& ds, const std::string& path) {
    io::write_file(path, tensor_container_bytes(ds));
}

TensorDataset read_tensor_container(const std::string& path) {
    const auto bytes = io::read_file(path);
    return parse_tensor_container(bytes, path);
}

}  // namespace modrec
