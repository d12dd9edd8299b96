#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modrec/signal.hpp"
#include "modrec/tensor.hpp"

namespace modrec {

struct DatasetGeometry {
    int n_samples = 0;
    int n_classes = 0;
};

struct IqDataset {
    std::vector<SignalFrame> frames;
    std::vector<std::string> class_names;
    DatasetGeometry geometry;

    std::size_t size() const { return frames.size(); }
    // every frame label < n_classes and every frame length == n_samples
    void validate() const;
};

// ---------------------------------------------------------------------------
// container format, little-endian throughout
//   header (28 bytes): magic "IQDS0001" | version u32 | n_frames u32 |
//                      n_samples u32 | n_classes u32 | flags u32
//   class table: per class u16 length + UTF-8 bytes
//   frame records: label u16 | snr_centi_db i32 | seed u64 |
//                  I row n_samples f32 | Q row n_samples f32
// ---------------------------------------------------------------------------

constexpr char kContainerMagic[9] = "IQDS0001";
constexpr std::uint32_t kContainerVersion = 1;

std::string container_bytes(const IqDataset& ds);
IqDataset parse_container(std::span<const std::uint8_t> bytes, const std::string& origin = "");
void write_container(const IqDataset& ds, const std::string& path);
IqDataset read_container(const std::string& path);

// ---------------------------------------------------------------------------
// splits and batching
// ---------------------------------------------------------------------------

// copies the indexed frames into two datasets; index sets must be disjoint and
// in range
std::pair<IqDataset, IqDataset> split(const IqDataset& ds,
                                      std::span<const std::uint32_t> train_idx,
                                      std::span<const std::uint32_t> test_idx);

// index layout produced by generate_dataset: per class, train block then test
// block
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> canonical_split_indices(
    int n_classes, int per_class_train, int per_class_test);

struct Batch {
    Tensor<float> x;  // (B, 2, N), row 0 = I, row 1 = Q
    std::vector<int> labels;
    std::vector<std::int32_t> snr_centi_db;
};

// stacks the indexed frames as 2xN real matrices; optional per-frame scaling
// to unit average power (used when training across wide SNR sweeps)
Batch stack_frames(const IqDataset& ds, std::span<const std::uint32_t> idx,
                   bool normalize_power = false);

// One epoch of seeded-shuffle batches; the final partial batch is emitted.
class BatchIterator {
  public:
    BatchIterator(const IqDataset& ds, int batch_size, std::uint64_t shuffle_seed,
                  bool normalize_power = false);

    bool next(Batch& out);
    int n_batches() const;

  private:
    const IqDataset& ds_;
    std::vector<std::uint32_t> order_;
    int batch_size_;
    bool normalize_power_;
    std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// dataset generation (the signal-synthesis entry point)
// ---------------------------------------------------------------------------

struct SnrPolicy {
    enum class Kind { fixed, grid, noiseless };
    Kind kind = Kind::fixed;
    double fixed_db = 10.0;
    std::vector<double> grid_db;

    static SnrPolicy fixed(double db) { return {Kind::fixed, db, {}}; }
    static SnrPolicy noiseless() { return {Kind::noiseless, 0.0, {}}; }
    static SnrPolicy grid(double lo_db, double hi_db, double step_db);
};

// Deterministic from master_seed: per-frame seed = hash(master, class, index).
// Frames are laid out class-major, train block then test block per class (see
// canonical_split_indices).
IqDataset generate_dataset(const std::vector<ModScheme>& classes, int per_class_train,
                           int per_class_test, int n_samples, const SnrPolicy& snr_policy,
                           const SynthConfig& cfg, std::uint64_t master_seed);

// ---------------------------------------------------------------------------
// transformed-tensor container ("IQTN0001"): same record framing with a fixed
// per-frame tensor payload instead of I/Q rows
// ---------------------------------------------------------------------------

struct TensorDataset {
    Shape tensor_shape;  // per-frame payload shape
    std::vector<Tensor<float>> tensors;
    std::vector<int> labels;
    std::vector<std::int32_t> snr_centi_db;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> class_names;
};

constexpr char kTensorMagic[9] = "IQTN0001";

std::string tensor_container_bytes(const TensorDataset& ds);
TensorDataset parse_tensor_container(std::span<const std::uint8_t> bytes,
                                     const std::string& origin = "");
void write_tensor_container(const TensorDataset& ds, const std::string& path);
TensorDataset read_tensor_container(const std::string& path);

}  // namespace modrec
