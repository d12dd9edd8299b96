#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "modrec/dataset.hpp"
#include "modrec/models.hpp"

namespace modrec {

struct TrainConfig {
    int epochs = 10;
    double lr = 0.1;
    int batch_size = 128;
    std::uint64_t seed = 1;
    bool eval_every_epoch = true;
    // per-frame unit-power scaling in the batcher; off by default, used when
    // training across wide SNR sweeps where noisy frames carry large power
    bool normalize_input = false;
    int threads = 0;  // 0 = all hardware threads; results do not depend on it
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double test_loss = 0.0;
    double test_accuracy = 0.0;
};

struct TrainResult {
    std::vector<Tensor<float>> best_params;  // snapshot at minimum test loss
    int best_epoch = 0;                      // earliest epoch on ties
    double min_test_loss = 0.0;
    std::vector<EpochStats> history;
};

// Per epoch: seeded shuffle, forward/backward/SGD per batch, then full
// test-set loss; returns the checkpoint with minimum test loss. Throws
// DivergenceError with epoch/batch indices when the loss goes non-finite.
// Bitwise deterministic for a fixed (seed, datasets, config) regardless of
// thread count: the batch is processed in fixed 8-sample chunks whose
// gradients are reduced in chunk order.
TrainResult train(Model<float>& model, const IqDataset& train_ds, const IqDataset& test_ds,
                  const TrainConfig& cfg);

struct EvalOptions {
    bool normalize_input = false;
    int threads = 0;
};

struct EvalReport {
    double overall_accuracy = 0.0;
    std::map<std::int32_t, double> per_snr;  // centi-dB -> accuracy
    std::map<std::int32_t, int> per_snr_count;
    std::vector<std::vector<double>> confusion;  // row-normalized, K x K
    std::vector<std::vector<std::uint64_t>> confusion_counts;
    std::vector<int> zero_support_rows;  // true classes absent from the test set
    int n_test = 0;
    int best_epoch = -1;        // filled from a TrainResult when available
    double min_test_loss = -1.0;
    std::vector<std::string> class_names;
};

EvalReport evaluate(const Model<float>& model, const IqDataset& test_ds,
                    const EvalOptions& opts = {});

// mean cross-entropy and accuracy over a dataset, forward only
struct DatasetLoss {
    double loss = 0.0;
    double accuracy = 0.0;
};
DatasetLoss dataset_loss(const Model<float>& model, const IqDataset& ds, bool normalize_input,
                         int threads);

// ---------------------------------------------------------------------------
// report emission
// ---------------------------------------------------------------------------

// "snr_db,accuracy" header plus one row per bucket, ascending dB
std::string emit_report_csv(const EvalReport& report);
// the same table plus a row-normalized confusion grid with two-decimal cells
std::string emit_report_markdown(const EvalReport& report);
// "epoch,train_loss,test_loss,test_acc" rows
std::string history_csv(const std::vector<EpochStats>& history);

std::string format_snr_db(std::int32_t centi_db);

}  // namespace modrec
