#include "modrec/train.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "modrec/errors.hpp"

namespace modrec {

namespace {

// fixed chunk size: gradients accumulate per chunk and reduce in chunk order,
// so the result is independent of how many threads service the chunks
constexpr int kChunkSamples = 8;

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

Tensor<float> sample_view(const Tensor<float>& batch, int b, const Shape& sample_shape) {
    const std::size_t len = numel_of(sample_shape);
    return Tensor<float>(sample_shape,
                         std::vector<float>(batch.data() + static_cast<std::size_t>(b) * len,
                                            batch.data() + static_cast<std::size_t>(b + 1) * len));
}

struct BatchWork {
    double loss_sum = 0.0;  // per-sample losses summed in sample order
    int correct = 0;
};

// forward/backward over one batch into per-chunk accumulators
BatchWork batch_forward_backward(const Model<float>& model, const Batch& batch,
                                 std::vector<GradAccum<float>>& chunk_accums, int threads) {
    const int b = batch.x.dim(0);
    const int k = model.n_classes();
    const int n_chunks = (b + kChunkSamples - 1) / kChunkSamples;
    std::vector<double> losses(static_cast<std::size_t>(b), 0.0);

    while (chunk_accums.size() < static_cast<std::size_t>(n_chunks)) {
        chunk_accums.emplace_back();
        chunk_accums.back().init(model.params());
    }

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#endif
    for (int chunk = 0; chunk < n_chunks; ++chunk) {
        GradAccum<float>& acc = chunk_accums[static_cast<std::size_t>(chunk)];
        acc.clear();
        const int lo = chunk * kChunkSamples;
        const int hi = std::min(b, lo + kChunkSamples);
        Tape<float> tape;
        for (int i = lo; i < hi; ++i) {
            Tensor<float> x = sample_view(batch.x, i, model.input_shape());
            Tensor<float> logits = model.forward(x, &tape);
            const std::vector<int> labels{batch.labels[static_cast<std::size_t>(i)]};
            auto xent = softmax_cross_entropy<float>(logits.reshaped({1, k}), labels);
            losses[static_cast<std::size_t>(i)] = xent.loss;
            Tensor<float> gl = softmax_cross_entropy_backward(xent.probs, labels);
            const float inv_b = 1.0f / static_cast<float>(b);
            for (std::size_t e = 0; e < gl.numel(); ++e) gl[e] *= inv_b;
            model.backward(tape, gl.reshaped(logits.shape()), acc);
        }
    }
    (void)threads;

    BatchWork work;
    for (int i = 0; i < b; ++i) work.loss_sum += losses[static_cast<std::size_t>(i)];
    return work;
}

}  // namespace

DatasetLoss dataset_loss(const Model<float>& model, const IqDataset& ds, bool normalize_input,
                         int threads) {
    const int n = static_cast<int>(ds.frames.size());
    const int k = model.n_classes();
    std::vector<double> losses(static_cast<std::size_t>(n), 0.0);
    std::vector<char> correct(static_cast<std::size_t>(n), 0);
    const int n_chunks = (n + kChunkSamples - 1) / kChunkSamples;
    const int nt = resolve_threads(threads);
    (void)nt;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
#endif
    for (int chunk = 0; chunk < n_chunks; ++chunk) {
        const int lo = chunk * kChunkSamples;
        const int hi = std::min(n, lo + kChunkSamples);
        std::vector<std::uint32_t> idx;
        for (int i = lo; i < hi; ++i) idx.push_back(static_cast<std::uint32_t>(i));
        Batch batch = stack_frames(ds, idx, normalize_input);
        for (int i = lo; i < hi; ++i) {
            Tensor<float> x = sample_view(batch.x, i - lo, model.input_shape());
            Tensor<float> logits = model.forward(x, nullptr);
            const std::vector<int> labels{batch.labels[static_cast<std::size_t>(i - lo)]};
            auto xent = softmax_cross_entropy<float>(logits.reshaped({1, k}), labels);
            losses[static_cast<std::size_t>(i)] = xent.loss;
            correct[static_cast<std::size_t>(i)] =
                argmax_row(logits.data(), k) == labels[0] ? 1 : 0;
        }
    }

    DatasetLoss out;
    int n_correct = 0;
    for (int i = 0; i < n; ++i) {
        out.loss += losses[static_cast<std::size_t>(i)];
        n_correct += correct[static_cast<std::size_t>(i)];
    }
    out.loss /= std::max(1, n);
    out.accuracy = n ? static_cast<double>(n_correct) / n : 0.0;
    return out;
}

TrainResult train(Model<float>& model, const IqDataset& train_ds, const IqDataset& test_ds,
                  const TrainConfig& cfg) {
    if (cfg.epochs < 1 || cfg.lr < 0 || cfg.batch_size < 1)
        throw DataError("invalid training config: epochs >= 1, lr >= 0, batch_size >= 1");
    Shape expected = model.input_shape();
    if (expected != Shape{2, train_ds.geometry.n_samples})
        throw ShapeError("model input " + shape_str(expected) + " does not match dataset frames (2," +
                         std::to_string(train_ds.geometry.n_samples) + ")");
    train_ds.validate();
    test_ds.validate();

    const int threads = resolve_threads(cfg.threads);
    std::vector<GradAccum<float>> chunk_accums;

    TrainResult result;
    result.best_params = model.snapshot();
    result.best_epoch = 0;
    result.min_test_loss = std::numeric_limits<double>::infinity();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        BatchIterator batches(train_ds, cfg.batch_size,
                              mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)),
                              cfg.normalize_input);
        Batch batch;
        double epoch_loss_sum = 0.0;
        int batch_index = 0;
        int samples_seen = 0;
        while (batches.next(batch)) {
            BatchWork work = batch_forward_backward(model, batch, chunk_accums, threads);
            const int b = batch.x.dim(0);
            const double mean_loss = work.loss_sum / b;
            if (!std::isfinite(mean_loss))
                throw DivergenceError("non-finite training loss " + std::to_string(mean_loss) +
                                          " at epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(batch_index),
                                      epoch, batch_index);
            // reduce chunk gradients in fixed order, then step
            zero_grads(model.params());
            const int n_chunks = (b + kChunkSamples - 1) / kChunkSamples;
            for (int c = 0; c < n_chunks; ++c)
                chunk_accums[static_cast<std::size_t>(c)].add_to_params(model.params());
            sgd_step(model.params(), static_cast<float>(cfg.lr));
            epoch_loss_sum += work.loss_sum;
            samples_seen += b;
            ++batch_index;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss_sum / std::max(1, samples_seen);
        const DatasetLoss test = dataset_loss(model, test_ds, cfg.normalize_input, threads);
        stats.test_loss = test.loss;
        stats.test_accuracy = test.accuracy;
        if (!std::isfinite(test.loss))
            throw DivergenceError("non-finite test loss at epoch " + std::to_string(epoch), epoch,
                                  -1);
        result.history.push_back(stats);
        if (test.loss < result.min_test_loss) {
            result.min_test_loss = test.loss;
            result.best_epoch = epoch;
            result.best_params = model.snapshot();
        }
    }
    return result;
}

EvalReport evaluate(const Model<float>& model, const IqDataset& test_ds, const EvalOptions& opts) {
    test_ds.validate();
    if (test_ds.frames.empty()) throw DataError("evaluate needs a nonempty test set");
    const int n = static_cast<int>(test_ds.frames.size());
    const int k = model.n_classes();
    std::vector<int> predicted(static_cast<std::size_t>(n), -1);
    const int n_chunks = (n + kChunkSamples - 1) / kChunkSamples;
    const int nt = resolve_threads(opts.threads);
    (void)nt;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
#endif
    for (int chunk = 0; chunk < n_chunks; ++chunk) {
        const int lo = chunk * kChunkSamples;
        const int hi = std::min(n, lo + kChunkSamples);
        std::vector<std::uint32_t> idx;
        for (int i = lo; i < hi; ++i) idx.push_back(static_cast<std::uint32_t>(i));
        Batch batch = stack_frames(test_ds, idx, opts.normalize_input);
        for (int i = lo; i < hi; ++i) {
            Tensor<float> x = sample_view(batch.x, i - lo, model.input_shape());
            Tensor<float> logits = model.forward(x, nullptr);
            predicted[static_cast<std::size_t>(i)] = argmax_row(logits.data(), k);
        }
    }

    EvalReport report;
    report.n_test = n;
    report.class_names = test_ds.class_names;
    report.confusion_counts.assign(static_cast<std::size_t>(k),
                                   std::vector<std::uint64_t>(static_cast<std::size_t>(k), 0));
    std::map<std::int32_t, int> bucket_total;
    std::map<std::int32_t, int> bucket_correct;
    int total_correct = 0;
    for (int i = 0; i < n; ++i) {
        const SignalFrame& f = test_ds.frames[static_cast<std::size_t>(i)];
        const int pred = predicted[static_cast<std::size_t>(i)];
        ++report.confusion_counts[static_cast<std::size_t>(f.label)][static_cast<std::size_t>(pred)];
        ++bucket_total[f.snr_centi_db];
        if (pred == f.label) {
            ++total_correct;
            ++bucket_correct[f.snr_centi_db];
        }
    }
    report.overall_accuracy = static_cast<double>(total_correct) / n;
    for (const auto& [snr, total] : bucket_total) {
        report.per_snr[snr] = static_cast<double>(bucket_correct[snr]) / total;
        report.per_snr_count[snr] = total;
    }
    report.confusion.assign(static_cast<std::size_t>(k),
                            std::vector<double>(static_cast<std::size_t>(k), 0.0));
    for (int r = 0; r < k; ++r) {
        std::uint64_t row_total = 0;
        for (int c = 0; c < k; ++c)
            row_total += report.confusion_counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        if (row_total == 0) {
            report.zero_support_rows.push_back(r);
            continue;  // row stays all-zero
        }
        for (int c = 0; c < k; ++c)
            report.confusion[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                static_cast<double>(
                    report.confusion_counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]) /
                static_cast<double>(row_total);
    }
    return report;
}

}  // namespace modrec
