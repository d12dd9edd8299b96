#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "modrec/train.hpp"

using namespace modrec;

namespace {

// two well-separated classes at toy scale
IqDataset toy_dataset(int per_class, int n_samples, std::uint64_t seed) {
    return generate_dataset({ModScheme::QPSK, ModScheme::FSK4}, per_class, 0, n_samples,
                            SnrPolicy::noiseless(), SynthConfig{}, seed);
}

// model over (2,N) frames whose logits are the first K flattened inputs;
// frames built to match make it a perfect predictor
Model<float> picker_model(int n_samples, int k) {
    Rng rng(1);
    std::vector<std::unique_ptr<Layer<float>>> layers;
    layers.push_back(std::make_unique<FlattenLayer<float>>());
    layers.push_back(std::make_unique<DenseLayer<float>>("head", 2 * n_samples, k, rng));
    Model<float> m("picker", {2, n_samples}, k, std::move(layers));
    for (auto* p : m.params()) p->value.fill(0.0f);
    for (auto* p : m.params())
        if (p->name == "head.weight")
            for (int c = 0; c < k; ++c) p->value.at(c, c) = 1.0f;
    return m;
}

IqDataset picker_dataset(int n_samples, int k, int n_frames, std::uint64_t seed) {
    Rng rng(seed);
    IqDataset ds;
    ds.geometry = {n_samples, k};
    for (int c = 0; c < k; ++c) ds.class_names.push_back("c" + std::to_string(c));
    for (int i = 0; i < n_frames; ++i) {
        SignalFrame f;
        f.label = (int)rng.uniform_int((std::uint32_t)k);
        f.snr_centi_db = (std::int32_t)(rng.uniform_int(5) * 200);
        f.seed = rng.next_u64();
        f.iq.assign((std::size_t)n_samples, {0.0f, 0.0f});
        f.iq[(std::size_t)f.label] = {10.0f, 0.0f};  // spike the true-class feature
        ds.frames.push_back(std::move(f));
    }
    return ds;
}

}  // namespace

TEST_CASE("conv5 overfits the 2-class noiseless toy within 50 epochs") {
    auto ds = toy_dataset(32, 128, 7);  // 64 train frames
    auto model = build_conv5<float>(128, 2, Conv5Widths{}, 7);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.lr = 0.1;
    cfg.batch_size = 16;
    cfg.seed = 7;
    auto result = train(model, ds, ds, cfg);
    REQUIRE(result.history.size() == 50);
    const DatasetLoss final = dataset_loss(model, ds, false, 0);
    CHECK(final.accuracy >= 0.99);
}

TEST_CASE("same seed and config give bitwise-identical history") {
    auto ds = toy_dataset(8, 64, 3);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 0.05;
    cfg.batch_size = 8;
    cfg.seed = 11;
    auto run = [&]() {
        auto model = build_conv5<float>(64, 2, Conv5Widths{4, 4, 8, 8, 8}, 5);
        auto result = train(model, ds, ds, cfg);
        return history_csv(result.history);
    };
    CHECK(run() == run());
}

TEST_CASE("thread count does not change the arithmetic") {
    auto ds = toy_dataset(8, 64, 4);
    auto run = [&](int threads) {
        auto model = build_conv5<float>(64, 2, Conv5Widths{4, 4, 8, 8, 8}, 5);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.lr = 0.05;
        cfg.batch_size = 16;
        cfg.seed = 13;
        cfg.threads = threads;
        auto result = train(model, ds, ds, cfg);
        return history_csv(result.history);
    };
    CHECK(run(1) == run(2));
}

TEST_CASE("epochs=1 with lr=0 leaves parameters bitwise unchanged") {
    auto ds = toy_dataset(4, 64, 5);
    auto model = build_conv5<float>(64, 2, Conv5Widths{4, 4, 8, 8, 8}, 9);
    const auto init = model.snapshot();
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr = 0.0;
    cfg.batch_size = 4;
    auto result = train(model, ds, ds, cfg);
    CHECK(result.best_epoch == 1);
    const auto after = model.snapshot();
    for (std::size_t p = 0; p < init.size(); ++p)
        for (std::size_t i = 0; i < init[p].numel(); ++i) CHECK(init[p][i] == after[p][i]);
    for (std::size_t p = 0; p < init.size(); ++p)
        for (std::size_t i = 0; i < init[p].numel(); ++i)
            CHECK(result.best_params[p][i] == init[p][i]);
}

TEST_CASE("best checkpoint has the minimum recorded test loss, earliest on ties") {
    auto ds = toy_dataset(8, 64, 6);
    auto model = build_conv5<float>(64, 2, Conv5Widths{4, 4, 8, 8, 8}, 21);
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.lr = 0.05;
    cfg.batch_size = 8;
    cfg.seed = 17;
    auto result = train(model, ds, ds, cfg);
    for (const auto& e : result.history) CHECK(result.min_test_loss <= e.test_loss + 1e-12);
    int first_min = 0;
    for (std::size_t i = 0; i < result.history.size(); ++i)
        if (result.history[i].test_loss == result.min_test_loss) {
            first_min = result.history[i].epoch;
            break;
        }
    CHECK(result.best_epoch == first_min);
}

TEST_CASE("training aborts loudly on divergence") {
    auto ds = toy_dataset(8, 64, 8);
    auto model = build_conv5<float>(64, 2, Conv5Widths{4, 4, 8, 8, 8}, 23);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.lr = 1e10;
    cfg.batch_size = 8;
    try {
        train(model, ds, ds, cfg);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.epoch >= 1);
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("perfect predictor yields identity confusion and accuracy 1") {
    const int k = 4;
    auto model = picker_model(32, k);
    auto ds = picker_dataset(32, k, 40, 31);
    auto report = evaluate(model, ds);
    CHECK(report.overall_accuracy == 1.0);
    CHECK(report.n_test == 40);
    for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) {
            if (r == c && std::find(report.zero_support_rows.begin(),
                                    report.zero_support_rows.end(),
                                    r) == report.zero_support_rows.end())
                CHECK(report.confusion[(std::size_t)r][(std::size_t)c] == 1.0);
            else
                CHECK(report.confusion[(std::size_t)r][(std::size_t)c] ==
                      doctest::Approx(r == c ? 1.0 : 0.0));
        }
    for (const auto& [snr, acc] : report.per_snr) CHECK(acc == 1.0);
}

TEST_CASE("constant class-0 predictor scores 1/K on a balanced set") {
    const int k = 8;
    Rng rng(2);
    std::vector<std::unique_ptr<Layer<float>>> layers;
    layers.push_back(std::make_unique<FlattenLayer<float>>());
    layers.push_back(std::make_unique<DenseLayer<float>>("head", 2 * 16, k, rng));
    Model<float> model("const", {2, 16}, k, std::move(layers));
    for (auto* p : model.params()) p->value.fill(0.0f);  // uniform logits -> class 0

    IqDataset ds;
    ds.geometry = {16, k};
    for (int c = 0; c < k; ++c) ds.class_names.push_back("c" + std::to_string(c));
    Rng frng(3);
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < 5; ++i) {
            SignalFrame f;
            f.label = c;
            f.snr_centi_db = 1000;
            f.iq.assign(16, {0.0f, 0.0f});
            for (auto& v : f.iq) v = {(float)frng.uniform(-1, 1), (float)frng.uniform(-1, 1)};
            ds.frames.push_back(std::move(f));
        }
    auto report = evaluate(model, ds);
    CHECK(report.overall_accuracy == doctest::Approx(0.125));
}

TEST_CASE("evaluate matches a hand tally on ten frames") {
    const int k = 3;
    auto model = picker_model(16, k);
    auto ds = picker_dataset(16, k, 10, 77);
    // corrupt three frames so the predictor errs in a known way
    ds.frames[1].iq[(std::size_t)ds.frames[1].label] = {0.0f, 0.0f};
    ds.frames[1].iq[(std::size_t)((ds.frames[1].label + 1) % k)] = {10.0f, 0.0f};
    ds.frames[4].iq[(std::size_t)ds.frames[4].label] = {0.0f, 0.0f};
    ds.frames[4].iq[(std::size_t)((ds.frames[4].label + 2) % k)] = {10.0f, 0.0f};
    ds.frames[7].iq[(std::size_t)ds.frames[7].label] = {0.0f, 0.0f};
    ds.frames[7].iq[(std::size_t)((ds.frames[7].label + 1) % k)] = {10.0f, 0.0f};

    // hand tally
    std::vector<std::vector<std::uint64_t>> tally((std::size_t)k,
                                                  std::vector<std::uint64_t>((std::size_t)k, 0));
    std::map<std::int32_t, std::pair<int, int>> snr_tally;  // total, correct
    int correct = 0;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        int pred = 0;
        float best = -1e30f;
        for (int c = 0; c < k; ++c) {
            const float v = ds.frames[i].iq[(std::size_t)c].real();
            if (v > best) {
                best = v;
                pred = c;
            }
        }
        ++tally[(std::size_t)ds.frames[i].label][(std::size_t)pred];
        auto& st = snr_tally[ds.frames[i].snr_centi_db];
        ++st.first;
        if (pred == ds.frames[i].label) {
            ++correct;
            ++st.second;
        }
    }
    auto report = evaluate(model, ds);
    CHECK(report.overall_accuracy == doctest::Approx((double)correct / 10.0));
    for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c)
            CHECK(report.confusion_counts[(std::size_t)r][(std::size_t)c] ==
                  tally[(std::size_t)r][(std::size_t)c]);
    for (const auto& [snr, tc] : snr_tally)
        CHECK(report.per_snr[snr] == doctest::Approx((double)tc.second / tc.first));
}

TEST_CASE("confusion counts sum to n_test and rows normalize to one") {
    const int k = 4;
    auto model = picker_model(32, k);
    auto ds = picker_dataset(32, k, 57, 41);
    auto report = evaluate(model, ds);
    std::uint64_t total = 0;
    for (const auto& row : report.confusion_counts)
        for (std::uint64_t c : row) total += c;
    CHECK(total == 57);
    for (int r = 0; r < k; ++r) {
        if (std::find(report.zero_support_rows.begin(), report.zero_support_rows.end(), r) !=
            report.zero_support_rows.end())
            continue;
        double s = 0;
        for (double c : report.confusion[(std::size_t)r]) s += c;
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

TEST_CASE("per-snr accuracies weighted by bucket sizes reproduce the overall accuracy") {
    const int k = 5;
    auto model = picker_model(16, k);
    auto ds = picker_dataset(16, k, 203, 59);
    auto report = evaluate(model, ds);
    double weighted = 0;
    int total = 0;
    for (const auto& [snr, acc] : report.per_snr) {
        weighted += acc * report.per_snr_count.at(snr);
        total += report.per_snr_count.at(snr);
    }
    CHECK(total == report.n_test);
    CHECK(std::abs(weighted / total - report.overall_accuracy) < 1e-9);
}

TEST_CASE("csv report formats sorted per-snr rows with four decimals") {
    EvalReport report;
    report.per_snr[1800] = 0.848;
    report.per_snr[-2000] = 0.103;
    const std::string csv = emit_report_csv(report);
    CHECK(csv == "snr_db,accuracy\n-20,0.1030\n18,0.8480\n");

    EvalReport empty;
    CHECK(emit_report_csv(empty) == "snr_db,accuracy\n");
}

TEST_CASE("markdown report rounds confusion cells to two decimals") {
    EvalReport report;
    report.n_test = 10;
    report.class_names = {"a", "b"};
    report.overall_accuracy = 0.95;
    report.confusion = {{0.996, 0.004}, {0.25, 0.75}};
    report.confusion_counts = {{996, 4}, {25, 75}};
    const std::string md = emit_report_markdown(report);
    CHECK(md.find("| a | 1.00 | 0.00 |") != std::string::npos);
    CHECK(md.find("| b | 0.25 | 0.75 |") != std::string::npos);
}

TEST_CASE("history csv has one row per epoch") {
    std::vector<EpochStats> hist{{1, 2.0794, 2.0512, 0.125}, {2, 1.5, 1.25, 0.5}};
    const std::string csv = history_csv(hist);
    CHECK(csv.find("epoch,train_loss,test_loss,test_acc\n") == 0);
    CHECK(csv.find("1,2.079400,2.051200,0.125000\n") != std::string::npos);
    CHECK(csv.find("2,1.500000,1.250000,0.500000\n") != std::string::npos);
}

TEST_CASE("format_snr_db renders integers, decimals, and the noiseless marker") {
    CHECK(format_snr_db(-2000) == "-20");
    CHECK(format_snr_db(0) == "0");
    CHECK(format_snr_db(750) == "7.50");
    CHECK(format_snr_db(kSnrNoiselessCentiDb) == "inf");
}
