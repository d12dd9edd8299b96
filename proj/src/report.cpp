#include <cinttypes>
#include <cstdio>

#include "modrec/train.hpp"

namespace modrec {

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

std::string format_snr_db(std::int32_t centi_db) {
    if (centi_db == kSnrNoiselessCentiDb) return "inf";
    if (centi_db % 100 == 0) return std::to_string(centi_db / 100);
    return fmt("%.2f", static_cast<double>(centi_db) / 100.0);
}

std::string emit_report_csv(const EvalReport& report) {
    std::string out = "snr_db,accuracy\n";
    for (const auto& [snr, acc] : report.per_snr)
        out += format_snr_db(snr) + "," + fmt("%.4f", acc) + "\n";
    return out;
}

std::string emit_report_markdown(const EvalReport& report) {
    std::string out;
    out += "# Evaluation report\n\n";
    out += "overall accuracy: " + fmt("%.4f", report.overall_accuracy) + " on " +
           std::to_string(report.n_test) + " test frames\n";
    if (report.best_epoch >= 0)
        out += "model selection: epoch " + std::to_string(report.best_epoch) +
               ", min test loss " + fmt("%.6f", report.min_test_loss) + "\n";
    out += "\n| SNR (dB) | Accuracy |\n|---:|---:|\n";
    for (const auto& [snr, acc] : report.per_snr)
        out += "| " + format_snr_db(snr) + " | " + fmt("%.4f", acc) + " |\n";

    out += "\n## Confusion matrix (rows = true class, row-normalized)\n\n";
    out += "| |";
    for (const auto& name : report.class_names) out += " " + name + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < report.class_names.size(); ++i) out += "---:|";
    out += "\n";
    for (std::size_t r = 0; r < report.confusion.size(); ++r) {
        out += "| " + report.class_names[r] + " |";
        for (double cell : report.confusion[r]) out += " " + fmt("%.2f", cell) + " |";
        out += "\n";
    }
    if (!report.zero_support_rows.empty()) {
        out += "\nzero-support rows (no test frames):";
        for (int r : report.zero_support_rows) out += " " + report.class_names[(std::size_t)r];
        out += "\n";
    }
    return out;
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,train_loss,test_loss,test_acc\n";
    for (const EpochStats& e : history) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss, e.test_loss,
                      e.test_accuracy);
        out += buf;
    }
    return out;
}

}  // namespace modrec
