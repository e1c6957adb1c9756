#include "rbamc/reports.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "rbamc/errors.hpp"

namespace rbamc {

namespace {

std::string num(double v, int digits = 17) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

ReportFormat parse_format(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw DomainError("unknown report format '" + name + "' (expected csv|json)");
}

std::string epoch_log_csv(const std::vector<EpochLog>& logs) {
    std::string out = "epoch,lr,loss,train_acc,test_acc,mean_cos_phi,flip_fraction\n";
    for (const EpochLog& l : logs) {
        out += std::to_string(l.epoch) + ',' + num(l.lr) + ',' + num(l.loss) + ',' + num(l.train_acc) + ',' +
               num(l.test_acc) + ',' + num(l.mean_cos_phi) + ',' + num(l.flip_fraction) + '\n';
    }
    return out;
}

std::string eval_report_csv(const EvalReport& r) {
    std::string out = "# overall\nmetric,value\n";
    out += "accuracy," + num(r.accuracy(), 10) + '\n';
    out += "correct," + std::to_string(r.correct) + '\n';
    out += "total," + std::to_string(r.total) + '\n';
    out += "# per_snr\nsnr_db,correct,total,accuracy\n";
    for (const SnrAccuracy& s : r.per_snr)
        out += std::to_string(s.snr_db) + ',' + std::to_string(s.correct) + ',' + std::to_string(s.total) + ',' +
               num(s.accuracy(), 10) + '\n';
    out += "# confusion (rows: true class, columns: predicted class)\ntrue";
    for (const auto& n : r.class_names) out += ',' + n;
    out += '\n';
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
        out += r.class_names[i];
        for (std::size_t v : r.confusion[i]) out += ',' + std::to_string(v);
        out += '\n';
    }
    return out;
}

std::string eval_report_json(const EvalReport& r) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy();
    j["correct"] = r.correct;
    j["total"] = r.total;
    j["classes"] = r.class_names;
    nlohmann::json curve = nlohmann::json::array();
    for (const SnrAccuracy& s : r.per_snr)
        curve.push_back({{"snr_db", s.snr_db}, {"correct", s.correct}, {"total", s.total}, {"accuracy", s.accuracy()}});
    j["per_snr"] = curve;
    j["confusion"] = r.confusion;
    return j.dump(2) + '\n';
}

std::string complexity_csv(const ComplexityReport& r) {
    std::string out = "layer,kind,binary,params_real,params_binary,flops,xnor_ops,output\n";
    for (const LayerComplexity& l : r.layers) {
        out += l.name + ',' + l.kind + ',' + (l.binary ? "1" : "0") + ',' + std::to_string(l.params_real) + ',' +
               std::to_string(l.params_binary) + ',' + std::to_string(l.flops) + ',' + std::to_string(l.xnor_ops) +
               ',' + shape_str(l.output) + '\n';
    }
    out += "# totals\nmetric,value\n";
    out += "variant," + to_string(r.variant) + '\n';
    out += "classes," + std::to_string(r.num_classes) + '\n';
    out += "ensemble," + std::to_string(r.ensemble_size) + '\n';
    out += std::string("include_bn,") + (r.rules.include_bn ? "1" : "0") + '\n';
    out += "params_real," + std::to_string(r.params_real) + '\n';
    out += "params_binary," + std::to_string(r.params_binary) + '\n';
    out += "params_total," + std::to_string(r.total_params()) + '\n';
    out += "flops," + std::to_string(r.flops) + '\n';
    out += "xnor_ops," + std::to_string(r.xnor_ops) + '\n';
    out += "memory_bytes," + num(r.memory_bytes) + '\n';
    out += "memory_mb," + num(r.memory_mb(), 6) + '\n';
    return out;
}

std::string complexity_json(const ComplexityReport& r) {
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerComplexity& l : r.layers)
        layers.push_back({{"name", l.name},
                          {"kind", l.kind},
                          {"binary", l.binary},
                          {"params_real", l.params_real},
                          {"params_binary", l.params_binary},
                          {"flops", l.flops},
                          {"xnor_ops", l.xnor_ops},
                          {"output", l.output}});
    nlohmann::json j;
    j["variant"] = to_string(r.variant);
    j["classes"] = r.num_classes;
    j["ensemble"] = r.ensemble_size;
    j["include_bn"] = r.rules.include_bn;
    j["layers"] = layers;
    j["totals"] = {{"params_real", r.params_real},     {"params_binary", r.params_binary},
                   {"params_total", r.total_params()}, {"flops", r.flops},
                   {"xnor_ops", r.xnor_ops},           {"memory_bytes", finite_or_null(r.memory_bytes)},
                   {"memory_mb", finite_or_null(r.memory_mb())}};
    return j.dump(2) + '\n';
}

}  // namespace rbamc
