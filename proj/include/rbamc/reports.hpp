#pragma once

#include <string>
#include <vector>

#include "rbamc/complexity.hpp"
#include "rbamc/training.hpp"

namespace rbamc {

enum class ReportFormat { Csv, Json };

ReportFormat parse_format(const std::string& name);

/// epoch,lr,loss,train_acc,test_acc,mean_cos_phi,flip_fraction
std::string epoch_log_csv(const std::vector<EpochLog>& logs);

std::string eval_report_csv(const EvalReport& r);
std::string eval_report_json(const EvalReport& r);
std::string complexity_csv(const ComplexityReport& r);
std::string complexity_json(const ComplexityReport& r);

inline std::string format_report(const EvalReport& r, ReportFormat f) {
    return f == ReportFormat::Csv ? eval_report_csv(r) : eval_report_json(r);
}
inline std::string format_report(const ComplexityReport& r, ReportFormat f) {
    return f == ReportFormat::Csv ? complexity_csv(r) : complexity_json(r);
}

}  // namespace rbamc
