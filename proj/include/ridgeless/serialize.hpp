#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ridgeless/bounds.hpp"
#include "ridgeless/csv.hpp"

namespace ridgeless {

// JSON uses 17 significant digits, so doubles round-trip bit-exactly.
[[nodiscard]] inline nlohmann::json to_json(const BoundReport& report) {
    nlohmann::json j;
    j["V"] = report.V;
    j["B"] = report.B;
    j["phi"] = report.phi;
    j["k_star"] = report.k_star;
    j["bias_curve"] = report.bias_curve;
    j["variance_terms"] =
        std::vector<double>(report.variance_terms.data(),
                            report.variance_terms.data() + report.variance_terms.size());
    j["normalized"] = report.normalized;
    j["r_used"] = report.r_used;
    j["r_mode"] = report.r_mode == RMode::exact ? "exact" : "trace_proxy";
    j["residual_omitted"] = report.residual_omitted;
    j["notes"] = report.notes;
    return j;
}

[[nodiscard]] inline BoundReport bound_report_from_json(const nlohmann::json& j) {
    BoundReport report;
    report.V = j.at("V").get<double>();
    report.B = j.at("B").get<double>();
    report.phi = j.at("phi").get<double>();
    report.k_star = j.at("k_star").get<Eigen::Index>();
    report.bias_curve = j.at("bias_curve").get<std::vector<double>>();
    const auto terms = j.at("variance_terms").get<std::vector<double>>();
    report.variance_terms =
        Eigen::Map<const Eigen::VectorXd>(terms.data(), static_cast<Eigen::Index>(terms.size()));
    report.normalized = j.at("normalized").get<bool>();
    report.r_used = j.at("r_used").get<double>();
    report.r_mode = j.at("r_mode").get<std::string>() == "exact" ? RMode::exact
                                                                 : RMode::trace_proxy;
    report.residual_omitted = j.at("residual_omitted").get<bool>();
    report.notes = j.at("notes").get<std::vector<std::string>>();
    return report;
}

[[nodiscard]] inline std::vector<std::string> bound_report_csv_header() {
    return {"V", "B", "phi", "k_star", "normalized", "r_used", "r_mode", "residual_omitted"};
}

[[nodiscard]] inline std::vector<std::string> bound_report_csv_row(const BoundReport& report) {
    return {format_double(report.V),
            format_double(report.B),
            format_double(report.phi),
            format_int(report.k_star),
            report.normalized ? "true" : "false",
            format_double(report.r_used),
            report.r_mode == RMode::exact ? "exact" : "trace_proxy",
            report.residual_omitted ? "true" : "false"};
}

}  // namespace ridgeless
