#include "hbcu/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace hbcu {

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
}

}  // namespace

std::string run_status_name(RunStatus s) {
    switch (s) {
        case RunStatus::max_epochs: return "max_epochs";
        case RunStatus::tolerance_met: return "tolerance_met";
        case RunStatus::diverged: return "diverged";
    }
    return "unknown";
}

std::string report_to_csv(const RunReport& report) {
    std::string out = "epoch,objective,obj_gap,feasibility,d_k,triggers,seconds\n";
    for (const RunRecord& r : report.epochs) {
        if (r.epoch == 0) continue;  // the initial point is not an epoch
        out += std::to_string(r.epoch);
        out += ',';
        out += fmt(r.objective);
        out += ',';
        out += fmt(r.obj_gap);
        out += ',';
        out += fmt(r.feasibility);
        out += ',';
        out += fmt(r.d_k);
        out += ',';
        out += std::to_string(r.triggers);
        out += ',';
        out += fmt(r.seconds);
        out += '\n';
    }
    return out;
}

void save_report_csv(const std::string& path, const RunReport& report) {
    write_file(path, report_to_csv(report));
}

std::string report_to_json(const RunReport& report, const ProxSchedule& schedule,
                           const InstanceMeta& meta) {
    nlohmann::json j;
    j["status"] = run_status_name(report.status);
    j["epochs"] = report.epochs.empty() ? 0 : report.epochs.back().epoch;
    j["total_triggers"] = report.total_triggers;
    if (!report.epochs.empty()) {
        const RunRecord& last = report.epochs.back();
        j["final"]["objective"] = last.objective;
        if (!std::isnan(last.obj_gap)) j["final"]["obj_gap"] = last.obj_gap;
        j["final"]["feasibility"] = last.feasibility;
        j["final"]["d_k"] = last.d_k;
        j["final"]["seconds"] = last.seconds;
    }
    j["schedule"]["beta"] = schedule.beta;
    j["schedule"]["rho"] = schedule.rho;
    j["schedule"]["d1"] = report.d1_used;
    j["schedule"]["d_inc"] = report.d_inc_used;
    j["schedule"]["d_max"] = schedule.d_max;
    j["schedule"]["eta"] = schedule.eta;
    j["schedule"]["mode"] = schedule.mode == ScheduleMode::adaptive ? "adaptive" : "fixed";
    j["schedule"]["startup_fell_back"] = report.startup_fell_back;
    j["instance"]["name"] = meta.name;
    j["instance"]["seed"] = meta.seed;
    for (const auto& [k, v] : meta.params) j["instance"]["params"][k] = v;
    return j.dump(2) + "\n";
}

void save_report_json(const std::string& path, const RunReport& report,
                      const ProxSchedule& schedule, const InstanceMeta& meta) {
    write_file(path, report_to_json(report, schedule, meta));
}

}  // namespace hbcu
