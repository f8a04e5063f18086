#pragma once

#include <string>

#include "hbcu/model.hpp"
#include "hbcu/solver.hpp"

namespace hbcu {

std::string run_status_name(RunStatus s);

/// CSV of the per-epoch trace: epoch, objective, obj_gap, feasibility, d_k,
/// triggers, seconds. Always emits the header row.
std::string report_to_csv(const RunReport& report);
void save_report_csv(const std::string& path, const RunReport& report);

/// JSON summary: final status, last-epoch figures, trigger totals, the
/// schedule actually used, and instance metadata.
std::string report_to_json(const RunReport& report, const ProxSchedule& schedule,
                           const InstanceMeta& meta);
void save_report_json(const std::string& path, const RunReport& report,
                      const ProxSchedule& schedule, const InstanceMeta& meta);

}  // namespace hbcu
