// Copyright (c) 2026 The fedbilevel Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FEDBILEVEL_TRACE_IO_HPP_
#define FEDBILEVEL_TRACE_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "fedbilevel/federation.hpp"

namespace fedbilevel {

// Fixed column set; optional metrics appear as empty cells when absent.
inline constexpr const char* kTraceCsvHeader =
    "t,eta,grad_norm_true,grad_norm_wbar,lower_gap,tracking_err_w,"
    "samples_total,comm_rounds";

// Doubles are written with 17 significant digits so traces round-trip and
// identical runs produce byte-identical files.
void write_trace_csv(const RunTrace& trace, const std::string& path);

std::vector<TraceRow> read_trace_csv(const std::string& path);

// One JSON object per iteration; absent metrics serialize as null.
void write_trace_jsonl(const RunTrace& trace, const std::string& path);

// Single JSON document: schedule echo, totals, selected and best iterates.
void write_report_json(const RunTrace& trace, const std::string& rule_name,
                       std::uint64_t root_seed, const std::string& path);

std::string format_double(double value);

}  // namespace fedbilevel

#endif  // FEDBILEVEL_TRACE_IO_HPP_
