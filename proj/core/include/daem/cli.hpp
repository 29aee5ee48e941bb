// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <string>

#include "daem/dataset.hpp"
#include "daem/error.hpp"

namespace daem {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitMissing = 3;

int exit_code_for(ErrorKind kind);

/// Per-indicator group tests over a cohort as CSV:
/// `indicator,test,groups,statistic,df,p,note`. Welch t-test STAS vs
/// non-STAS; Kruskal–Wallis over subtypes when all three are present;
/// log-rank of median-split survival when survival data exist.
std::string tme_group_tests_csv(const Cohort& cohort);

/// Entry point of the `daem` tool. Never throws; returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace daem
