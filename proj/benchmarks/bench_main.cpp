// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

// The packaged benchmark_main archive carries LTO bytecode from another
// compiler release, so the entry point lives here.
BENCHMARK_MAIN();
