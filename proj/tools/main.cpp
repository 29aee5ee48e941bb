// Copyright 2026 The DAEM Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "daem/cli.hpp"

int main(int argc, char** argv) { return daem::run_cli(argc, argv, std::cout, std::cerr); }
