// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#include "fragdiff/cli.hpp"

int main(int argc, char** argv) { return fragdiff::cli::run(argc, argv); }
