// Copyright (c) 2026 The fragdiff authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace fragdiff::cli {

/// Entry point of the command-line tool.  Returns the process exit
/// status: 0 success, 1 usage error, 2 malformed input, 3 numeric
/// failure.
int run(int argc, const char* const* argv);

}  // namespace fragdiff::cli
