// Copyright 2026 The avtrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The avtrack command-line surface, callable in-process.

#ifndef AVTRACK_TOOLS_CLI_H_
#define AVTRACK_TOOLS_CLI_H_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "avtrack/data.h"
#include "avtrack/tracker.h"

namespace avtrack::cli {

// Runs one command line. Returns 0 on success, 1 on a runtime error and a
// nonzero usage status on bad commands or flags.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Hardware concurrency, capped by AVTRACK_THREADS when set.
int worker_count();

// Each path is a sequence directory or a directory of sequence directories
// (taken in name order).
std::vector<SequenceDataset> load_sequences(const std::vector<std::string>& paths);

// Per-frame records as written by `track`.
std::vector<FrameResult> read_frame_records(const std::filesystem::path& path);

}  // namespace avtrack::cli

#endif  // AVTRACK_TOOLS_CLI_H_
