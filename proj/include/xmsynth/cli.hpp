/*
 * xmsynth : anatomy-aware unpaired ultrasound-to-MR synthesis
 *
 * Copyright 2026 The xmsynth Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line driver: phantom-gen, train, synth, eval, mos-session.
//
// Config files are JSON with optional top-level sections
//
//   { "seed": 7,
//     "dataset": {...},   // manifest key names (n_us, n_mr, size, split, ranges, ...)
//     "train":   {...},   // variant, steps, batch_size, lr_generator, network{...}, ...
//     "eval":    {...},   // max_items, max_shift, edge_threshold, registration{...}
//     "session": {...} }  // count
//
// Unknown keys anywhere are rejected. Flags override file values.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xmsynth::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the CLI on `args` (without the program name). Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace xmsynth::cli
