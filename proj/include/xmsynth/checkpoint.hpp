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

// Checkpoint archive layout (all integers little-endian):
//
//   8 bytes   magic "XMSYNTH1"
//   8 bytes   uint64 header length N
//   N bytes   JSON header: free-form metadata plus a "tensors" index
//             [{name, dtype, shape, offset, nbytes}] and a "blobs" index
//             [{name, offset, nbytes}]; offsets are relative to the payload
//   ...       payload
//
// Tensors are stored contiguous in their native dtype (float32/float64/int64/uint8).

#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace xmsynth::checkpoint {

inline constexpr std::string_view kMagic = "XMSYNTH1";

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Archive {
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    std::map<std::string, torch::Tensor> tensors;
    std::map<std::string, std::string> blobs;
};

void write(const std::filesystem::path& path, const Archive& archive);
Archive read(const std::filesystem::path& path);
/// Reads only the JSON metadata (without the tensor/blob indices).
nlohmann::ordered_json read_meta(const std::filesystem::path& path);

/// Adds every named parameter and buffer of `module` under `prefix`.
void add_module(Archive& archive, const torch::nn::Module& module, const std::string& prefix = "");
/// Copies archived values into `module`; throws on missing names or shape mismatch.
void load_module(const Archive& archive, torch::nn::Module& module, const std::string& prefix = "");

std::string serialize_optimizer(const torch::optim::Optimizer& optimizer);
void deserialize_optimizer(const std::string& blob, torch::optim::Optimizer& optimizer);

}  // namespace xmsynth::checkpoint
