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

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "xmsynth/image.hpp"

namespace xmsynth::io {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// 8-bit grayscale PNG. Pixels are quantized as round(255 * v).
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path, Modality modality);

// Lossless float sidecar: uint32 H, uint32 W, then H*W float32, all little-endian.
void write_f32(const std::filesystem::path& path, const Image& image);
Image read_f32(const std::filesystem::path& path, Modality modality);

// Label sidecar: uint32 H, uint32 W, then H*W uint8 labels.
void write_labels(const std::filesystem::path& path, const AnatomyMap& map);
AnatomyMap read_labels(const std::filesystem::path& path);

/// Reads either sidecar (.f32) or PNG based on extension.
Image read_image(const std::filesystem::path& path, Modality modality);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace xmsynth::io
