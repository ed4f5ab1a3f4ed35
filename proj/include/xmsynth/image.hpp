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

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xmsynth {

/// Raised for invalid user-supplied configuration (bad ranges, sizes, flags).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an internal contract is broken (shape mismatch, seed overlap).
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class Modality { US, MR };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

struct Size2 {
    int height = 0;
    int width = 0;
    friend bool operator==(const Size2&, const Size2&) = default;
};

/// Single-channel raster, row-major, values in [0,1].
class Image {
public:
    Image() = default;
    Image(Size2 size, Modality modality, float fill = 0.0f);
    Image(Size2 size, Modality modality, std::vector<float> pixels);

    [[nodiscard]] Size2 size() const { return size_; }
    [[nodiscard]] int height() const { return size_.height; }
    [[nodiscard]] int width() const { return size_.width; }
    [[nodiscard]] Modality modality() const { return modality_; }
    void set_modality(Modality m) { modality_ = m; }

    float& at(int row, int col) { return pixels_[index(row, col)]; }
    [[nodiscard]] float at(int row, int col) const { return pixels_[index(row, col)]; }

    [[nodiscard]] std::span<const float> pixels() const { return pixels_; }
    std::span<float> pixels() { return pixels_; }

    /// True when every pixel is finite and inside [0,1].
    [[nodiscard]] bool valid() const;
    /// Clamps all pixels into [0,1]; non-finite values become 0.
    void clip();

    friend bool operator==(const Image&, const Image&) = default;

private:
    [[nodiscard]] std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(size_.width) +
               static_cast<std::size_t>(col);
    }

    Size2 size_;
    Modality modality_ = Modality::US;
    std::vector<float> pixels_;
};

/// Label raster: 0 background, 1 skull, 2..K+1 tissue classes.
class AnatomyMap {
public:
    AnatomyMap() = default;
    explicit AnatomyMap(Size2 size, std::uint8_t fill = 0);
    AnatomyMap(Size2 size, std::vector<std::uint8_t> labels);

    [[nodiscard]] Size2 size() const { return size_; }
    [[nodiscard]] int height() const { return size_.height; }
    [[nodiscard]] int width() const { return size_.width; }

    std::uint8_t& at(int row, int col) {
        return labels_[static_cast<std::size_t>(row) * size_.width + col];
    }
    [[nodiscard]] std::uint8_t at(int row, int col) const {
        return labels_[static_cast<std::size_t>(row) * size_.width + col];
    }
    [[nodiscard]] std::span<const std::uint8_t> labels() const { return labels_; }

    /// Pixels with a 4-neighbour carrying a different label.
    [[nodiscard]] std::vector<std::uint8_t> boundary_mask() const;

    friend bool operator==(const AnatomyMap&, const AnatomyMap&) = default;

private:
    Size2 size_;
    std::vector<std::uint8_t> labels_;
};

/// Binary-mask helpers shared by the phantom checks and the evaluation code.
namespace mask {

std::vector<std::uint8_t> dilate(std::span<const std::uint8_t> m, Size2 size, int radius = 1);

/// Dice overlap; two empty masks count as identical (1.0).
double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

}  // namespace mask

}  // namespace xmsynth
