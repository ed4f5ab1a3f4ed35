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

#include "xmsynth/image.hpp"

#include <algorithm>
#include <cmath>

namespace xmsynth {

std::string_view to_string(Modality m) { return m == Modality::US ? "US" : "MR"; }

Modality modality_from_string(std::string_view s) {
    if (s == "US" || s == "us") return Modality::US;
    if (s == "MR" || s == "mr") return Modality::MR;
    throw ConfigError("unknown modality '" + std::string(s) + "'");
}

Image::Image(Size2 size, Modality modality, float fill)
    : size_(size), modality_(modality),
      pixels_(static_cast<std::size_t>(size.height) * size.width, fill) {}

Image::Image(Size2 size, Modality modality, std::vector<float> pixels)
    : size_(size), modality_(modality), pixels_(std::move(pixels)) {
    if (pixels_.size() != static_cast<std::size_t>(size.height) * size.width)
        throw InternalError("Image: pixel count does not match size");
}

bool Image::valid() const {
    return std::all_of(pixels_.begin(), pixels_.end(),
                       [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

void Image::clip() {
    for (auto& v : pixels_) v = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
}

AnatomyMap::AnatomyMap(Size2 size, std::uint8_t fill)
    : size_(size), labels_(static_cast<std::size_t>(size.height) * size.width, fill) {}

AnatomyMap::AnatomyMap(Size2 size, std::vector<std::uint8_t> labels)
    : size_(size), labels_(std::move(labels)) {
    if (labels_.size() != static_cast<std::size_t>(size.height) * size.width)
        throw InternalError("AnatomyMap: label count does not match size");
}

std::vector<std::uint8_t> AnatomyMap::boundary_mask() const {
    std::vector<std::uint8_t> out(labels_.size(), 0);
    const int h = size_.height, w = size_.width;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto v = at(r, c);
            const bool edge = (r > 0 && at(r - 1, c) != v) || (r + 1 < h && at(r + 1, c) != v) ||
                              (c > 0 && at(r, c - 1) != v) || (c + 1 < w && at(r, c + 1) != v);
            out[static_cast<std::size_t>(r) * w + c] = edge ? 1 : 0;
        }
    }
    return out;
}

namespace mask {

std::vector<std::uint8_t> dilate(std::span<const std::uint8_t> m, Size2 size, int radius) {
    std::vector<std::uint8_t> out(m.size(), 0);
    for (int r = 0; r < size.height; ++r) {
        for (int c = 0; c < size.width; ++c) {
            if (!m[static_cast<std::size_t>(r) * size.width + c]) continue;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= size.height || cc >= size.width) continue;
                    out[static_cast<std::size_t>(rr) * size.width + cc] = 1;
                }
            }
        }
    }
    return out;
}

double dice(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw InternalError("dice: mask sizes differ");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] != 0;
        nb += b[i] != 0;
        both += (a[i] != 0 && b[i] != 0);
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

}  // namespace mask

}  // namespace xmsynth
