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

// Free-form deformation (uniform cubic B-spline) registration and the
// Jacobian-based deformation score.
//
// Coordinates are pixel indices: x runs along columns, y along rows. The
// transformation maps a fixed-image position p to p + u(p) in the moving image.

#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "xmsynth/image.hpp"

namespace xmsynth::registration {

class RegistrationDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Displacement {
    double x = 0.0;
    double y = 0.0;
};

/// Spatial gradient of u: d(u_x)/dx, d(u_x)/dy, d(u_y)/dx, d(u_y)/dy.
struct DisplacementGradient {
    double xx = 0.0;
    double xy = 0.0;
    double yx = 0.0;
    double yy = 0.0;
};

class DeformationField {
public:
    /// Zero control grid (identity mapping) covering `image_size`.
    DeformationField(Size2 image_size, double spacing);

    /// Control points set to u(p) = A p + t; cubic B-splines reproduce it exactly.
    static DeformationField affine(Size2 image_size, double spacing, std::array<double, 4> a,
                                   Displacement t);

    [[nodiscard]] Size2 image_size() const { return size_; }
    [[nodiscard]] double spacing() const { return spacing_; }
    [[nodiscard]] int grid_rows() const { return rows_; }
    [[nodiscard]] int grid_cols() const { return cols_; }
    /// Control node (i, j) sits at x = (j - 1) * spacing, y = (i - 1) * spacing.
    [[nodiscard]] Displacement node_position(int i, int j) const;

    Displacement& control(int i, int j) { return grid_[static_cast<std::size_t>(i) * cols_ + j]; }
    [[nodiscard]] const Displacement& control(int i, int j) const {
        return grid_[static_cast<std::size_t>(i) * cols_ + j];
    }
    [[nodiscard]] std::span<const Displacement> controls() const { return grid_; }
    std::span<Displacement> controls() { return grid_; }

    [[nodiscard]] Displacement displacement(double x, double y) const;
    [[nodiscard]] DisplacementGradient gradient(double x, double y) const;
    /// Dense displacement at every pixel, row-major.
    [[nodiscard]] std::vector<Displacement> dense() const;

    /// Adds a constant displacement to every control point.
    void translate(Displacement t);

private:
    Size2 size_;
    double spacing_;
    int rows_;
    int cols_;
    std::vector<Displacement> grid_;
};

struct RegistrationConfig {
    double grid_spacing = 8.0;   // px per control cell
    double smoothness = 0.01;    // bending-energy weight
    int steps = 300;             // optimizer iteration budget, split over the levels
    double step_size = 0.5;      // initial max control-point move per step, px
    std::vector<double> smoothing_sigmas{2.0, 1.0, 0.0};  // coarse-to-fine image blur
    int margin_cells = 2;        // excluded from the deformation score

    void validate() const;
};

struct RegistrationResult {
    DeformationField field;
    double initial_ssd = 0.0;  // mean squared difference, identity mapping
    double final_ssd = 0.0;
    /// Objective (SSD + bending) after every accepted step, one vector per level.
    std::vector<std::vector<double>> objective_history;
    int accepted_steps = 0;
};

/// Mean squared pixel difference.
double ssd(const Image& a, const Image& b);
Image warp(const Image& moving, const DeformationField& field);
/// Mean bending energy of the dense field.
double bending_energy(const DeformationField& field);

/// Gradient descent on SSD + smoothness * bending energy over the control grid.
/// Only steps that lower the objective are accepted.
RegistrationResult register_ffd(const Image& moving, const Image& fixed,
                                const RegistrationConfig& cfg = {});

/// det(I + grad u) at every pixel, row-major, via analytic B-spline derivatives.
std::vector<double> jacobian_determinant(const DeformationField& field);

/// Mean over interior pixels of min(|det J - 1|, 1); the identity maps to 0.
double deformation_score(const DeformationField& field, int margin_cells = 2);

/// Integer-translation shift with replicated borders: out(x, y) = in(x - dx, y - dy).
Image shift_image(const Image& image, int dx, int dy);

/// Separable Gaussian blur with replicated borders; sigma <= 0 returns a copy.
Image gaussian_blur(const Image& image, double sigma);

struct RigidAlignment {
    int dx = 0;
    int dy = 0;
    double ssd = 0.0;
};

/// Exhaustive integer-translation search in [-max_shift, max_shift]^2.
RigidAlignment rigid_prealign(const Image& moving, const Image& fixed, int max_shift = 4);

}  // namespace xmsynth::registration
