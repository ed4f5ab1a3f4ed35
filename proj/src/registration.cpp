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

#include "xmsynth/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace xmsynth::registration {
namespace {

constexpr double kMinStep = 1e-3;

/// Cubic B-spline weights for one axis at a given coordinate.
struct AxisBasis {
    int cell = 0;
    std::array<double, 4> w{};   // B_l
    std::array<double, 4> d{};   // dB_l/dx
    std::array<double, 4> dd{};  // d2B_l/dx2
};

AxisBasis axis_basis(double x, double spacing, int n_nodes) {
    AxisBasis b;
    const double u = x / spacing;
    b.cell = std::clamp(static_cast<int>(std::floor(u)), 0, n_nodes - 4);
    const double t = u - b.cell;
    const double s = 1.0 - t;
    b.w = {s * s * s / 6.0, (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0,
           (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0, t * t * t / 6.0};
    b.d = {-0.5 * s * s, 1.5 * t * t - 2.0 * t, -1.5 * t * t + t + 0.5, 0.5 * t * t};
    b.dd = {s, 3.0 * t - 2.0, -3.0 * t + 1.0, t};
    for (int l = 0; l < 4; ++l) {
        b.d[l] /= spacing;
        b.dd[l] /= spacing * spacing;
    }
    return b;
}

struct PixelBasis {
    AxisBasis bx;  // columns
    AxisBasis by;  // rows
};

/// Per-pixel basis tables; every pixel shares its row/column tables.
struct BasisCache {
    std::vector<AxisBasis> cols;
    std::vector<AxisBasis> rows;

    explicit BasisCache(const DeformationField& f) {
        const Size2 size = f.image_size();
        for (int c = 0; c < size.width; ++c)
            cols.push_back(axis_basis(c, f.spacing(), f.grid_cols()));
        for (int r = 0; r < size.height; ++r)
            rows.push_back(axis_basis(r, f.spacing(), f.grid_rows()));
    }
};

struct Local {
    Displacement u;
    DisplacementGradient du;
    // Second derivatives of u_x and u_y: xx, xy, yy.
    std::array<double, 3> hx{};
    std::array<double, 3> hy{};
};

Local evaluate(const DeformationField& f, const AxisBasis& bx, const AxisBasis& by) {
    Local out;
    for (int l = 0; l < 4; ++l) {
        for (int m = 0; m < 4; ++m) {
            const Displacement& c = f.control(by.cell + l, bx.cell + m);
            const double w = by.w[l] * bx.w[m];
            const double wx = by.w[l] * bx.d[m];
            const double wy = by.d[l] * bx.w[m];
            const double wxx = by.w[l] * bx.dd[m];
            const double wxy = by.d[l] * bx.d[m];
            const double wyy = by.dd[l] * bx.w[m];
            out.u.x += w * c.x;
            out.u.y += w * c.y;
            out.du.xx += wx * c.x;
            out.du.xy += wy * c.x;
            out.du.yx += wx * c.y;
            out.du.yy += wy * c.y;
            out.hx[0] += wxx * c.x;
            out.hx[1] += wxy * c.x;
            out.hx[2] += wyy * c.x;
            out.hy[0] += wxx * c.y;
            out.hy[1] += wxy * c.y;
            out.hy[2] += wyy * c.y;
        }
    }
    return out;
}

double bending_density(const Local& l) {
    return l.hx[0] * l.hx[0] + 2.0 * l.hx[1] * l.hx[1] + l.hx[2] * l.hx[2] + l.hy[0] * l.hy[0] +
           2.0 * l.hy[1] * l.hy[1] + l.hy[2] * l.hy[2];
}

/// Bilinear sample with replicated borders.
double sample(const std::vector<double>& img, Size2 size, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(size.width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(size.height - 1));
    const int x0 = std::min(static_cast<int>(std::floor(x)), size.width - 1);
    const int y0 = std::min(static_cast<int>(std::floor(y)), size.height - 1);
    const int x1 = std::min(x0 + 1, size.width - 1);
    const int y1 = std::min(y0 + 1, size.height - 1);
    const double tx = x - x0, ty = y - y0;
    const auto at = [&](int r, int c) { return img[static_cast<std::size_t>(r) * size.width + c]; };
    return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
           ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
}

std::vector<double> to_double(const Image& img) {
    return {img.pixels().begin(), img.pixels().end()};
}

/// Central-difference image gradients (one-sided at the border).
void image_gradient(const std::vector<double>& img, Size2 size, std::vector<double>& gx,
                    std::vector<double>& gy) {
    gx.assign(img.size(), 0.0);
    gy.assign(img.size(), 0.0);
    const auto at = [&](int r, int c) { return img[static_cast<std::size_t>(r) * size.width + c]; };
    for (int r = 0; r < size.height; ++r) {
        for (int c = 0; c < size.width; ++c) {
            const int cl = std::max(c - 1, 0), cr = std::min(c + 1, size.width - 1);
            const int ru = std::max(r - 1, 0), rd = std::min(r + 1, size.height - 1);
            const std::size_t i = static_cast<std::size_t>(r) * size.width + c;
            gx[i] = cr > cl ? (at(r, cr) - at(r, cl)) / (cr - cl) : 0.0;
            gy[i] = rd > ru ? (at(rd, c) - at(ru, c)) / (rd - ru) : 0.0;
        }
    }
}

struct Level {
    Size2 size;
    std::vector<double> moving, fixed, grad_x, grad_y;
};

struct Evaluation {
    double objective = 0.0;
    double ssd = 0.0;
    std::vector<Displacement> gradient;
};

Evaluation evaluate_objective(const DeformationField& field, const BasisCache& cache,
                              const Level& level, double smoothness, bool with_gradient) {
    Evaluation ev;
    const Size2 size = level.size;
    const double inv_p = 1.0 / (static_cast<double>(size.height) * size.width);
    if (with_gradient) ev.gradient.assign(field.controls().size(), Displacement{});
    double ssd_sum = 0.0, bend_sum = 0.0;
    for (int r = 0; r < size.height; ++r) {
        const AxisBasis& by = cache.rows[r];
        for (int c = 0; c < size.width; ++c) {
            const AxisBasis& bx = cache.cols[c];
            const Local loc = evaluate(field, bx, by);
            const double px = c + loc.u.x, py = r + loc.u.y;
            const double res = sample(level.moving, size, px, py) -
                               level.fixed[static_cast<std::size_t>(r) * size.width + c];
            ssd_sum += res * res;
            bend_sum += bending_density(loc);
            if (!with_gradient) continue;
            const double gmx = 2.0 * res * sample(level.grad_x, size, px, py) * inv_p;
            const double gmy = 2.0 * res * sample(level.grad_y, size, px, py) * inv_p;
            const double k = 2.0 * smoothness * inv_p;
            for (int l = 0; l < 4; ++l) {
                for (int m = 0; m < 4; ++m) {
                    const double w = by.w[l] * bx.w[m];
                    const double wxx = by.w[l] * bx.dd[m];
                    const double wxy = by.d[l] * bx.d[m];
                    const double wyy = by.dd[l] * bx.w[m];
                    auto& g = ev.gradient[static_cast<std::size_t>(by.cell + l) * field.grid_cols() +
                                          bx.cell + m];
                    g.x += gmx * w + k * (loc.hx[0] * wxx + 2.0 * loc.hx[1] * wxy + loc.hx[2] * wyy);
                    g.y += gmy * w + k * (loc.hy[0] * wxx + 2.0 * loc.hy[1] * wxy + loc.hy[2] * wyy);
                }
            }
        }
    }
    ev.ssd = ssd_sum * inv_p;
    ev.objective = ev.ssd + smoothness * bend_sum * inv_p;
    if (!std::isfinite(ev.objective)) throw RegistrationDiverged("registration objective is not finite");
    return ev;
}

Level make_level(const Image& moving, const Image& fixed, double sigma) {
    Level lv;
    lv.size = moving.size();
    lv.moving = to_double(gaussian_blur(moving, sigma));
    lv.fixed = to_double(gaussian_blur(fixed, sigma));
    image_gradient(lv.moving, lv.size, lv.grad_x, lv.grad_y);
    return lv;
}

}  // namespace

// ---------------------------------------------------------------------------

DeformationField::DeformationField(Size2 image_size, double spacing)
    : size_(image_size), spacing_(spacing) {
    if (image_size.height <= 0 || image_size.width <= 0 || !(spacing > 0.0))
        throw ConfigError("deformation field needs a positive size and spacing");
    rows_ = static_cast<int>(std::floor((image_size.height - 1) / spacing)) + 4;
    cols_ = static_cast<int>(std::floor((image_size.width - 1) / spacing)) + 4;
    grid_.assign(static_cast<std::size_t>(rows_) * cols_, Displacement{});
}

DeformationField DeformationField::affine(Size2 image_size, double spacing,
                                          std::array<double, 4> a, Displacement t) {
    DeformationField f(image_size, spacing);
    for (int i = 0; i < f.rows_; ++i) {
        for (int j = 0; j < f.cols_; ++j) {
            const Displacement p = f.node_position(i, j);
            f.control(i, j) = {a[0] * p.x + a[1] * p.y + t.x, a[2] * p.x + a[3] * p.y + t.y};
        }
    }
    return f;
}

Displacement DeformationField::node_position(int i, int j) const {
    return {(j - 1) * spacing_, (i - 1) * spacing_};
}

Displacement DeformationField::displacement(double x, double y) const {
    return evaluate(*this, axis_basis(x, spacing_, cols_), axis_basis(y, spacing_, rows_)).u;
}

DisplacementGradient DeformationField::gradient(double x, double y) const {
    return evaluate(*this, axis_basis(x, spacing_, cols_), axis_basis(y, spacing_, rows_)).du;
}

std::vector<Displacement> DeformationField::dense() const {
    const BasisCache cache(*this);
    std::vector<Displacement> out;
    out.reserve(static_cast<std::size_t>(size_.height) * size_.width);
    for (int r = 0; r < size_.height; ++r)
        for (int c = 0; c < size_.width; ++c)
            out.push_back(evaluate(*this, cache.cols[c], cache.rows[r]).u);
    return out;
}

void DeformationField::translate(Displacement t) {
    for (auto& c : grid_) {
        c.x += t.x;
        c.y += t.y;
    }
}

void RegistrationConfig::validate() const {
    if (grid_spacing < 4.0) throw ConfigError("grid spacing must be at least 4 px");
    if (steps <= 0) throw ConfigError("registration steps must be positive");
    if (smoothness < 0.0) throw ConfigError("smoothness weight must be non-negative");
    if (!(step_size > 0.0)) throw ConfigError("step size must be positive");
    if (smoothing_sigmas.empty() || smoothing_sigmas.back() != 0.0)
        throw ConfigError("the last smoothing level must be unsmoothed (sigma 0)");
    if (margin_cells < 0) throw ConfigError("margin_cells must be non-negative");
}

double ssd(const Image& a, const Image& b) {
    if (a.size() != b.size()) throw InternalError("ssd: image sizes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels().size(); ++i) {
        const double d = static_cast<double>(a.pixels()[i]) - b.pixels()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.pixels().size());
}

Image warp(const Image& moving, const DeformationField& field) {
    if (moving.size() != field.image_size()) throw InternalError("warp: size mismatch");
    const auto src = to_double(moving);
    const auto dense = field.dense();
    Image out(moving.size(), moving.modality());
    for (int r = 0; r < moving.height(); ++r)
        for (int c = 0; c < moving.width(); ++c) {
            const auto& u = dense[static_cast<std::size_t>(r) * moving.width() + c];
            out.at(r, c) = static_cast<float>(sample(src, moving.size(), c + u.x, r + u.y));
        }
    return out;
}

double bending_energy(const DeformationField& field) {
    const BasisCache cache(field);
    const Size2 size = field.image_size();
    double sum = 0.0;
    for (int r = 0; r < size.height; ++r)
        for (int c = 0; c < size.width; ++c)
            sum += bending_density(evaluate(field, cache.cols[c], cache.rows[r]));
    return sum / (static_cast<double>(size.height) * size.width);
}

RegistrationResult register_ffd(const Image& moving, const Image& fixed,
                                const RegistrationConfig& cfg) {
    cfg.validate();
    if (moving.size() != fixed.size()) throw InternalError("register_ffd: image sizes differ");

    RegistrationResult result{DeformationField(fixed.size(), cfg.grid_spacing), 0.0, 0.0, {}, 0};
    DeformationField& field = result.field;
    const BasisCache cache(field);
    result.initial_ssd = ssd(moving, fixed);

    const int levels = static_cast<int>(cfg.smoothing_sigmas.size());
    for (int li = 0; li < levels; ++li) {
        const Level level = make_level(moving, fixed, cfg.smoothing_sigmas[li]);
        const int budget = cfg.steps / levels + (li == levels - 1 ? cfg.steps % levels : 0);
        Evaluation current = evaluate_objective(field, cache, level, cfg.smoothness, true);
        if (li == levels - 1) {
            // Never start the final level from a worse place than the identity.
            const DeformationField identity(fixed.size(), cfg.grid_spacing);
            const double id_obj =
                evaluate_objective(identity, cache, level, cfg.smoothness, false).objective;
            if (current.objective > id_obj) {
                field = identity;
                current = evaluate_objective(field, cache, level, cfg.smoothness, true);
            }
        }
        std::vector<double> history{current.objective};
        double step = cfg.step_size;
        for (int it = 0; it < budget && step >= kMinStep; ++it) {
            double gmax = 0.0;
            for (const auto& g : current.gradient) gmax = std::max(gmax, std::hypot(g.x, g.y));
            if (gmax == 0.0) break;
            DeformationField trial = field;
            auto ctrl = trial.controls();
            for (std::size_t k = 0; k < ctrl.size(); ++k) {
                ctrl[k].x -= step * current.gradient[k].x / gmax;
                ctrl[k].y -= step * current.gradient[k].y / gmax;
            }
            Evaluation next = evaluate_objective(trial, cache, level, cfg.smoothness, true);
            if (next.objective < current.objective) {
                field = std::move(trial);
                current = std::move(next);
                history.push_back(current.objective);
                ++result.accepted_steps;
                step = std::min(step * 1.25, 4.0 * cfg.step_size);
            } else {
                step *= 0.5;
            }
        }
        result.objective_history.push_back(std::move(history));
    }
    result.final_ssd = ssd(warp(moving, field), fixed);
    return result;
}

std::vector<double> jacobian_determinant(const DeformationField& field) {
    const BasisCache cache(field);
    const Size2 size = field.image_size();
    std::vector<double> det;
    det.reserve(static_cast<std::size_t>(size.height) * size.width);
    for (int r = 0; r < size.height; ++r) {
        for (int c = 0; c < size.width; ++c) {
            const auto g = evaluate(field, cache.cols[c], cache.rows[r]).du;
            det.push_back((1.0 + g.xx) * (1.0 + g.yy) - g.xy * g.yx);
        }
    }
    return det;
}

double deformation_score(const DeformationField& field, int margin_cells) {
    const auto det = jacobian_determinant(field);
    const Size2 size = field.image_size();
    int margin = static_cast<int>(std::ceil(margin_cells * field.spacing()));
    if (2 * margin >= size.height || 2 * margin >= size.width) margin = 0;
    double sum = 0.0;
    std::size_t n = 0;
    for (int r = margin; r < size.height - margin; ++r) {
        for (int c = margin; c < size.width - margin; ++c) {
            sum += std::min(std::abs(det[static_cast<std::size_t>(r) * size.width + c] - 1.0), 1.0);
            ++n;
        }
    }
    return sum / static_cast<double>(n);
}

Image shift_image(const Image& image, int dx, int dy) {
    Image out(image.size(), image.modality());
    for (int r = 0; r < image.height(); ++r)
        for (int c = 0; c < image.width(); ++c)
            out.at(r, c) = image.at(std::clamp(r - dy, 0, image.height() - 1),
                                    std::clamp(c - dx, 0, image.width() - 1));
    return out;
}

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0.0) return image;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += k[i + radius];
    }
    for (auto& v : k) v /= norm;
    const int h = image.height(), w = image.width();
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += k[i + radius] * image.at(r, std::clamp(c + i, 0, w - 1));
            tmp[static_cast<std::size_t>(r) * w + c] = s;
        }
    Image out(image.size(), image.modality());
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += k[i + radius] * tmp[static_cast<std::size_t>(std::clamp(r + i, 0, h - 1)) * w + c];
            out.at(r, c) = static_cast<float>(s);
        }
    return out;
}

RigidAlignment rigid_prealign(const Image& moving, const Image& fixed, int max_shift) {
    RigidAlignment best{0, 0, std::numeric_limits<double>::infinity()};
    for (int dy = -max_shift; dy <= max_shift; ++dy)
        for (int dx = -max_shift; dx <= max_shift; ++dx) {
            const double s = ssd(shift_image(moving, dx, dy), fixed);
            if (s < best.ssd) best = {dx, dy, s};
        }
    return best;
}

}  // namespace xmsynth::registration
