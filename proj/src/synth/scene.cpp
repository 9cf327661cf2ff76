// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>

#include "slotdet/rng.hpp"
#include "slotdet/synth.hpp"

namespace slotdet {

std::string_view to_string(Background b) {
    switch (b) {
        case Background::asphalt: return "asphalt";
        case Background::brick: return "brick";
        case Background::reflective: return "reflective";
        case Background::night: return "night";
    }
    return "asphalt";
}

Background parse_background(std::string_view s) {
    for (auto b : {Background::asphalt, Background::brick, Background::reflective, Background::night})
        if (to_string(b) == s) return b;
    throw std::invalid_argument("unknown background style '" + std::string(s) + "'");
}

void SceneConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("scene config: " + m); };
    if (image_w <= 0 || image_h <= 0) fail("image size must be positive");
    double total = 0;
    for (double p : slot_type_mix) {
        if (!(p >= 0.0)) fail("slot_type_mix entries must be non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) fail("slot_type_mix must sum to 1");
    if (!(occupied_prob >= 0.0 && occupied_prob <= 1.0)) fail("occupied_prob must lie in [0, 1]");
    auto check_range = [&](const std::pair<double, double>& r, const char* name) {
        if (!(r.first > 0.0 && r.first <= r.second)) fail(std::string(name) + " must satisfy 0 < lo <= hi");
    };
    check_range(entrance_length_range, "entrance_length_range");
    check_range(line_width_range, "line_width_range");
    check_range(slant_angle_range, "slant_angle_range");
    if (slant_angle_range.second >= 90.0) fail("slant_angle_range must stay below 90 degrees");
    // Entrance centres must land in distinct stride-32 cells and survive NMS.
    if (entrance_length_range.first <= 2.0 * kDefaultNmsDistance) fail("entrance length must exceed 2x the NMS distance");
    if (entrance_length_range.first < 1.5 * 32.0) fail("entrance length must be at least 1.5 cells (48 px)");
    if (!(parallel_stretch >= 1.0)) fail("parallel_stretch must be >= 1");
    if (!(noise_level >= 0.0 && noise_level <= 1.0)) fail("noise_level must lie in [0, 1]");
    if (background_styles.empty()) fail("background_styles must not be empty");
    if (max_slots < 1) fail("max_slots must be >= 1");
}

namespace {

constexpr double kMargin = 6.0;  // junctions stay this far from the border

struct Rgb {
    double r, g, b;
};

class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 0.0) {}

    int width() const { return w_; }
    int height() const { return h_; }
    double* at(int x, int y) { return &px_[(static_cast<std::size_t>(y) * w_ + x) * 3]; }

    void blend(int x, int y, const Rgb& c, double alpha) {
        if (alpha <= 0.0) return;
        alpha = std::min(alpha, 1.0);
        double* p = at(x, y);
        p[0] += alpha * (c.r - p[0]);
        p[1] += alpha * (c.g - p[1]);
        p[2] += alpha * (c.b - p[2]);
    }

    /// Anti-aliased thick segment.
    void line(Point2 a, Point2 b, double width, const Rgb& c) {
        const double r = 0.5 * width + 1.0;
        const int x0 = std::max(0, int(std::floor(std::min(a.x, b.x) - r)));
        const int x1 = std::min(w_ - 1, int(std::ceil(std::max(a.x, b.x) + r)));
        const int y0 = std::max(0, int(std::floor(std::min(a.y, b.y) - r)));
        const int y1 = std::min(h_ - 1, int(std::ceil(std::max(a.y, b.y) + r)));
        const Point2 d = b - a;
        const double len2 = d.x * d.x + d.y * d.y;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const Point2 p{x + 0.5, y + 0.5};
                double t = len2 > 0 ? ((p.x - a.x) * d.x + (p.y - a.y) * d.y) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double dist = distance(p, a + d * t);
                blend(x, y, c, 0.5 * width + 0.5 - dist);
            }
    }

    /// Anti-aliased convex polygon.
    void convex(std::span<const Point2> poly, const Rgb& c, double alpha = 1.0) {
        double area = 0;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const auto& p = poly[i];
            const auto& q = poly[(i + 1) % poly.size()];
            area += p.x * q.y - q.x * p.y;
        }
        const double sign = area >= 0 ? 1.0 : -1.0;
        double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
        for (const auto& p : poly) {
            minx = std::min(minx, p.x);
            maxx = std::max(maxx, p.x);
            miny = std::min(miny, p.y);
            maxy = std::max(maxy, p.y);
        }
        const int x0 = std::max(0, int(std::floor(minx)) - 1), x1 = std::min(w_ - 1, int(std::ceil(maxx)) + 1);
        const int y0 = std::max(0, int(std::floor(miny)) - 1), y1 = std::min(h_ - 1, int(std::ceil(maxy)) + 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const Point2 p{x + 0.5, y + 0.5};
                double inside = 1e300;
                for (std::size_t i = 0; i < poly.size(); ++i) {
                    const Point2 e = poly[(i + 1) % poly.size()] - poly[i];
                    const double len = norm(e);
                    if (len == 0) continue;
                    const Point2 v = p - poly[i];
                    inside = std::min(inside, sign * (e.x * v.y - e.y * v.x) / len);
                }
                blend(x, y, c, alpha * std::clamp(inside + 0.5, 0.0, 1.0));
            }
    }

    Image quantize() const {
        Image img{w_, h_, std::vector<std::uint8_t>(px_.size())};
        for (std::size_t i = 0; i < px_.size(); ++i)
            img.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(px_[i], 0.0, 255.0)));
        return img;
    }

    std::vector<double>& raw() { return px_; }

private:
    int w_, h_;
    std::vector<double> px_;
};

/// Bilinearly upsampled coarse random grid, values in [-1, 1].
std::vector<double> smooth_noise(Rng& rng, int w, int h, int cells) {
    const int gw = cells + 2, gh = cells + 2;
    std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
    for (auto& v : grid) v = rng.uniform(-1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = (x + 0.5) / w * cells, gy = (y + 0.5) / h * cells;
            const int ix = int(gx), iy = int(gy);
            const double fx = gx - ix, fy = gy - iy;
            auto g = [&](int i, int j) { return grid[static_cast<std::size_t>(j) * gw + i]; };
            out[static_cast<std::size_t>(y) * w + x] = (1 - fy) * ((1 - fx) * g(ix, iy) + fx * g(ix + 1, iy)) +
                                                       fy * ((1 - fx) * g(ix, iy + 1) + fx * g(ix + 1, iy + 1));
        }
    return out;
}

void paint_background(Canvas& cv, Background style, Rng& rng) {
    const int w = cv.width(), h = cv.height();
    const auto blotch = smooth_noise(rng, w, h, 6);
    Rgb base{};
    double blotch_amp = 14, grain = 9;
    switch (style) {
        case Background::asphalt:
        case Background::reflective: {
            const double g = rng.uniform(70, 115);
            base = {g, g + rng.uniform(-4, 4), g + rng.uniform(-3, 6)};
            break;
        }
        case Background::brick:
            base = {rng.uniform(115, 150), rng.uniform(85, 105), rng.uniform(70, 90)};
            blotch_amp = 8;
            grain = 6;
            break;
        case Background::night: {
            const double g = rng.uniform(22, 45);
            base = {g, g, g + rng.uniform(0, 8)};
            blotch_amp = 6;
            grain = 5;
            break;
        }
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = blotch_amp * blotch[static_cast<std::size_t>(y) * w + x] + rng.uniform(-grain, grain);
            double* p = cv.at(x, y);
            p[0] = base.r + v;
            p[1] = base.g + v;
            p[2] = base.b + v;
        }
    if (style == Background::brick) {
        // Running-bond paving, darker mortar.
        const double angle = rng.uniform(0, std::numbers::pi);
        const double bw = rng.uniform(16, 26), bh = bw * 0.5;
        const double ca = std::cos(angle), sa = std::sin(angle);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double u = ca * x + sa * y, v = -sa * x + ca * y;
                const double row = std::floor(v / bh);
                const double shift = std::fmod(row, 2.0) != 0.0 ? 0.5 * bw : 0.0;
                const double fu = std::fmod(u + shift + 1e4 * bw, bw), fv = v - row * bh;
                const double edge = std::min({fu, bw - fu, fv, bh - fv});
                const double shade = std::clamp(1.2 - edge, 0.0, 1.0);
                double* p = cv.at(x, y);
                for (int k = 0; k < 3; ++k) p[k] -= 28.0 * shade;
            }
    }
    if (style == Background::reflective || style == Background::night) {
        // Sheen from a wet surface or a lamp.
        const Point2 c{rng.uniform(0, w), rng.uniform(0, h)};
        const double sigma = rng.uniform(25, 60);
        const double amp = style == Background::reflective ? rng.uniform(60, 110) : rng.uniform(25, 50);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double d2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
                const double add = amp * std::exp(-d2 / (2 * sigma * sigma));
                double* p = cv.at(x, y);
                for (int k = 0; k < 3; ++k) p[k] += add;
            }
    }
}

Rgb paint_color(Rng& rng, Background style) {
    Rgb c = rng.bernoulli(0.25) ? Rgb{rng.uniform(215, 240), rng.uniform(185, 210), rng.uniform(50, 90)}
                                : Rgb{rng.uniform(215, 250), rng.uniform(215, 250), rng.uniform(210, 245)};
    if (style == Background::night) {
        const double k = rng.uniform(0.45, 0.65);
        c = {c.r * k, c.g * k, c.b * k};
    }
    return c;
}

Rgb vehicle_color(Rng& rng) {
    static constexpr Rgb palette[] = {{30, 30, 35},   {200, 200, 205}, {150, 20, 25},  {25, 45, 120},
                                      {120, 120, 125}, {235, 235, 230}, {40, 90, 50},   {170, 140, 60}};
    Rgb c = palette[rng.below(std::size(palette))];
    const double j = rng.uniform(-15, 15);
    return {c.r + j, c.g + j, c.b + j};
}

/// Parallelogram shrunk towards its centre by (su, sv) along its two edges.
std::array<Point2, 4> inset(const Point2& origin, const Point2& u, const Point2& v, double su, double sv) {
    const Point2 c = origin + u * 0.5 + v * 0.5;
    const Point2 hu = u * (0.5 * su), hv = v * (0.5 * sv);
    return {c - hu - hv, c + hu - hv, c + hu + hv, c - hu + hv};
}

SlotType pick_type(const SceneConfig& cfg, Rng& rng) {
    const double u = rng.uniform();
    if (u < cfg.slot_type_mix[0]) return SlotType::perpendicular;
    if (u < cfg.slot_type_mix[0] + cfg.slot_type_mix[1] || cfg.slot_type_mix[2] == 0.0) return SlotType::parallel;
    return SlotType::slanted;
}

bool inside(const Point2& p, const SceneConfig& cfg) {
    return p.x >= kMargin && p.y >= kMargin && p.x <= cfg.image_w - kMargin && p.y <= cfg.image_h - kMargin;
}

}  // namespace

SceneSample generate_scene(const SceneConfig& cfg, std::uint64_t index) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, index));

    const Background style = cfg.background_styles[rng.below(cfg.background_styles.size())];
    Canvas cv(cfg.image_w, cfg.image_h);
    paint_background(cv, style, rng);

    const SlotType type = pick_type(cfg, rng);
    const double width = rng.uniform(cfg.entrance_length_range.first, cfg.entrance_length_range.second);
    const double theta = rng.uniform(0, 2 * std::numbers::pi);
    const UnitVec2 eo = UnitVec2::from_angle(theta);

    double entrance = width, sep_angle = std::numbers::pi / 2, depth = 0;
    switch (type) {
        case SlotType::perpendicular: depth = width * rng.uniform(1.6, 2.0); break;
        case SlotType::parallel:
            entrance = width * cfg.parallel_stretch;
            depth = entrance * rng.uniform(0.42, 0.5);
            break;
        case SlotType::slanted: {
            const double a =
                rng.uniform(cfg.slant_angle_range.first, cfg.slant_angle_range.second) * std::numbers::pi / 180.0;
            sep_angle = rng.bernoulli(0.5) ? a : std::numbers::pi - a;
            entrance = width / std::sin(a);
            depth = width * rng.uniform(1.6, 2.0);
            break;
        }
    }
    // Rotating eo counter-clockwise (screen coordinates) keeps the interior on
    // the canonical side.
    const UnitVec2 sep = eo.rotated(sep_angle);

    const int wanted = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_slots)));
    std::vector<Point2> junctions;
    for (int attempt = 0; attempt < 200 && junctions.empty(); ++attempt) {
        const Point2 centre{rng.uniform(kMargin, cfg.image_w - kMargin), rng.uniform(kMargin, cfg.image_h - kMargin)};
        for (int n = wanted; n >= 1; --n) {
            std::vector<Point2> js;
            for (int k = 0; k <= n; ++k) js.push_back(centre + eo.vec() * ((k - 0.5 * n) * entrance));
            if (std::all_of(js.begin(), js.end(), [&](const Point2& p) { return inside(p, cfg); })) {
                junctions = std::move(js);
                break;
            }
        }
    }
    if (junctions.empty()) throw std::invalid_argument("scene config: image too small to fit one slot");

    std::vector<ParkingSlot> slots;
    for (std::size_t k = 0; k + 1 < junctions.size(); ++k) {
        const Occupancy occ = rng.bernoulli(cfg.occupied_prob) ? Occupancy::occupied : Occupancy::vacant;
        slots.push_back({junctions[k], junctions[k + 1], sep, sep, type, occ});
    }

    // Vehicles first so the paint stays on top of any overhang.
    for (const auto& s : slots) {
        if (s.occupancy != Occupancy::occupied) continue;
        const Point2 u = s.j2 - s.j1, v = sep.vec() * depth;
        const auto body = inset(s.j1, u, v, rng.uniform(0.68, 0.8), rng.uniform(0.78, 0.9));
        cv.convex(body, vehicle_color(rng));
        const auto glass = inset(s.j1, u, v, 0.5, 0.25);
        const Point2 shift = v * (rng.bernoulli(0.5) ? 0.18 : -0.18);
        std::array<Point2, 4> g;
        for (std::size_t i = 0; i < 4; ++i) g[i] = glass[i] + shift;
        cv.convex(g, {35, 40, 50}, 0.85);
    }

    const Rgb paint = paint_color(rng, style);
    const double lw = rng.uniform(cfg.line_width_range.first, cfg.line_width_range.second);
    const double ext0 = rng.uniform(0, 60), ext1 = rng.uniform(0, 60);
    cv.line(junctions.front() - eo.vec() * ext0, junctions.back() + eo.vec() * ext1, lw, paint);
    for (const auto& j : junctions) cv.line(j, j + sep.vec() * depth, lw, paint);

    // Photometric noise: global gain and per-pixel Gaussian grain.
    const double gain = 1.0 + cfg.noise_level * rng.uniform(-0.2, 0.2);
    const double sigma = 12.0 * cfg.noise_level;
    for (auto& v : cv.raw()) v = v * gain + sigma * rng.normal();

    return {cv.quantize(), std::move(slots)};
}

}  // namespace slotdet
