#include "epg/optics.hpp"

#include <cmath>

namespace epg {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

Vec2 rotate(const Vec2& p, double deg) {
    const double c = std::cos(deg * kDegToRad), s = std::sin(deg * kDegToRad);
    return {c * p.u - s * p.v, s * p.u + c * p.v};
}

// Midpoint of the closest-approach segment of two lines. gap_um reports the
// segment length (skewness); degenerate near-parallel lines throw.
Vec3 closest_approach(const Vec3& p1, const Vec3& d1, const Vec3& p2, const Vec3& d2,
                      double* gap_um) {
    const Vec3 w = p1 - p2;
    const double a = d1.dot(d1), b = d1.dot(d2), c = d2.dot(d2);
    const double d = d1.dot(w), e = d2.dot(w);
    const double den = a * c - b * b;
    if (std::abs(den) < 1e-14 * a * c)
        throw GeometryError("closest_approach: near-parallel rays");
    const double s = (b * e - c * d) / den;
    const double t = (a * e - b * d) / den;
    const Vec3 q1 = p1 + d1 * s;
    const Vec3 q2 = p2 + d2 * t;
    if (gap_um) *gap_um = (q1 - q2).norm();
    return (q1 + q2) * 0.5;
}

struct LensImage {
    Vec2 transverse_um;
    double z_um;  // axial position of the image point
};

// Ideal thin lens on the e3 axis at z = d_focus, focal length f_lens.
LensImage lens_project(const Vec3& obj, const OpticsConfig& cfg) {
    const double z_lens = cfg.d_focus_mm * 1000.0;
    const double f = cfg.f_lens_mm * 1000.0;
    const double s_o = z_lens - obj.z;
    if (std::abs(s_o - f) < 1e-9) throw GeometryError("lens_project: object at focal plane");
    const double s_i = 1.0 / (1.0 / f - 1.0 / s_o);
    const double m = -s_i / s_o;
    return {{m * obj.x, m * obj.y}, z_lens + s_i};
}

// Chief collection point on the mirror: a ray from the focus straight up
// reflects at (0, 2f, 0).
bool aperture_ok(const Vec3& mirror_point, const OpticsConfig& cfg) {
    const double f = cfg.f_mirror_um;
    const Vec3 chief{0.0, 2.0 * f, 0.0};
    const Vec3 d = mirror_point - chief;
    // Lens magnification for the mirror plane (object near z ~ 0).
    const LensImage img = lens_project(chief, cfg);
    const double m = std::abs(img.transverse_um.v / (2.0 * f));
    const double r_img_um = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z) * m;
    return r_img_um <= cfg.aperture_radius_mm * 1000.0;
}

}  // namespace

int mask_value(double x_um, double y_um, const MaskSpec& spec) {
    const double s = x_um * spec.grating_axis.u + y_um * spec.grating_axis.v;
    const double g = spec.period_um;
    double m = std::fmod(s + spec.offset_um, g);
    if (m < 0) m += g;
    return m < g / 2.0 ? 0 : 1;
}

Reflection reflect_on_paraboloid(const Vec3& o, const Vec3& dir, double f) {
    const Vec3 d = dir.normalized();
    // Surface: x^2 + y^2 = 4 f z + 4 f^2. Substitute the ray o + t d.
    const double A = d.x * d.x + d.y * d.y;
    const double B = 2.0 * (o.x * d.x + o.y * d.y) - 4.0 * f * d.z;
    const double C = o.x * o.x + o.y * o.y - 4.0 * f * o.z - 4.0 * f * f;
    double t;
    if (A < 1e-18) {
        if (std::abs(B) < 1e-300) throw GeometryError("reflect_on_paraboloid: ray misses surface");
        t = -C / B;
    } else {
        const double disc = B * B - 4.0 * A * C;
        if (disc < 0) throw GeometryError("reflect_on_paraboloid: ray misses surface");
        const double sq = std::sqrt(disc);
        const double t1 = (-B - sq) / (2.0 * A);
        const double t2 = (-B + sq) / (2.0 * A);
        // Prefer the nearest forward intersection.
        if (t1 > 1e-12) t = t1;
        else if (t2 > 1e-12) t = t2;
        else throw GeometryError("reflect_on_paraboloid: no forward intersection");
    }
    const Vec3 p = o + d * t;
    Vec3 n{-p.x / (2.0 * f), -p.y / (2.0 * f), 1.0};
    n = n.normalized();
    const Vec3 r = d - n * (2.0 * d.dot(n));
    return {p, r.normalized()};
}

namespace {

// Virtual image of a lab-frame point in the paraboloid via the two-ray
// construction: the axis-parallel line through the point reflects through
// the focus; the line through the point and the focus reflects parallel to
// the axis; the reflected lines intersect at the image.
Vec3 mirror_virtual_image(const Vec3& p, double f, Vec3* focus_ray_hit) {
    const double rho2 = p.x * p.x + p.y * p.y;
    if (rho2 < 1e-12) throw GeometryError("mirror_virtual_image: point on the mirror axis");
    const double r = std::sqrt(p.z * p.z + rho2);
    if (r < 1e-9) throw GeometryError("mirror_virtual_image: point at the focal point");
    const double zA = rho2 / (4.0 * f) - f;
    const double T = (2.0 * f / rho2) * (p.z + r);
    if (focus_ray_hit) *focus_ray_hit = p * T;
    return {T * p.x, T * p.y, T * zA};
}

}  // namespace

MaskPoint map_position_checked(const Vec2& sample_um, const OpticsConfig& cfg) {
    cfg.validate();
    const Vec3 beam = cfg.beam_pos_frame();
    const Vec3 p = beam + Vec3{sample_um.u, 0.0, sample_um.v};
    Vec3 hit;
    const Vec3 v = mirror_virtual_image(p, cfg.f_mirror_um, &hit);
    const LensImage img = lens_project(v, cfg);
    return {{img.transverse_um.u, img.transverse_um.v}, aperture_ok(hit, cfg)};
}

Vec2 map_position_to_mask(const Vec2& sample_um, const OpticsConfig& cfg) {
    return map_position_checked(sample_um, cfg).mask_um;
}

MaskPoint map_wavevector_checked(const Vec2& k_invum, const OpticsConfig& cfg) {
    cfg.validate();
    const double k0 = cfg.photon_k0();
    const double s1 = k_invum.u / k0;
    const double s3 = k_invum.v / k0;
    const double s2sq = 1.0 - s1 * s1 - s3 * s3;
    if (s2sq <= 0) throw GeometryError("map_wavevector_to_mask: wavevector outside acceptance");
    const Vec3 d{s1, std::sqrt(s2sq), s3};

    const Vec3 beam = cfg.beam_pos_frame();
    if (beam.norm() < 1e-9)
        throw GeometryError("map_wavevector_to_mask: beam at the focal point (rays coincide)");
    const Reflection a = reflect_on_paraboloid(beam, d, cfg.f_mirror_um);
    const Reflection b = reflect_on_paraboloid({0, 0, 0}, d, cfg.f_mirror_um);
    double gap = 0.0;
    const Vec3 fpoint = closest_approach(a.point, a.direction, b.point, b.direction, &gap);
    if (gap > 1.0)  // skew-ray conditioning threshold, um
        throw GeometryError("map_wavevector_to_mask: ill-conditioned skew intersection");
    const LensImage img = lens_project(fpoint, cfg);
    return {{img.transverse_um.u, img.transverse_um.v}, aperture_ok(b.point, cfg)};
}

Vec2 map_wavevector_to_mask(const Vec2& k_invum, const OpticsConfig& cfg) {
    return map_wavevector_checked(k_invum, cfg).mask_um;
}

double position_magnification(const OpticsConfig& cfg) {
    const double h = 1e-3;
    Vec2 du_p = map_position_to_mask({h, 0}, cfg), du_m = map_position_to_mask({-h, 0}, cfg);
    Vec2 dv_p = map_position_to_mask({0, h}, cfg), dv_m = map_position_to_mask({0, -h}, cfg);
    const double j11 = (du_p.u - du_m.u) / (2 * h), j21 = (du_p.v - du_m.v) / (2 * h);
    const double j12 = (dv_p.u - dv_m.u) / (2 * h), j22 = (dv_p.v - dv_m.v) / (2 * h);
    // Largest singular value of the 2x2 Jacobian.
    const double a = j11 * j11 + j21 * j21, bq = j12 * j12 + j22 * j22;
    const double c = j11 * j12 + j21 * j22;
    const double tr = a + bq, det = a * bq - c * c;
    return std::sqrt(0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det))));
}

EffectiveMask effective_mask(Basis basis, const MaskSpec& spec, const OpticsConfig& cfg,
                             const Calibration& calib, int grid, int supersample) {
    spec.validate();
    cfg.validate();
    calib.validate();
    EffectiveMask out;
    out.basis = basis;
    out.values = Grid(grid, grid);
    out.validity = Grid(grid, grid);
    const double scale = calib.scale(basis);
    const double phi = basis == Basis::kPosition ? cfg.phi_x_deg : cfg.phi_k_deg;
    const double sign = basis == Basis::kMomentum ? -1.0 : 1.0;
    const double c0 = kCenterPx;
    const int ss = std::max(1, supersample);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < grid; ++y) {
        for (int x = 0; x < grid; ++x) {
            int acc = 0, nvalid = 0;
            for (int sy = 0; sy < ss; ++sy) {
                for (int sx = 0; sx < ss; ++sx) {
                    const double px = x + (ss > 1 ? (sx + 0.5) / ss - 0.5 : 0.0);
                    const double py = y + (ss > 1 ? (sy + 0.5) / ss - 0.5 : 0.0);
                    const Vec2 phys{(px - c0) * scale, (py - c0) * scale};
                    const Vec2 rot = rotate(phys, phi);
                    const Vec2 q{sign * rot.u, sign * rot.v};
                    try {
                        const MaskPoint mp = basis == Basis::kPosition
                                                 ? map_position_checked(q, cfg)
                                                 : map_wavevector_checked(q, cfg);
                        if (!mp.in_aperture) continue;
                        acc += mask_value(mp.mask_um.u, mp.mask_um.v, spec);
                        ++nvalid;
                    } catch (const GeometryError&) {
                        // flagged invalid below
                    }
                }
            }
            if (nvalid == ss * ss) {
                out.validity.at(x, y) = 1.0;
                out.values.at(x, y) = (2 * acc >= nvalid) ? 1.0 : 0.0;
            }
        }
    }
    return out;
}

}  // namespace epg
