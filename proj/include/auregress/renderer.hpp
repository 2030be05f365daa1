#pragma once

#include "auregress/image.hpp"
#include "auregress/params.hpp"

namespace auregress {

enum MaskClass : std::uint8_t {
    kMaskBackground = 0,
    kMaskFace = 1,
    kMaskBrows = 2,
    kMaskEyes = 3,
    kMaskNose = 4,
    kMaskMouth = 5,
};
constexpr int kNumMaskClasses = 6;

struct Landmark {
    double x = 0.0, y = 0.0;
};

struct RenderOutput {
    Image image;
    std::vector<std::uint8_t> mask; // class index per pixel; one-hot by construction
    // left eye, right eye, nose tip, left mouth corner, right mouth corner
    std::array<Landmark, 5> landmarks{};

    std::vector<double> prob_map(std::uint8_t cls) const {
        std::vector<double> p(mask.size(), 0.0);
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i] == cls) p[i] = 1.0;
        return p;
    }
};

namespace detail {

// Ellipse with an optional parabolic centerline warp (corners at |s|=1 lifted
// by `bend`) and a rotation given as explicit cos/sin. The horizontal center
// is stored as an offset from the 0.5 axis and rotations as shared cos/sin
// with negated sine on the mirrored side, so a left/right primitive pair
// evaluates bit-identically under pixel mirroring.
struct Prim {
    double ox, cy, rx, ry; // horizontal center = 0.5 + ox
    double bend = 0.0;
    double cos_t = 1.0, sin_t = 0.0;
    std::uint8_t cls = kMaskBackground;
    double col[3] = {0, 0, 0};

    // implicit field; negative inside. grad_mag approximates |grad f|.
    double field(double x, double y, double& grad_mag) const {
        const double lx0 = (x - 0.5) - ox, ly0 = y - cy;
        const double lx = lx0 * cos_t + ly0 * sin_t;
        const double ly = -lx0 * sin_t + ly0 * cos_t;
        const double s = lx / rx;
        const double lya = ly + bend * s * s;
        const double f = s * s + (lya / ry) * (lya / ry) - 1.0;
        const double gx = 2.0 * s / rx * (1.0 + 2.0 * bend * lya / (ry * ry));
        const double gy = 2.0 * lya / (ry * ry);
        grad_mag = std::sqrt(gx * gx + gy * gy) + 1e-12;
        return f;
    }
};

struct StyleSpec {
    const char* name;
    double face_rx, face_ry, face_cy;
    double eye_dx, eye_cy, eye_rx, eye_aspect;
    double brow_gap, brow_len, brow_th;
    double nose_cy, nose_rx, nose_ry;
    double mouth_cy, mouth_hw, mouth_ry;
    double skin_light[3], skin_dark[3];
    double brow_c[3], eye_c[3], mouth_c[3], bg[3];
    double nose_shade;
};

inline const std::vector<StyleSpec>& style_registry() {
    static const std::vector<StyleSpec> styles = {
        {"reference", 0.26, 0.34, 0.52, 0.12, 0.42, 0.050, 0.62, 0.075, 0.068, 0.013, 0.54, 0.030,
         0.085, 0.68, 0.10, 0.020,
         {0.92, 0.80, 0.68}, {0.62, 0.46, 0.36},
         {0.22, 0.15, 0.10}, {0.10, 0.09, 0.12}, {0.70, 0.28, 0.26}, {0.13, 0.15, 0.19},
         0.84},
        {"round", 0.31, 0.31, 0.50, 0.13, 0.40, 0.060, 0.80, 0.080, 0.075, 0.016, 0.52, 0.026,
         0.060, 0.66, 0.12, 0.025,
         {0.58, 0.74, 0.47}, {0.58, 0.74, 0.47},
         {0.13, 0.22, 0.10}, {0.08, 0.10, 0.06}, {0.55, 0.22, 0.20}, {0.11, 0.12, 0.14},
         0.80},
        {"slim", 0.20, 0.38, 0.52, 0.095, 0.40, 0.042, 0.55, 0.070, 0.060, 0.010, 0.56, 0.024,
         0.100, 0.70, 0.082, 0.016,
         {0.90, 0.87, 0.83}, {0.90, 0.87, 0.83},
         {0.30, 0.26, 0.22}, {0.12, 0.10, 0.10}, {0.62, 0.33, 0.32}, {0.16, 0.14, 0.17},
         0.88},
    };
    return styles;
}

// brow shape family shared by every character style
inline void brow_variant(int idx, int n_styles, double brow_len, double& bend, double& tilt,
                         double& th_mult) {
    const double t = n_styles > 1 ? static_cast<double>(idx) / (n_styles - 1) : 0.0;
    bend = brow_len * (0.9 - 1.5 * t);
    tilt = (idx % 2 == 0 ? 1.0 : -1.0) * 0.10 * (1.0 + t);
    th_mult = idx % 3 == 2 ? 1.3 : 1.0;
}

struct Scene {
    std::vector<Prim> prims; // back to front
    // composite groups, back to front; a mirrored pair shares one group so its
    // union coverage is order-free and the render stays bit-symmetric
    std::vector<std::pair<int, int>> groups;
    std::array<Landmark, 5> landmarks;
    double bg[3];
};

inline Scene build_scene(const FacialParams& p, int style, const ParamSpaceConfig& cfg) {
    const auto& spec = style_registry()[static_cast<std::size_t>(style)];
    const bool use_identity = style == 0;

    double face_rx = spec.face_rx, face_ry = spec.face_ry, face_cy = spec.face_cy;
    double eye_dx = spec.eye_dx, eye_cy = spec.eye_cy, eye_rx = spec.eye_rx, eye_aspect = spec.eye_aspect;
    double brow_th = spec.brow_th, brow_len = spec.brow_len;
    double nose_cy = spec.nose_cy, nose_rx = spec.nose_rx, nose_ry = spec.nose_ry;
    double mouth_cy = spec.mouth_cy, mouth_hw = spec.mouth_hw, mouth_ry = spec.mouth_ry;
    double skin[3];
    for (int c = 0; c < 3; ++c) skin[c] = spec.skin_light[c];
    int brow_idx = 0;

    if (use_identity) {
        auto dv = [&](int ch) { return ch < static_cast<int>(p.id.size()) ? p.id[ch] - 0.5 : 0.0; };
        face_rx *= 1.0 + 0.38 * dv(0);
        face_ry *= 1.0 + 0.30 * dv(1);
        eye_rx *= 1.0 + 0.60 * dv(2);
        eye_dx *= 1.0 + 0.50 * dv(3);
        eye_cy += 0.06 * dv(4);
        brow_th *= 1.0 + 0.90 * dv(5);
        nose_ry *= 1.0 + 0.55 * dv(6);
        nose_rx *= 1.0 + 0.60 * dv(7);
        mouth_hw *= 1.0 + 0.55 * dv(8);
        mouth_cy += 0.05 * dv(9);
        const double tone = 10 < static_cast<int>(p.id.size()) ? p.id[10] : 0.5;
        for (int c = 0; c < 3; ++c)
            skin[c] = spec.skin_light[c] + (spec.skin_dark[c] - spec.skin_light[c]) * tone;
        eye_aspect *= 1.0 + 0.55 * dv(11);
        brow_idx = p.brow_style;
    }

    // AU offsets on top of the identity-shaped neutral face; channel table in params.hpp
    auto au = [&](int ch) { return ch < static_cast<int>(p.au.size()) ? p.au[ch] : 0.0; };
    const double mouth_ox = 0.075 * (au(kAuJawRight) - au(kAuJawLeft));
    const double smile_bend = 0.10 * au(kAuSmile);
    mouth_ry += 0.085 * au(kAuJawDrop);
    mouth_cy += 0.040 * au(kAuJawDrop);
    const double brow_cy = eye_cy - spec.brow_gap - 0.075 * au(kAuBrowRaise);
    const double eye_ry = eye_rx * eye_aspect * (1.0 - 0.96 * au(kAuEyeClose));

    double brow_bend, brow_tilt, brow_th_mult;
    brow_variant(brow_idx, cfg.brow_styles, brow_len, brow_bend, brow_tilt, brow_th_mult);
    const double bc = std::cos(brow_tilt), bs = std::sin(brow_tilt);

    double nose_col[3];
    for (int c = 0; c < 3; ++c) nose_col[c] = skin[c] * spec.nose_shade;

    Scene sc;
    for (int c = 0; c < 3; ++c) sc.bg[c] = spec.bg[c];
    auto push = [&](double ox, double cy, double rx, double ry, double bend, double ct, double st,
                    std::uint8_t cls, const double* col) {
        Prim pr;
        pr.ox = ox;
        pr.cy = cy;
        pr.rx = rx;
        pr.ry = std::max(ry, 1e-4);
        pr.bend = bend;
        pr.cos_t = ct;
        pr.sin_t = st;
        pr.cls = cls;
        for (int c = 0; c < 3; ++c) pr.col[c] = col[c];
        sc.prims.push_back(pr);
    };

    push(0.0, face_cy, face_rx, face_ry, 0.0, 1.0, 0.0, kMaskFace, skin);
    push(0.0, nose_cy, nose_rx, nose_ry, 0.0, 1.0, 0.0, kMaskNose, nose_col);
    push(mouth_ox, mouth_cy, mouth_hw, mouth_ry, smile_bend, 1.0, 0.0, kMaskMouth, spec.mouth_c);
    push(-eye_dx, eye_cy, eye_rx, eye_ry, 0.0, 1.0, 0.0, kMaskEyes, spec.eye_c);
    push(eye_dx, eye_cy, eye_rx, eye_ry, 0.0, 1.0, 0.0, kMaskEyes, spec.eye_c);
    push(-eye_dx, brow_cy, brow_len, brow_th * brow_th_mult, brow_bend, bc, bs, kMaskBrows,
         spec.brow_c);
    push(eye_dx, brow_cy, brow_len, brow_th * brow_th_mult, brow_bend, bc, -bs, kMaskBrows,
         spec.brow_c);

    sc.groups = {{0, -1}, {1, -1}, {2, -1}, {3, 4}, {5, 6}};

    sc.landmarks = {Landmark{0.5 - eye_dx, eye_cy}, Landmark{0.5 + eye_dx, eye_cy},
                    Landmark{0.5, nose_cy + nose_ry},
                    Landmark{0.5 + mouth_ox - mouth_hw, mouth_cy - smile_bend},
                    Landmark{0.5 + mouth_ox + mouth_hw, mouth_cy - smile_bend}};
    return sc;
}

struct PoseMap {
    // forward: p = c + M (q - c) + t, with q in the frontal scene
    double m00, m01, m10, m11, tx, ty;
    double i00, i01, i10, i11; // inverse of M

    static PoseMap from(double yaw01, double pitch01) {
        const double yaw = (yaw01 - 0.5) * (3.14159265358979323846 / 3.0);   // +-30 deg
        const double pitch = (pitch01 - 0.5) * (3.14159265358979323846 / 3.0);
        constexpr double kShear = 0.18, kShift = 0.22;
        PoseMap pm;
        pm.m00 = std::cos(yaw);
        pm.m01 = kShear * std::sin(yaw);
        pm.m10 = kShear * std::sin(pitch);
        pm.m11 = std::cos(pitch);
        pm.tx = kShift * std::sin(yaw);
        pm.ty = kShift * std::sin(pitch);
        const double det = pm.m00 * pm.m11 - pm.m01 * pm.m10;
        pm.i00 = pm.m11 / det;
        pm.i01 = -pm.m01 / det;
        pm.i10 = -pm.m10 / det;
        pm.i11 = pm.m00 / det;
        return pm;
    }

    bool identity() const { return m01 == 0.0 && m10 == 0.0 && tx == 0.0 && ty == 0.0 && m00 == 1.0 && m11 == 1.0; }

    void inverse(double x, double y, double& qx, double& qy) const {
        const double dx = x - 0.5 - tx, dy = y - 0.5 - ty;
        qx = 0.5 + i00 * dx + i01 * dy;
        qy = 0.5 + i10 * dx + i11 * dy;
    }
    void forward(double x, double y, double& px, double& py) const {
        const double dx = x - 0.5, dy = y - 0.5;
        px = 0.5 + m00 * dx + m01 * dy + tx;
        py = 0.5 + m10 * dx + m11 * dy + ty;
    }
};

} // namespace detail

inline int num_styles() { return static_cast<int>(detail::style_registry().size()); }

inline RenderOutput render(const FacialParams& p, int style, const ParamSpaceConfig& cfg) {
    validate_params(p, cfg);
    if (style < 0 || style >= num_styles())
        throw std::out_of_range("render: unknown style id " + std::to_string(style));

    const int S = cfg.image_size;
    auto sc = detail::build_scene(p, style, cfg);
    const auto pose = detail::PoseMap::from(p.pose[0], p.pose[1]);
    const bool frontal = pose.identity();
    const double aa = 1.4; // anti-alias band in pixels

    RenderOutput out;
    out.image = Image(S, S);
    out.mask.assign(static_cast<std::size_t>(S) * S, kMaskBackground);

    const auto n_prims = sc.prims.size();
    std::vector<double> f(n_prims), gm(n_prims);
    for (int y = 0; y < S; ++y) {
        const double py = (y + 0.5) / S;
        for (int x = 0; x < S; ++x) {
            const double px = (x + 0.5) / S;
            double qx = px, qy = py;
            if (!frontal) pose.inverse(px, py, qx, qy);

            for (std::size_t i = 0; i < n_prims; ++i) f[i] = sc.prims[i].field(qx, qy, gm[i]);
            auto coverage = [&](int i) {
                const double d_px = f[static_cast<std::size_t>(i)] / gm[static_cast<std::size_t>(i)] * S;
                return std::clamp(0.5 - d_px / aa, 0.0, 1.0);
            };

            double col[3] = {sc.bg[0], sc.bg[1], sc.bg[2]};
            for (const auto& [a_idx, b_idx] : sc.groups) {
                double alpha = coverage(a_idx);
                if (b_idx >= 0) {
                    const double ab = coverage(b_idx);
                    alpha = alpha + ab - alpha * ab;
                }
                if (alpha <= 0.0) continue;
                for (int c = 0; c < 3; ++c)
                    col[c] += (sc.prims[static_cast<std::size_t>(a_idx)].col[c] - col[c]) * alpha;
            }
            for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = std::clamp(col[c], 0.0, 1.0);

            for (std::size_t i = n_prims; i-- > 0;) {
                if (f[i] <= 0.0) {
                    out.mask[static_cast<std::size_t>(y) * S + x] = sc.prims[i].cls;
                    break;
                }
            }
        }
    }

    for (std::size_t i = 0; i < sc.landmarks.size(); ++i) {
        double lx, ly;
        pose.forward(sc.landmarks[i].x, sc.landmarks[i].y, lx, ly);
        out.landmarks[i] = {std::clamp(lx * S - 0.5, 0.0, S - 1.0), std::clamp(ly * S - 0.5, 0.0, S - 1.0)};
    }
    return out;
}

inline RenderOutput base_face(const ParamSpaceConfig& cfg) { return render(base_params(cfg), 0, cfg); }

// Target style keeps its own canonical identity (including the canonical
// brow); only pose and AU are carried over.
inline RenderOutput retarget(const FacialParams& p, int target_style, const ParamSpaceConfig& cfg) {
    if (target_style < 0 || target_style >= num_styles())
        throw std::out_of_range("retarget: unknown style id " + std::to_string(target_style));
    FacialParams q = base_params(cfg);
    q.pose = p.pose;
    q.au = p.au;
    return render(q, target_style, cfg);
}

} // namespace auregress
