#pragma once

#include <algorithm>
#include <cmath>

#include "auregress/png_io.hpp"
#include "auregress/rng.hpp"
#include "auregress/tensor.hpp"

namespace auregress {

// H x W x 3 raster in [0,1], row-major HWC
struct Image {
    int h = 0, w = 0;
    std::vector<double> rgb;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), rgb(static_cast<std::size_t>(h_) * w_ * 3, 0.0) {}

    double& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
    double at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
};

// [N,3,H,W] leaf from a batch of images
inline TensorPtr tensor_from_images(const std::vector<const Image*>& batch, bool requires_grad = false) {
    const int n = static_cast<int>(batch.size());
    const int h = batch[0]->h, w = batch[0]->w;
    std::vector<double> v(static_cast<std::size_t>(n) * 3 * h * w);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    v[((static_cast<std::size_t>(i) * 3 + c) * h + y) * w + x] = batch[i]->at(y, x, c);
    return make_tensor({n, 3, h, w}, std::move(v), requires_grad);
}

inline TensorPtr tensor_from_image(const Image& img, bool requires_grad = false) {
    return tensor_from_images({&img}, requires_grad);
}

// sample n of a [N,3,H,W] tensor back to an image
inline Image image_from_tensor(const TensorPtr& t, std::int64_t n = 0) {
    const auto H = t->shape[2], W = t->shape[3];
    Image img(static_cast<int>(H), static_cast<int>(W));
    for (int c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x)
                img.at(static_cast<int>(y), static_cast<int>(x), c) =
                    t->value[((n * 3 + c) * H + y) * W + x];
    return img;
}

inline void save_image_png(const std::filesystem::path& path, const Image& img) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(img.h) * img.w * 3);
    for (std::size_t i = 0; i < px.size(); ++i)
        px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.rgb[i], 0.0, 1.0) * 255.0));
    write_png(path, img.w, img.h, 3, px.data());
}

inline Image load_image_png(const std::filesystem::path& path) {
    auto p = read_png(path);
    Image img(p.h, p.w);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const std::uint8_t v = p.channels == 1
                                           ? p.data[static_cast<std::size_t>(y) * p.w + x]
                                           : p.data[(static_cast<std::size_t>(y) * p.w + x) * p.channels + c];
                img.at(y, x, c) = v / 255.0;
            }
    return img;
}

inline void save_mask_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask, int h,
                          int w) {
    write_png(path, w, h, 1, mask.data());
}

inline std::vector<std::uint8_t> load_mask_png(const std::filesystem::path& path, int& h, int& w) {
    auto p = read_png(path);
    if (p.channels != 1) throw std::runtime_error("mask png must be grayscale: " + path.string());
    h = p.h;
    w = p.w;
    return p.data;
}

// Brightness/contrast jitter (+-10%), flat background tint, and pixel noise
// (sigma 0.02). Creates the train/deploy domain gap for the "real" image set.
inline Image perturb_photometric(const Image& img, const std::vector<std::uint8_t>& mask, Rng& rng) {
    const double contrast = 1.0 + rng.uniform(-0.1, 0.1);
    const double brightness = rng.uniform(-0.1, 0.1);
    double tint[3];
    for (auto& t : tint) t = rng.uniform(-0.15, 0.15);

    Image out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            const bool bg = mask[static_cast<std::size_t>(y) * img.w + x] == 0;
            for (int c = 0; c < 3; ++c) {
                double v = (img.at(y, x, c) - 0.5) * contrast + 0.5 + brightness;
                if (bg) v += tint[c];
                v += rng.normal(0.0, 0.02);
                out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    return out;
}

} // namespace auregress
