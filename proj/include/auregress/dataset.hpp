#pragma once

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include "auregress/renderer.hpp"
#include "auregress/threading.hpp"

namespace auregress {

inline std::uint64_t dataset_item_seed(std::uint64_t base, std::uint64_t index) {
    return base ^ (0x9E3779B97F4A7C15ull * (index + 1));
}

inline std::string dataset_item_name(std::int64_t i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%06" PRId64, i);
    return buf;
}

inline void write_params_csv(const std::filesystem::path& path, const std::vector<FacialParams>& rows,
                             const ParamSpaceConfig& cfg) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("dataset: cannot write " + path.string());
    f << "id,h1,h2";
    for (int i = 0; i < cfg.au_dim; ++i) f << ",au" << i;
    for (int i = 0; i < cfg.id_cont_dim; ++i) f << ",idc" << i;
    f << ",brow\n";
    char num[32];
    auto put = [&](double v) {
        std::snprintf(num, sizeof num, "%.17g", v);
        f << ',' << num;
    };
    for (std::size_t r = 0; r < rows.size(); ++r) {
        f << r;
        put(rows[r].pose[0]);
        put(rows[r].pose[1]);
        for (double v : rows[r].au) put(v);
        for (double v : rows[r].id) put(v);
        f << ',' << rows[r].brow_style << '\n';
    }
}

inline std::vector<FacialParams> read_params_csv(const std::filesystem::path& path,
                                                 const ParamSpaceConfig& cfg) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("dataset: cannot open " + path.string());
    std::string line;
    std::getline(f, line); // header
    std::vector<FacialParams> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<double> fields;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            fields.push_back(std::stod(line.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        const std::size_t want = 1 + 2 + cfg.au_dim + cfg.id_cont_dim + 1;
        if (fields.size() != want)
            throw std::runtime_error("dataset: row with " + std::to_string(fields.size()) +
                                     " fields, expected " + std::to_string(want));
        FacialParams p;
        p.pose = {fields[1], fields[2]};
        p.au.assign(fields.begin() + 3, fields.begin() + 3 + cfg.au_dim);
        p.id.assign(fields.begin() + 3 + cfg.au_dim, fields.begin() + 3 + cfg.au_dim + cfg.id_cont_dim);
        p.brow_style = static_cast<int>(fields.back());
        rows.push_back(std::move(p));
    }
    return rows;
}

// images/NNNNNN.png + masks/NNNNNN.png (class-indexed) + params.csv
inline std::vector<FacialParams> gen_dataset(const std::filesystem::path& dir, std::int64_t n,
                                             std::uint64_t seed, const ParamSpaceConfig& cfg,
                                             bool perturb = false, int threads = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    std::vector<FacialParams> rows(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        rows[static_cast<std::size_t>(i)] = sample_params(dataset_item_seed(seed, static_cast<std::uint64_t>(i)), cfg);

    parallel_for(n, threads, [&](std::int64_t i) {
        auto out = render(rows[static_cast<std::size_t>(i)], 0, cfg);
        Image img = out.image;
        if (perturb) {
            Rng prng(dataset_item_seed(seed ^ 0x70657274ull, static_cast<std::uint64_t>(i)));
            img = perturb_photometric(img, out.mask, prng);
        }
        const auto name = dataset_item_name(i);
        save_image_png(dir / "images" / (name + ".png"), img);
        save_mask_png(dir / "masks" / (name + ".png"), out.mask, cfg.image_size, cfg.image_size);
    });
    write_params_csv(dir / "params.csv", rows, cfg);
    return rows;
}

inline std::int64_t dataset_size(const std::filesystem::path& dir) {
    std::int64_t n = 0;
    while (std::filesystem::exists(dir / "images" / (dataset_item_name(n) + ".png"))) ++n;
    return n;
}

inline Image load_dataset_image(const std::filesystem::path& dir, std::int64_t i) {
    return load_image_png(dir / "images" / (dataset_item_name(i) + ".png"));
}

inline std::vector<std::uint8_t> load_dataset_mask(const std::filesystem::path& dir, std::int64_t i, int& h,
                                                   int& w) {
    return load_mask_png(dir / "masks" / (dataset_item_name(i) + ".png"), h, w);
}

} // namespace auregress
