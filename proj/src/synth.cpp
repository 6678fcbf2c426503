// Synthetic desk-scale dataset: bright Gaussian blobs on noise, fixations
// at blob centers, ground truth from the blurred fixations.

#include "eml/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "eml/net.hpp"

namespace eml::io {

double SynthConfig::blur_sigma() const {
    return sigma > 0.0 ? sigma : 19.0 * double(height) / 480.0;
}

Dataset synth_dataset(const SynthConfig& cfg) {
    if (cfg.count < 1) throw DegenerateInput("synth count must be >= 1");
    if (cfg.width < 8 || cfg.height < 8)
        throw ShapeMismatch("synth images must be at least 8x8");
    if (cfg.blobs_per_image < 1) throw DegenerateInput("blobs_per_image must be >= 1");

    std::mt19937_64 rng(cfg.seed);
    const int margin = std::max(2, std::min(cfg.width, cfg.height) / 10);
    const double blob_sigma = std::max(1.5, std::min(cfg.width, cfg.height) / 10.0);
    const double inv2s2 = 1.0 / (2.0 * blob_sigma * blob_sigma);

    Dataset data;
    data.reserve(cfg.count);
    for (int n = 0; n < cfg.count; ++n) {
        Sample s;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "img_%04d", n);
        s.id = idbuf;

        // Distinct blob centers away from the border.
        std::set<std::pair<int, int>> centers;
        while (int(centers.size()) < cfg.blobs_per_image) {
            const int x = margin + int(net::bounded(rng, std::uint64_t(cfg.width - 2 * margin)));
            const int y = margin + int(net::bounded(rng, std::uint64_t(cfg.height - 2 * margin)));
            centers.insert({x, y});
        }

        Grid img(cfg.width, cfg.height);
        for (auto& v : img.values()) v = 0.25 * net::uniform_unit(rng);
        for (const auto& [cx, cy] : centers) {
            const double amp = 0.7 + 0.3 * net::uniform_unit(rng);
            const int radius = int(std::ceil(4.0 * blob_sigma));
            const int x0 = std::max(0, cx - radius), x1 = std::min(cfg.width - 1, cx + radius);
            const int y0 = std::max(0, cy - radius), y1 = std::min(cfg.height - 1, cy + radius);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double d2 = double(x - cx) * (x - cx) + double(y - cy) * (y - cy);
                    img.at(x, y) += amp * std::exp(-d2 * inv2s2);
                }
        }
        for (auto& v : img.values()) v = std::min(v, 1.0);
        s.image = std::move(img);

        FixationRecord rec;
        rec.image_id = s.id;
        rec.width = cfg.width;
        rec.height = cfg.height;
        rec.fixations.assign(centers.begin(), centers.end());
        s.fixations = fixations_to_binary(rec);
        s.density = fixations_to_density(rec, cfg.blur_sigma());
        data.push_back(std::move(s));
    }
    return data;
}

DatasetManifest write_synth_dataset(const SynthConfig& cfg,
                                    const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const Dataset data = synth_dataset(cfg);

    DatasetManifest manifest;
    manifest.root = dir;
    manifest.sigma = cfg.blur_sigma();
    for (const auto& s : data) {
        ManifestEntry e;
        e.image = s.id + ".png";
        e.fixations = s.id + "_fix.txt";
        e.density = s.id + "_den.png";
        save_map_image(s.image, dir / e.image, 8);
        save_map_image(s.density.grid(), dir / e.density, 16);
        std::vector<std::pair<int, int>> fixations;
        for (int y = 0; y < s.fixations.height(); ++y)
            for (int x = 0; x < s.fixations.width(); ++x)
                if (s.fixations.at(x, y)) fixations.emplace_back(x, y);
        save_fixation_file(fixations, dir / e.fixations);
        manifest.entries.push_back(std::move(e));
    }
    manifest.save(dir / "manifest.json");
    return manifest;
}

} // namespace eml::io
