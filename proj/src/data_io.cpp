#include "eml/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eml/net.hpp"

namespace eml::io {

using json = nlohmann::ordered_json;

DensityMap fixations_to_density(const FixationRecord& rec, double sigma) {
    if (rec.fixations.empty())
        throw EmptyFixations("fixations_to_density needs >= 1 fixation");
    if (!(sigma > 0.0)) throw DegenerateInput("sigma must be > 0");
    Grid g(rec.width, rec.height);
    const double radius = 4.0 * sigma;
    const double r2 = radius * radius;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (const auto& [fx, fy] : rec.fixations) {
        if (fx < 0 || fx >= rec.width || fy < 0 || fy >= rec.height)
            throw OutOfBounds("fixation (" + std::to_string(fx) + "," + std::to_string(fy) +
                              ") outside " + std::to_string(rec.width) + "x" +
                              std::to_string(rec.height));
        const int x0 = std::max(0, int(std::floor(fx - radius)));
        const int x1 = std::min(rec.width - 1, int(std::ceil(fx + radius)));
        const int y0 = std::max(0, int(std::floor(fy - radius)));
        const int y1 = std::min(rec.height - 1, int(std::ceil(fy + radius)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double d2 = double(x - fx) * (x - fx) + double(y - fy) * (y - fy);
                if (d2 > r2) continue;
                g.at(x, y) += std::exp(-d2 * inv2s2);
            }
        }
    }
    return normalize_sum(DensityMap(std::move(g)));
}

FixationMap fixations_to_binary(const FixationRecord& rec) {
    FixationMap f(rec.width, rec.height);
    for (const auto& [x, y] : rec.fixations) f.set(x, y, 1); // set() bounds-checks
    return f;
}

std::pair<Grid, PadGeometry> pad_to_ratio(const Grid& image, int ratio_w, int ratio_h) {
    if (ratio_w < 1 || ratio_h < 1) throw DegenerateInput("ratio must be positive");
    const int w = image.width(), h = image.height();
    PadGeometry pad;
    // Pad only the deficient axis; round to the nearest pixel.
    if (std::int64_t(w) * ratio_h < std::int64_t(h) * ratio_w) {
        const int target_w = int(std::llround(double(h) * ratio_w / ratio_h));
        const int extra = std::max(0, target_w - w);
        pad.left = extra / 2;
        pad.right = extra - pad.left;
    } else if (std::int64_t(w) * ratio_h > std::int64_t(h) * ratio_w) {
        const int target_h = int(std::llround(double(w) * ratio_h / ratio_w));
        const int extra = std::max(0, target_h - h);
        pad.top = extra / 2;
        pad.bottom = extra - pad.top;
    }
    if (!pad.any()) return {image, pad};
    Grid out(w + pad.left + pad.right, h + pad.top + pad.bottom);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(x + pad.left, y + pad.top) = image.at(x, y);
    return {std::move(out), pad};
}

Grid crop(const Grid& padded, const PadGeometry& pad) {
    const int w = padded.width() - pad.left - pad.right;
    const int h = padded.height() - pad.top - pad.bottom;
    if (w < 1 || h < 1) throw ShapeMismatch("crop geometry larger than image");
    Grid out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(x, y) = padded.at(x + pad.left, y + pad.top);
    return out;
}

DensityMap resize_map(const DensityMap& map, int target_w, int target_h) {
    const bool was_normalized = std::abs(map.sum() - 1.0) <= 1e-6;
    net::FeatureStack resized =
        net::bilinear_resize(net::FeatureStack::from_grid(map.grid()), target_w, target_h);
    DensityMap out(resized.to_grid());
    if (was_normalized) out = normalize_sum(out);
    return out;
}

std::vector<std::pair<int, int>> load_fixation_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::vector<std::pair<int, int>> fixations;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        long x, y;
        if (!(ls >> x >> y))
            throw UnsupportedFormat("bad fixation line '" + line + "' in " + path.string());
        fixations.emplace_back(int(x), int(y));
    }
    return fixations;
}

void save_fixation_file(const std::vector<std::pair<int, int>>& fixations,
                        const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    for (const auto& [x, y] : fixations) out << x << '\t' << y << '\n';
    if (!out) throw IoFailure("short write to " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open manifest " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw UnsupportedFormat("manifest is not valid JSON");
    DatasetManifest m;
    m.root = path.parent_path();
    m.sigma = j.value("sigma", 0.0);
    m.split = j.value("split", "train");
    for (const auto& e : j.value("entries", json::array())) {
        m.entries.push_back({e.value("image", ""), e.value("fixations", ""),
                             e.value("density", "")});
    }
    return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    json j;
    j["sigma"] = sigma;
    j["split"] = split;
    j["entries"] = json::array();
    for (const auto& e : entries) {
        json je;
        je["image"] = e.image;
        je["fixations"] = e.fixations;
        if (!e.density.empty()) je["density"] = e.density;
        j["entries"].push_back(je);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoFailure("short write to " + path.string());
}

namespace {

std::string entry_id(const std::string& image_path) {
    std::string stem = std::filesystem::path(image_path).stem().string();
    return stem;
}

} // namespace

Dataset load_dataset(const DatasetManifest& manifest) {
    Dataset data;
    for (const auto& e : manifest.entries) {
        const auto image_path = manifest.root / e.image;
        const auto fix_path = manifest.root / e.fixations;
        if (!std::filesystem::exists(image_path))
            throw IoFailure("missing image " + image_path.string());
        if (!std::filesystem::exists(fix_path))
            throw IoFailure("missing fixation file " + fix_path.string());

        Sample s;
        s.id = entry_id(e.image);
        s.image = load_map_image(image_path);

        FixationRecord rec;
        rec.image_id = s.id;
        rec.width = s.image.width();
        rec.height = s.image.height();
        rec.fixations = load_fixation_file(fix_path);
        s.fixations = fixations_to_binary(rec);

        if (!e.density.empty()) {
            const auto den_path = manifest.root / e.density;
            if (!std::filesystem::exists(den_path))
                throw IoFailure("missing density map " + den_path.string());
            Grid den = load_map_image(den_path);
            if (den.width() != s.image.width() || den.height() != s.image.height())
                throw ShapeMismatch("density map " + e.density +
                                    " does not match its image size");
            s.density = normalize_sum(DensityMap(std::move(den)));
        } else {
            if (!(manifest.sigma > 0.0))
                throw DegenerateInput("manifest without density files needs sigma > 0");
            s.density = fixations_to_density(rec, manifest.sigma);
        }
        data.push_back(std::move(s));
    }
    return data;
}

} // namespace eml::io
